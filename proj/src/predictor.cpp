#include "ssnst/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

#include "ssnst/error.hpp"
#include "ssnst/parallel.hpp"

namespace ssnst {

namespace {

constexpr std::size_t kJointNoiseMaxBatch = 200;

std::vector<std::size_t> default_observed_rows(const FittedContext& ctx) {
  if (!ctx.observed_rows.empty()) return ctx.observed_rows;
  std::vector<std::size_t> rows;
  for (Eigen::Index s = 0; s < ctx.panel.sites(); ++s)
    if (ctx.panel.observed.row(s).any()) rows.push_back(static_cast<std::size_t>(s));
  if (rows.empty()) fail(ErrorCode::EmptyHoldout, "no observed site to krige from");
  return rows;
}

DistanceBundle pair_bundle(const FittedContext& ctx, std::span<const Site> rows, std::span<const Site> cols) {
  return ctx.network ? make_bundle(*ctx.network, rows, cols) : make_euclidean_bundle(rows, cols);
}

void validate_task(const FittedContext& ctx, const PredictionTask& task) {
  if (task.sites.empty()) fail(ErrorCode::ConfigInvalid, "no prediction sites");
  if (task.batch_size == 0) fail(ErrorCode::ConfigInvalid, "batch size must be positive");
  if (static_cast<Eigen::Index>(task.X.size()) != ctx.panel.steps())
    fail(ErrorCode::CovariateMissing, "prediction covariates must cover every time step");
  const auto P = static_cast<Eigen::Index>(task.sites.size());
  for (const auto& Xt : task.X) {
    if (Xt.rows() != P || Xt.cols() != ctx.panel.covariates())
      fail(ErrorCode::CovariateMissing, "prediction covariates do not match the fitted design");
    if (!Xt.allFinite()) fail(ErrorCode::CovariateMissing, "prediction covariates contain missing values");
  }
  if (ctx.sites.size() != static_cast<std::size_t>(ctx.panel.sites()))
    fail(ErrorCode::DimensionMismatch, "fitted sites do not match the panel");
}

// Per-draw quantities shared by every batch of prediction sites.
class DrawKriger {
 public:
  DrawKriger(const FittedContext& ctx, const PredictionTask& task, KrigingMethod method,
             const std::vector<std::size_t>& obs_rows, const DistanceBundle& obs_bundle, const ModelParams& params,
             const Eigen::MatrixXd& y)
      : ctx_(ctx), task_(task), method_(method), params_(params) {
    const ModelSpec& spec = ctx.layout.spec();
    cs_ = covariance_spec(params, spec);
    nugget_ = cs_.nugget;
    sill_ = cs_.total_sill() - cs_.nugget;
    const auto O = static_cast<Eigen::Index>(obs_rows.size());
    const auto T = ctx.panel.steps();

    Eigen::MatrixXd V = cov_mixture(cs_, obs_bundle);
    V.diagonal().array() += nugget_;
    v_ = assert_psd(V);

    Eigen::MatrixXd resid(O, T);
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::VectorXd mu = ctx.panel.X[static_cast<std::size_t>(t)] * params.beta;
      for (Eigen::Index i = 0; i < O; ++i) {
        const auto s = static_cast<Eigen::Index>(obs_rows[static_cast<std::size_t>(i)]);
        resid(i, t) = y(s, t) - mu(s);
      }
    }

    const auto kind = spec.temporal.kind;
    if (method == KrigingMethod::separable) {
      if (kind != TemporalCase::ar)
        fail(ErrorCode::UnsupportedCase, "separable kriging needs a common phi; use the recursion");
      phi_ = params.temporal.at(0);
      kappa1_ = 1.0 / (1.0 - phi_ * phi_);
      const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(resid.data(), resid.size());
      const Eigen::VectorXd w = separable_precision_apply(v_, phi_, static_cast<int>(T), v);
      weights_ = Eigen::Map<const Eigen::MatrixXd>(w.data(), O, T);
      ar1_ = ar1_covariance(phi_, static_cast<int>(T));
      return;
    }

    if (kind == TemporalCase::var_sitewise)
      fail(ErrorCode::Case2aUnsupported, "site-specific phi has no value at new sites");
    if (kind == TemporalCase::var_2nn)
      fail(ErrorCode::UnsupportedCase, "neighbour transition matrices are not defined at new sites");
    const Eigen::MatrixXd phi_full = build_phi(spec.temporal, params.temporal, spec.phi_context);
    Eigen::VectorXd phi_obs(O);
    for (Eigen::Index i = 0; i < O; ++i) {
      const auto s = static_cast<Eigen::Index>(obs_rows[static_cast<std::size_t>(i)]);
      phi_obs(i) = phi_full(s, s);
    }
    if (kind == TemporalCase::ar) {
      phi_ = params.temporal.at(0);
      kappa1_ = 1.0 / (1.0 - phi_ * phi_);
    } else {
      if (task.phi_covariates.rows() != static_cast<Eigen::Index>(task.sites.size()) ||
          task.phi_covariates.cols() != spec.phi_context.covariates.cols())
        fail(ErrorCode::CovariateMissing, "prediction sites need the phi covariates");
      pred_phi_ = covariate_phi(spec.temporal.link, params.temporal, task.phi_covariates);
    }
    Eigen::MatrixXd innov = resid;
    for (Eigen::Index t = 1; t < T; ++t) innov.col(t) = resid.col(t) - phi_obs.cwiseProduct(resid.col(t - 1));
    weights_ = v_.solve(innov);
  }

  double site_phi(std::size_t p) const {
    return pred_phi_.size() ? pred_phi_(static_cast<Eigen::Index>(p)) : phi_;
  }

  // Cross covariance between the batch and the observed sites, nugget only
  // where an observation coincides with the prediction site.
  Eigen::MatrixXd cross(const DistanceBundle& po, std::span<const std::size_t> pred_idx,
                        const std::vector<std::size_t>& obs_rows) const {
    Eigen::MatrixXd c = cov_mixture(cs_, po);
    if (nugget_ > 0.0)
      for (Eigen::Index i = 0; i < c.rows(); ++i)
        for (Eigen::Index j = 0; j < c.cols(); ++j)
          if (po.D(i, j) == 0.0 && (!po.has_stream || po.H(i, j) == 0.0) &&
              task_.sites[pred_idx[static_cast<std::size_t>(i)]].site_id ==
                  ctx_.sites[obs_rows[static_cast<std::size_t>(j)]].site_id)
            c(i, j) += nugget_;
    return c;
  }

  // Every prediction row is computed on its own so that results do not
  // depend on how sites are grouped into batches.
  KrigingDraw apply(const Eigen::MatrixXd& c, std::span<const std::size_t> pred_idx) const {
    const auto B = static_cast<Eigen::Index>(pred_idx.size());
    const auto T = ctx_.panel.steps();
    KrigingDraw out;
    out.mean.resize(B, T);
    out.variance.resize(B, T);
    out.innovation.resize(B);
    out.phi.resize(B);
    out.kappa1 = kappa1_;
    for (Eigen::Index i = 0; i < B; ++i) {
      const std::size_t p = pred_idx[static_cast<std::size_t>(i)];
      const Eigen::RowVectorXd cp = c.row(i);
      const Eigen::VectorXd half = v_.llt().matrixL().solve(cp.transpose());
      const double k = std::max(0.0, sill_ + nugget_ - half.squaredNorm());
      const double phi = site_phi(p);
      const Eigen::RowVectorXd u = cp * weights_;
      Eigen::RowVectorXd r(T);
      if (method_ == KrigingMethod::separable) {
        r = u * ar1_;
      } else {
        r(0) = u(0);
        for (Eigen::Index t = 1; t < T; ++t) r(t) = phi * r(t - 1) + u(t);
      }
      double var = kappa1_ * k;
      for (Eigen::Index t = 0; t < T; ++t) {
        if (t > 0) var = phi * phi * var + k;
        out.mean(i, t) = task_.X[static_cast<std::size_t>(t)].row(static_cast<Eigen::Index>(p)).dot(params_.beta) + r(t);
        out.variance(i, t) = var;
      }
      out.innovation(i) = k;
      out.phi(i) = phi;
    }
    return out;
  }

  // Full conditional covariance of one innovation over the batch.
  Eigen::MatrixXd batch_covariance(const DistanceBundle& pp, const Eigen::MatrixXd& c) const {
    Eigen::MatrixXd K = cov_mixture(cs_, pp);
    K.diagonal().array() += nugget_;
    K -= c * v_.solve(c.transpose());
    return 0.5 * (K + K.transpose());
  }

 private:
  const FittedContext& ctx_;
  const PredictionTask& task_;
  KrigingMethod method_;
  const ModelParams& params_;
  CovarianceSpec cs_;
  double nugget_ = 0.0;
  double sill_ = 0.0;
  CholeskyFactor v_;
  Eigen::MatrixXd weights_;  // O x T
  Eigen::MatrixXd ar1_;
  double phi_ = 0.0;
  double kappa1_ = 1.0;
  Eigen::VectorXd pred_phi_;
};

std::vector<Site> pick(std::span<const Site> sites, std::span<const std::size_t> idx) {
  std::vector<Site> out;
  for (auto i : idx) out.push_back(sites[i]);
  return out;
}

KrigingDraw krige_one(const FittedContext& ctx, const PredictionTask& task, std::span<const std::size_t> pred_idx,
                      const ModelParams& params, const Eigen::MatrixXd& y, KrigingMethod method) {
  const auto obs_rows = default_observed_rows(ctx);
  const auto obs_sites = pick(ctx.sites, obs_rows);
  const auto pred_sites = pick(task.sites, pred_idx);
  const DistanceBundle oo = pair_bundle(ctx, obs_sites, obs_sites);
  const DrawKriger dk(ctx, task, method, obs_rows, oo, params, y);
  const DistanceBundle po = pair_bundle(ctx, pred_sites, obs_sites);
  return dk.apply(dk.cross(po, pred_idx, obs_rows), pred_idx);
}

std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

// AR(1) noise path of one site with innovation variance k.
void add_site_noise(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, double k, double phi, double kappa1, std::uint64_t seed,
                    std::size_t draw, int site_id) {
  std::seed_seq seq{lo32(seed), hi32(seed), lo32(draw), hi32(draw), static_cast<std::uint32_t>(site_id)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  const double sk = std::sqrt(k);
  double e = 0.0;
  for (Eigen::Index t = 0; t < row.size(); ++t) {
    const double z = normal(rng);
    e = t == 0 ? std::sqrt(kappa1) * sk * z : phi * e + sk * z;
    row(t) += e;
  }
}

}  // namespace

KrigingDraw krige_draw(const FittedContext& ctx, const PredictionTask& task, std::span<const std::size_t> pred_idx,
                       const ModelParams& params, const Eigen::MatrixXd& y_completed) {
  return krige_one(ctx, task, pred_idx, params, y_completed, KrigingMethod::separable);
}

KrigingDraw krige_recursion_draw(const FittedContext& ctx, const PredictionTask& task,
                                 std::span<const std::size_t> pred_idx, const ModelParams& params,
                                 const Eigen::MatrixXd& y_completed) {
  return krige_one(ctx, task, pred_idx, params, y_completed, KrigingMethod::recursion);
}

Eigen::MatrixXd completed_panel(const ObservationPanel& panel, const PosteriorDraws& draws, Eigen::Index row) {
  Eigen::MatrixXd y = panel.y;
  Eigen::Index k = 0;
  for (const auto& c : draws.chains) {
    if (row < k + c.imputed.rows()) {
      for (std::size_t i = 0; i < draws.missing_cells.size(); ++i) {
        const auto [s, t] = draws.missing_cells[i];
        y(s, t) = c.imputed(row - k, static_cast<Eigen::Index>(i));
      }
      return y;
    }
    k += c.imputed.rows();
  }
  fail(ErrorCode::InsufficientDraws, "draw index out of range");
}

std::vector<std::size_t> subsample_draws(std::size_t total, std::size_t wanted, std::uint64_t seed) {
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (wanted >= total) return all;
  std::vector<std::size_t> out;
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(out), wanted, rng);
  return out;
}

PredictionResult predict(const FittedContext& ctx, const PosteriorDraws& draws, const PredictionTask& task,
                         KrigingMethod method) {
  validate_task(ctx, task);
  const Eigen::MatrixXd stacked = draws.stacked_params();
  if (stacked.rows() == 0) fail(ErrorCode::InsufficientDraws, "no retained draws to predict from");
  const auto P = static_cast<Eigen::Index>(task.sites.size());
  const auto T = ctx.panel.steps();

  PredictionResult res;
  for (const auto& s : task.sites) res.site_ids.push_back(s.site_id);
  res.draw_index = subsample_draws(static_cast<std::size_t>(stacked.rows()), task.subsample, task.seed);
  const std::size_t n = res.draw_index.size();

  const auto obs_rows = default_observed_rows(ctx);
  const auto obs_sites = pick(ctx.sites, obs_rows);
  const DistanceBundle oo = pair_bundle(ctx, obs_sites, obs_sites);

  struct Batch {
    std::vector<std::size_t> idx;
    DistanceBundle po;
    DistanceBundle pp;
  };
  std::vector<Batch> batches;
  const bool joint = task.joint_noise && task.batch_size <= kJointNoiseMaxBatch;
  for (std::size_t b0 = 0; b0 < task.sites.size(); b0 += task.batch_size) {
    Batch b;
    for (std::size_t i = b0; i < std::min(task.sites.size(), b0 + task.batch_size); ++i) b.idx.push_back(i);
    const auto ps = pick(task.sites, b.idx);
    b.po = pair_bundle(ctx, ps, obs_sites);
    if (joint) b.pp = pair_bundle(ctx, ps, ps);
    batches.push_back(std::move(b));
  }
  const int workers = worker_count(batches.size());

  res.mean_draws.assign(n, Eigen::MatrixXd(P, T));
  res.draws.assign(n, Eigen::MatrixXd(P, T));
  for (std::size_t d = 0; d < n; ++d) {
    const auto row = static_cast<Eigen::Index>(res.draw_index[d]);
    const ModelParams params = ctx.layout.unflatten(stacked.row(row).transpose());
    const Eigen::MatrixXd y = completed_panel(ctx.panel, draws, row);
    const DrawKriger dk(ctx, task, method, obs_rows, oo, params, y);
    parallel_for(batches.size(), workers, [&](std::size_t bi) {
      const Batch& b = batches[bi];
      const Eigen::MatrixXd c = dk.cross(b.po, b.idx, obs_rows);
      const KrigingDraw kd = dk.apply(c, b.idx);
      const auto off = static_cast<Eigen::Index>(b.idx.front());
      const auto B = static_cast<Eigen::Index>(b.idx.size());
      res.mean_draws[d].middleRows(off, B) = kd.mean;
      Eigen::MatrixXd pred = kd.mean;
      if (joint) {
        const CholeskyFactor L = assert_psd(dk.batch_covariance(b.pp, c));
        std::seed_seq seq{lo32(task.seed), hi32(task.seed), lo32(res.draw_index[d]), static_cast<std::uint32_t>(bi),
                          0x6a6fu};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal;
        Eigen::VectorXd e(B);
        for (Eigen::Index t = 0; t < T; ++t) {
          Eigen::VectorXd z(B);
          for (Eigen::Index i = 0; i < B; ++i) z(i) = normal(rng);
          const Eigen::VectorXd lz = L.llt().matrixL() * z;
          e = t == 0 ? Eigen::VectorXd(std::sqrt(kd.kappa1) * lz) : Eigen::VectorXd(kd.phi.cwiseProduct(e) + lz);
          pred.col(t) += e;
        }
      } else {
        for (Eigen::Index i = 0; i < B; ++i)
          add_site_noise(pred.row(i), kd.innovation(i), kd.phi(i), kd.kappa1, task.seed, res.draw_index[d],
                         task.sites[b.idx[static_cast<std::size_t>(i)]].site_id);
      }
      res.draws[d].middleRows(off, B) = pred;
    });
  }

  res.mean = Eigen::MatrixXd::Zero(P, T);
  for (const auto& m : res.mean_draws) res.mean += m;
  res.mean /= static_cast<double>(n);
  res.sd.resize(P, T);
  res.lower.setConstant(P, T, std::numeric_limits<double>::quiet_NaN());
  res.upper = res.lower;
  std::vector<double> cell(n);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index p = 0; p < P; ++p) {
      double mu = 0.0;
      for (std::size_t d = 0; d < n; ++d) mu += (cell[d] = res.draws[d](p, t));
      mu /= static_cast<double>(n);
      double ss = 0.0;
      for (double v : cell) ss += (v - mu) * (v - mu);
      res.sd(p, t) = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
      if (n >= 50) std::tie(res.lower(p, t), res.upper(p, t)) = hdi(cell, task.hdi_mass);
    }
  for (double thr : task.thresholds) {
    res.exceed.push_back(exceedance(res.draws, thr));
    res.proportion.push_back(proportion_above(res.draws, thr));
  }
  return res;
}

Eigen::MatrixXd exceedance(std::span<const Eigen::MatrixXd> draws, double threshold) {
  if (draws.empty()) fail(ErrorCode::InsufficientDraws, "no draws");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(draws.front().rows(), draws.front().cols());
  for (const auto& d : draws) out += (d.array() > threshold).cast<double>().matrix();
  return out / static_cast<double>(draws.size());
}

Eigen::MatrixXd proportion_above(std::span<const Eigen::MatrixXd> draws, double threshold) {
  if (draws.empty()) fail(ErrorCode::InsufficientDraws, "no draws");
  const auto T = draws.front().cols();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(draws.size()), T);
  for (std::size_t d = 0; d < draws.size(); ++d)
    for (Eigen::Index t = 0; t < T; ++t)
      out(static_cast<Eigen::Index>(d), t) =
          static_cast<double>((draws[d].col(t).array() > threshold).count()) / static_cast<double>(draws[d].rows());
  return out;
}

std::pair<double, double> hdi(std::span<const double> sample, double mass) {
  if (sample.size() < 50) fail(ErrorCode::SampleTooSmall, "HDI needs at least 50 draws");
  if (!(mass > 0.0 && mass < 1.0)) fail(ErrorCode::ConfigInvalid, "HDI mass must lie in (0, 1)");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const auto n = s.size();
  const auto k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n)));
  std::size_t best = 0;
  double width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + k - 1 < n; ++i) {
    const double w = s[i + k - 1] - s[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {s[best], s[best + k - 1]};
}

}  // namespace ssnst
