#include "ssnst/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ssnst/error.hpp"
#include "ssnst/parallel.hpp"

namespace ssnst {

namespace {

using json = nlohmann::json;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kCheckpointVersion = 1;

std::vector<double> to_vec(const Eigen::MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

Eigen::MatrixXd from_vec(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols)
    fail(ErrorCode::ConfigInvalid, "checkpoint array has the wrong size");
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

// Quantities derived from the current factors that imputation needs.
struct ImputeCache {
  Eigen::MatrixXd v_inv;
  Eigen::MatrixXd phit_vinv;       // Phi' V^-1
  Eigen::MatrixXd phit_vinv_phi;   // Phi' V^-1 Phi
};

ImputeCache make_cache(const ModelFactors& f, const Eigen::MatrixXd& v_inv) {
  ImputeCache c;
  c.v_inv = v_inv;
  if (f.scalar_phi) return c;
  c.phit_vinv = f.phi.transpose() * v_inv;
  c.phit_vinv_phi = c.phit_vinv * f.phi;
  return c;
}

SliceConditional slice_conditional_cached(Eigen::Index t, const Eigen::MatrixXd& resid, const ModelFactors& f,
                                          const ImputeCache& c) {
  const auto T = resid.cols();
  const double kappa = t == 0 ? f.kappa1 : 1.0;
  SliceConditional sc;
  if (f.scalar_phi) {
    const double phi = f.phi_scalar;
    double lam = 1.0 / kappa;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(resid.rows());
    if (t > 0) m += phi * resid.col(t - 1);
    if (t + 1 < T) {
      lam += phi * phi;
      m += phi * resid.col(t + 1);
    }
    sc.precision = lam * c.v_inv;
    sc.shift = c.v_inv * m;
    return sc;
  }
  sc.precision = c.v_inv / kappa;
  sc.shift = Eigen::VectorXd::Zero(resid.rows());
  if (t > 0) sc.shift += c.v_inv * (f.phi * resid.col(t - 1));
  if (t + 1 < T) {
    sc.precision += c.phit_vinv_phi;
    sc.shift += c.phit_vinv * resid.col(t + 1);
  }
  return sc;
}

struct Partition {
  std::vector<Eigen::Index> missing;
  std::vector<Eigen::Index> observed;
};

Partition partition(const BoolMatrix& observed, Eigen::Index t) {
  Partition p;
  for (Eigen::Index s = 0; s < observed.rows(); ++s) (observed(s, t) ? p.observed : p.missing).push_back(s);
  return p;
}

// Lambda_MM factor and the conditional mean of the missing block.
std::pair<Eigen::LLT<Eigen::MatrixXd>, Eigen::VectorXd> condition_slice(const SliceConditional& sc,
                                                                          const Eigen::VectorXd& resid_t,
                                                                          const Partition& p) {
  const auto m = static_cast<Eigen::Index>(p.missing.size());
  const auto o = static_cast<Eigen::Index>(p.observed.size());
  Eigen::MatrixXd lmm(m, m);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto mi = p.missing[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m; ++j) lmm(i, j) = sc.precision(mi, p.missing[static_cast<std::size_t>(j)]);
    double acc = sc.shift(mi);
    for (Eigen::Index j = 0; j < o; ++j) {
      const auto oj = p.observed[static_cast<std::size_t>(j)];
      acc -= sc.precision(mi, oj) * resid_t(oj);
    }
    rhs(i) = acc;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(lmm);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::NotPositiveDefinite, "conditional precision of a slice is not positive definite");
  Eigen::VectorXd mean = llt.solve(rhs);
  return {std::move(llt), std::move(mean)};
}

void impute_slice_cached(Eigen::Index t, Eigen::MatrixXd& y, Eigen::MatrixXd& resid, const ObservationPanel& panel,
                         const Eigen::VectorXd& beta, const ModelFactors& f, const ImputeCache& c,
                         const Partition& p, std::mt19937_64& rng, std::normal_distribution<double>& normal) {
  if (p.missing.empty()) return;
  const SliceConditional sc = slice_conditional_cached(t, resid, f, c);
  auto [llt, mean] = condition_slice(sc, resid.col(t), p);
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  // Lambda_MM = L L', so L'^{-1} z has covariance Lambda_MM^{-1}.
  llt.matrixU().solveInPlace(z);
  const Eigen::VectorXd mu = panel.X[static_cast<std::size_t>(t)] * beta;
  for (std::size_t i = 0; i < p.missing.size(); ++i) {
    const auto s = p.missing[i];
    const auto ii = static_cast<Eigen::Index>(i);
    resid(s, t) = mean(ii) + z(ii);
    y(s, t) = mu(s) + resid(s, t);
  }
}

double ols_variance_floor() { return 1e-6; }

struct BlockState {
  std::vector<Eigen::Index> idx;  // free coordinates
  Eigen::MatrixXd chol;           // proposal shape
  double log_scale = 0.0;
  long accepted = 0;
  long tried = 0;
  long adapt_count = 0;
};

// Evaluation of the log posterior split into the parts the sampler caches.
struct Evaluation {
  double prior = kNegInf;  // log prior + log Jacobian
  double loglik = kNegInf;
  ModelFactors factors;
  double total() const { return prior + loglik; }
};

class Chain {
 public:
  Chain(const SamplerProblem& problem, const McmcConfig& config, int index)
      : pb_(problem), cfg_(config), index_(index) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(config.seed >> 32), static_cast<std::uint32_t>(index)};
    rng_.seed(seq);
  }

  ChainDraws run();

 private:
  double loglik(const ModelFactors& f, const Eigen::VectorXd& beta, const Eigen::MatrixXd& y) const {
    return pb_.layout.spec().method == LikelihoodMethod::separable
               ? loglik_separable(f, beta, y, pb_.panel)
               : loglik_var(f, beta, y, pb_.panel).total;
  }

  // nullopt factors: reassemble; otherwise reuse (beta-only moves).
  Evaluation evaluate(const Eigen::VectorXd& theta, const ModelFactors* reuse) const {
    Evaluation ev;
    const ModelParams params = pb_.layout.to_constrained(theta);
    const double lp = log_prior(params, pb_.priors, pb_.layout.spec());
    if (!std::isfinite(lp)) return ev;
    if (reuse) {
      ev.factors = *reuse;
    } else {
      try {
        ev.factors = assemble_factors(params, pb_.bundle, pb_.layout.spec());
      } catch (const Error& e) {
        // Unstable transition matrices and covariance matrices that cannot
        // be factorized are treated as zero-density proposals.
        if (e.code() == ErrorCode::UnstablePhi || e.code() == ErrorCode::NotPositiveDefinite) return ev;
        throw;
      }
    }
    ev.prior = lp + pb_.layout.log_jacobian(theta);
    ev.loglik = loglik(ev.factors, params.beta, y_);
    return ev;
  }

  void setup_blocks();
  void adapt_covariances(int it);
  void retain();
  std::string checkpoint_path() const {
    return (std::filesystem::path(cfg_.checkpoint_dir) / ("chain_" + std::to_string(index_) + ".json")).string();
  }
  void write_checkpoint(int next_iteration) const;
  bool load_checkpoint();

  const SamplerProblem& pb_;
  const McmcConfig& cfg_;
  int index_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};

  Eigen::VectorXd theta_;
  Eigen::MatrixXd y_;
  Evaluation cur_;
  std::vector<BlockState> blocks_;
  std::vector<Eigen::VectorXd> window_;  // warmup history since the last covariance update
  int start_ = 0;

  std::vector<Eigen::VectorXd> kept_params_;
  std::vector<Eigen::VectorXd> kept_imputed_;
  std::vector<Eigen::VectorXd> kept_loglik_;
};

void Chain::setup_blocks() {
  const auto& names = pb_.layout.names();
  blocks_.clear();
  for (int b = 0; b < 4; ++b) {
    const auto r = pb_.layout.block(static_cast<Block>(b));
    BlockState bs;
    for (std::size_t i = r.begin; i < r.begin + r.count; ++i)
      if (!cfg_.fixed.contains(names[i])) bs.idx.push_back(static_cast<Eigen::Index>(i));
    const auto d = static_cast<Eigen::Index>(bs.idx.size());
    bs.chol = Eigen::MatrixXd::Identity(d, d);
    bs.log_scale = cfg_.initial_scale > 0.0 ? std::log(cfg_.initial_scale) : kNegInf;
    blocks_.push_back(std::move(bs));
  }
}

// Block proposal covariances are re-estimated from the warmup draws at a
// quarter, half and three quarters of the warmup.
void Chain::adapt_covariances(int it) {
  if (cfg_.initial_scale <= 0.0 || cfg_.warmup < 8) return;
  const int w = cfg_.warmup;
  if (it + 1 != w / 4 && it + 1 != w / 2 && it + 1 != 3 * w / 4) return;
  if (window_.size() < 20) return;
  const auto n = static_cast<double>(window_.size());
  for (auto& bs : blocks_) {
    const auto d = static_cast<Eigen::Index>(bs.idx.size());
    if (d == 0) continue;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& th : window_)
      for (Eigen::Index k = 0; k < d; ++k) mean(k) += th(bs.idx[static_cast<std::size_t>(k)]);
    mean /= n;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& th : window_) {
      Eigen::VectorXd dv(d);
      for (Eigen::Index k = 0; k < d; ++k) dv(k) = th(bs.idx[static_cast<std::size_t>(k)]) - mean(k);
      cov.noalias() += dv * dv.transpose();
    }
    cov /= (n - 1.0);
    const double tr = cov.trace() / static_cast<double>(d);
    if (!(tr > 0.0) || !std::isfinite(tr)) continue;
    cov.diagonal().array() += 1e-6 * tr + 1e-12;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) continue;
    bs.chol = llt.matrixL();
    bs.log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
    bs.adapt_count = 0;
  }
  window_.clear();
}

void Chain::retain() {
  const ModelParams params = pb_.layout.to_constrained(theta_);
  kept_params_.push_back(pb_.layout.flatten(params));
  const auto cells = pb_.panel.missing_cells();
  Eigen::VectorXd imp(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) imp(static_cast<Eigen::Index>(i)) = y_(cells[i].first, cells[i].second);
  kept_imputed_.push_back(std::move(imp));
  kept_loglik_.push_back(loglik_var(cur_.factors, params.beta, y_, pb_.panel).pointwise);
}

void Chain::write_checkpoint(int next_iteration) const {
  json j;
  j["version"] = kCheckpointVersion;
  j["chain"] = index_;
  j["next_iteration"] = next_iteration;
  j["parameters"] = pb_.layout.size();
  j["theta"] = to_vec(theta_);
  j["y"] = to_vec(y_);
  json blocks = json::array();
  for (const auto& bs : blocks_) {
    blocks.push_back({{"chol", to_vec(bs.chol)},
                      {"log_scale", std::isfinite(bs.log_scale) ? json(bs.log_scale) : json(nullptr)},
                      {"accepted", bs.accepted},
                      {"tried", bs.tried},
                      {"adapt_count", bs.adapt_count}});
  }
  j["blocks"] = blocks;
  json window = json::array();
  for (const auto& w : window_) window.push_back(to_vec(w));
  j["window"] = window;
  auto dump_rows = [](const std::vector<Eigen::VectorXd>& rows) {
    json a = json::array();
    for (const auto& r : rows) a.push_back(to_vec(r));
    return a;
  };
  j["kept_params"] = dump_rows(kept_params_);
  j["kept_imputed"] = dump_rows(kept_imputed_);
  j["kept_loglik"] = dump_rows(kept_loglik_);
  std::ostringstream rs, ns;
  rs << rng_;
  ns << normal_;
  j["rng"] = rs.str();
  j["normal"] = ns.str();

  std::filesystem::create_directories(cfg_.checkpoint_dir);
  const std::string path = checkpoint_path();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorCode::IoError, "cannot write checkpoint " + tmp);
    out << j.dump();
  }
  std::filesystem::rename(tmp, path);
}

bool Chain::load_checkpoint() {
  const std::string path = checkpoint_path();
  if (!std::filesystem::exists(path)) return false;
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, "corrupt checkpoint " + path + ": " + e.what());
  }
  if (j.at("version").get<int>() != kCheckpointVersion)
    fail(ErrorCode::ConfigInvalid, "checkpoint version mismatch in " + path);
  if (j.at("parameters").get<std::size_t>() != pb_.layout.size())
    fail(ErrorCode::ConfigInvalid, "checkpoint was written for a different model");
  const auto P = static_cast<Eigen::Index>(pb_.layout.size());
  theta_ = from_vec(j.at("theta").get<std::vector<double>>(), P, 1);
  y_ = from_vec(j.at("y").get<std::vector<double>>(), pb_.panel.sites(), pb_.panel.steps());
  const auto& jb = j.at("blocks");
  if (jb.size() != blocks_.size()) fail(ErrorCode::ConfigInvalid, "checkpoint block layout mismatch");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto& bs = blocks_[b];
    const auto d = static_cast<Eigen::Index>(bs.idx.size());
    bs.chol = from_vec(jb[b].at("chol").get<std::vector<double>>(), d, d);
    bs.log_scale = jb[b].at("log_scale").is_null() ? kNegInf : jb[b].at("log_scale").get<double>();
    bs.accepted = jb[b].at("accepted").get<long>();
    bs.tried = jb[b].at("tried").get<long>();
    bs.adapt_count = jb[b].at("adapt_count").get<long>();
  }
  auto load_rows = [](const json& a) {
    std::vector<Eigen::VectorXd> rows;
    for (const auto& r : a) {
      const auto v = r.get<std::vector<double>>();
      rows.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    return rows;
  };
  window_ = load_rows(j.at("window"));
  kept_params_ = load_rows(j.at("kept_params"));
  kept_imputed_ = load_rows(j.at("kept_imputed"));
  kept_loglik_ = load_rows(j.at("kept_loglik"));
  std::istringstream rs(j.at("rng").get<std::string>()), ns(j.at("normal").get<std::string>());
  rs >> rng_;
  ns >> normal_;
  start_ = j.at("next_iteration").get<int>();
  return true;
}

ChainDraws Chain::run() {
  const auto& panel = pb_.panel;
  const auto T = panel.steps();
  setup_blocks();

  bool resumed = false;
  if (cfg_.resume && !cfg_.checkpoint_dir.empty()) resumed = load_checkpoint();
  if (!resumed) {
    ChainState init = initial_state(pb_, cfg_, rng_);
    theta_ = std::move(init.theta);
    y_ = std::move(init.y);
  }
  cur_ = evaluate(theta_, nullptr);
  if (!std::isfinite(cur_.total()))
    fail(ErrorCode::NotPositiveDefinite,
         "chain " + std::to_string(index_) + " starts outside the support of the posterior");

  std::vector<Partition> parts;
  bool any_missing = false;
  for (Eigen::Index t = 0; t < T; ++t) {
    parts.push_back(partition(panel.observed, t));
    any_missing = any_missing || !parts.back().missing.empty();
  }

  int it = start_;
  try {
    for (; it < cfg_.iterations; ++it) {
      const bool warm = it < cfg_.warmup;
      for (std::size_t b = 0; b < blocks_.size(); ++b) {
        auto& bs = blocks_[b];
        const auto d = static_cast<Eigen::Index>(bs.idx.size());
        if (d == 0) continue;
        Eigen::VectorXd z(d);
        for (Eigen::Index k = 0; k < d; ++k) z(k) = normal_(rng_);
        const double scale = std::exp(bs.log_scale);
        const Eigen::VectorXd step = scale * (bs.chol * z);
        Eigen::VectorXd prop = theta_;
        for (Eigen::Index k = 0; k < d; ++k) prop(bs.idx[static_cast<std::size_t>(k)]) += step(k);

        const bool beta_only = static_cast<Block>(b) == Block::beta;
        Evaluation ev = evaluate(prop, beta_only ? &cur_.factors : nullptr);
        const double log_ratio = ev.total() - cur_.total();
        const double u = unif_(rng_);
        const bool accept = std::isfinite(ev.total()) && (log_ratio >= 0.0 || std::log(u) < log_ratio);
        if (accept) {
          theta_ = std::move(prop);
          cur_ = std::move(ev);
        }
        if (warm) {
          if (std::isfinite(bs.log_scale)) {
            const double a = std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
            const double gain = std::pow(static_cast<double>(++bs.adapt_count) + 1.0, -0.6);
            bs.log_scale += gain * (a - cfg_.target_accept);
          }
        } else {
          ++bs.tried;
          if (accept) ++bs.accepted;
        }
      }

      if (any_missing) {
        const ModelParams params = pb_.layout.to_constrained(theta_);
        const ImputeCache cache = make_cache(cur_.factors, cur_.factors.v.inverse());
        Eigen::MatrixXd resid = residuals(params.beta, y_, panel);
        for (Eigen::Index t = 0; t < T; ++t)
          impute_slice_cached(t, y_, resid, panel, params.beta, cur_.factors, cache,
                              parts[static_cast<std::size_t>(t)], rng_, normal_);
        cur_.loglik = loglik(cur_.factors, params.beta, y_);
      }

      if (warm) {
        window_.push_back(theta_);
        adapt_covariances(it);
      } else if ((it - cfg_.warmup) % cfg_.thin == 0) {
        retain();
      }

      if (!cfg_.checkpoint_dir.empty() && cfg_.checkpoint_every > 0 && (it + 1) % cfg_.checkpoint_every == 0)
        write_checkpoint(it + 1);
      if (cfg_.halt_after >= 0 && it + 1 >= cfg_.halt_after) {
        if (!cfg_.checkpoint_dir.empty()) write_checkpoint(it + 1);
        ++it;
        break;
      }
    }
  } catch (...) {
    if (!cfg_.checkpoint_dir.empty()) write_checkpoint(it);
    throw;
  }

  ChainDraws out;
  out.completed_iterations = it;
  const auto P = static_cast<Eigen::Index>(pb_.layout.size());
  const auto n = static_cast<Eigen::Index>(kept_params_.size());
  const auto M = static_cast<Eigen::Index>(panel.missing_count());
  out.params.resize(n, P);
  out.imputed.resize(n, M);
  out.loglik.resize(n, T);
  for (Eigen::Index r = 0; r < n; ++r) {
    out.params.row(r) = kept_params_[static_cast<std::size_t>(r)].transpose();
    out.imputed.row(r) = kept_imputed_[static_cast<std::size_t>(r)].transpose();
    out.loglik.row(r) = kept_loglik_[static_cast<std::size_t>(r)].transpose();
  }
  for (const auto& bs : blocks_) {
    out.acceptance.push_back(bs.tried ? static_cast<double>(bs.accepted) / static_cast<double>(bs.tried) : 0.0);
    out.scales.push_back(std::exp(bs.log_scale));
  }
  return out;
}

Eigen::MatrixXd stack(const std::vector<ChainDraws>& chains, Eigen::MatrixXd ChainDraws::*member) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& c : chains) {
    rows += (c.*member).rows();
    cols = (c.*member).cols();
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& c : chains) {
    out.middleRows(r, (c.*member).rows()) = c.*member;
    r += (c.*member).rows();
  }
  return out;
}

}  // namespace

void McmcConfig::validate() const {
  if (chains < 1) fail(ErrorCode::ConfigInvalid, "need at least one chain");
  if (warmup < 0 || iterations <= warmup) fail(ErrorCode::ConfigInvalid, "warmup must be smaller than iterations");
  if (thin < 1) fail(ErrorCode::ConfigInvalid, "thin must be at least 1");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    fail(ErrorCode::ConfigInvalid, "target acceptance must lie in (0, 1)");
  if (!(initial_scale >= 0.0) || !(init_jitter >= 0.0))
    fail(ErrorCode::ConfigInvalid, "proposal scale and jitter must be non-negative");
}

Eigen::MatrixXd PosteriorDraws::stacked_params() const { return stack(chains, &ChainDraws::params); }
Eigen::MatrixXd PosteriorDraws::stacked_imputed() const { return stack(chains, &ChainDraws::imputed); }
Eigen::MatrixXd PosteriorDraws::stacked_loglik() const { return stack(chains, &ChainDraws::loglik); }

Eigen::Index PosteriorDraws::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) fail(ErrorCode::UnknownColumn, "no parameter named '" + name + "'");
  return static_cast<Eigen::Index>(it - names.begin());
}

Eigen::MatrixXd interpolate_missing(const ObservationPanel& panel, const Eigen::MatrixXd& fallback) {
  Eigen::MatrixXd y = panel.y;
  const auto T = panel.steps();
  for (Eigen::Index s = 0; s < panel.sites(); ++s) {
    std::vector<Eigen::Index> obs;
    for (Eigen::Index t = 0; t < T; ++t)
      if (panel.observed(s, t)) obs.push_back(t);
    if (obs.empty()) {
      y.row(s) = fallback.row(s);
      continue;
    }
    for (Eigen::Index t = 0; t < T; ++t) {
      if (panel.observed(s, t)) continue;
      const auto hi = std::upper_bound(obs.begin(), obs.end(), t);
      if (hi == obs.begin()) {
        y(s, t) = panel.y(s, obs.front());
      } else if (hi == obs.end()) {
        y(s, t) = panel.y(s, obs.back());
      } else {
        const auto t1 = *hi, t0 = *(hi - 1);
        const double w = static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
        y(s, t) = (1.0 - w) * panel.y(s, t0) + w * panel.y(s, t1);
      }
    }
  }
  return y;
}

ChainState initial_state(const SamplerProblem& problem, const McmcConfig& config, std::mt19937_64& rng) {
  const auto& panel = problem.panel;
  const auto& layout = problem.layout;
  const auto& spec = layout.spec();
  const auto S = panel.sites(), T = panel.steps();
  const auto p = panel.covariates();

  ModelParams m;
  if (config.initial) {
    m = *config.initial;
  } else {
    const auto n = static_cast<Eigen::Index>(panel.observed.count());
    Eigen::MatrixXd Xo(n, p);
    Eigen::VectorXd yo(n);
    Eigen::Index r = 0;
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index s = 0; s < S; ++s)
        if (panel.observed(s, t)) {
          Xo.row(r) = panel.X[static_cast<std::size_t>(t)].row(s);
          yo(r++) = panel.y(s, t);
        }
    m.beta = n > 0 ? Eigen::VectorXd(Xo.colPivHouseholderQr().solve(yo)) : Eigen::VectorXd::Zero(p);
    double s2 = 1.0;
    if (n > p) s2 = (yo - Xo * m.beta).squaredNorm() / static_cast<double>(n - p);
    s2 = std::max(s2, ols_variance_floor());
    const auto K = spec.components.size();
    m.sigma0 = std::min(std::sqrt(s2 / 2.0), 0.5 * problem.priors.sigma0_max);
    for (std::size_t k = 0; k < K; ++k)
      m.sigma.push_back(std::min(std::sqrt(s2 / (2.0 * static_cast<double>(K))), 0.5 * problem.priors.sigma_max));
    for (double amax : problem.priors.alpha_max) m.alpha.push_back(amax / 4.0);

    const auto& ctx = spec.phi_context;
    switch (spec.temporal.kind) {
      case TemporalCase::ar:
        m.temporal = {0.5};
        break;
      case TemporalCase::var_sitewise:
        m.temporal.assign(ctx.sites, 0.5);
        break;
      case TemporalCase::var_covariate:
        m.temporal.assign(static_cast<std::size_t>(ctx.covariates.cols()) + 1, 0.0);
        // link(gamma_0) = 0.5
        m.temporal[0] = spec.temporal.link == Link::logit_01 ? 0.0 : 2.0 * std::atanh(0.5);
        break;
      case TemporalCase::var_2nn:
        for (std::size_t s = 0; s < ctx.sites; ++s) {
          m.temporal.push_back(0.5);
          m.temporal.insert(m.temporal.end(), ctx.neighbors[s].size(), 0.0);
        }
        break;
    }
    m.mu_phi = 0.5;
    m.sigma_phi = 0.2;
  }

  if (!config.fixed.empty()) {
    Eigen::VectorXd flat = layout.flatten(m);
    const auto& names = layout.names();
    for (const auto& [name, value] : config.fixed) {
      const auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) fail(ErrorCode::ConfigInvalid, "cannot fix unknown parameter '" + name + "'");
      flat(it - names.begin()) = value;
    }
    m = layout.unflatten(flat);
  }

  ChainState st;
  st.theta = layout.to_unconstrained(m);
  if (config.init_jitter > 0.0) {
    std::normal_distribution<double> nd(0.0, config.init_jitter);
    const auto& names = layout.names();
    for (Eigen::Index i = 0; i < st.theta.size(); ++i)
      if (!config.fixed.contains(names[static_cast<std::size_t>(i)])) st.theta(i) += nd(rng);
  }
  const Eigen::VectorXd beta = layout.to_constrained(st.theta).beta;
  Eigen::MatrixXd mean(S, T);
  for (Eigen::Index t = 0; t < T; ++t) mean.col(t) = panel.X[static_cast<std::size_t>(t)] * beta;
  st.y = interpolate_missing(panel, mean);
  return st;
}

SliceConditional slice_conditional(Eigen::Index t, const Eigen::MatrixXd& resid, const ModelFactors& factors,
                                   const Eigen::MatrixXd& v_inv) {
  return slice_conditional_cached(t, resid, factors, make_cache(factors, v_inv));
}

MissingConditional missing_conditional(Eigen::Index t, const Eigen::MatrixXd& resid, const BoolMatrix& observed,
                                       const ModelFactors& factors, const Eigen::MatrixXd& v_inv) {
  const Partition p = partition(observed, t);
  MissingConditional mc;
  mc.rows = p.missing;
  if (p.missing.empty()) return mc;
  const SliceConditional sc = slice_conditional(t, resid, factors, v_inv);
  auto [llt, mean] = condition_slice(sc, resid.col(t), p);
  mc.mean = std::move(mean);
  mc.cov = llt.solve(Eigen::MatrixXd::Identity(mc.mean.size(), mc.mean.size()));
  return mc;
}

void impute_missing_slice(Eigen::Index t, Eigen::MatrixXd& y, const ObservationPanel& panel,
                          const Eigen::VectorXd& beta, const ModelFactors& factors, const Eigen::MatrixXd& v_inv,
                          std::mt19937_64& rng, std::normal_distribution<double>& normal) {
  Eigen::MatrixXd resid = residuals(beta, y, panel);
  impute_slice_cached(t, y, resid, panel, beta, factors, make_cache(factors, v_inv), partition(panel.observed, t),
                      rng, normal);
}

PosteriorDraws run_mcmc(const SamplerProblem& problem, const McmcConfig& config) {
  config.validate();
  problem.panel.validate();
  if (problem.panel.covariates() != static_cast<Eigen::Index>(problem.layout.beta_count()))
    fail(ErrorCode::DimensionMismatch, "design width does not match the parameter layout");
  if (problem.bundle.rows() != problem.panel.sites() || problem.bundle.cols() != problem.panel.sites())
    fail(ErrorCode::DimensionMismatch, "distance bundle does not match the panel sites");

  PosteriorDraws out;
  out.names = problem.layout.names();
  out.missing_cells = problem.panel.missing_cells();
  for (Eigen::Index t = 0; t < problem.panel.steps(); ++t)
    if (!problem.panel.observed.col(t).any())
      out.warnings.push_back("time slice " + std::to_string(t) + " has no observed response");

  const auto nchains = static_cast<std::size_t>(config.chains);
  out.chains.resize(nchains);
  parallel_for(nchains, worker_count(nchains, config.threads), [&](std::size_t c) {
    Chain chain(problem, config, static_cast<int>(c));
    out.chains[c] = chain.run();
  });

  out.halted = out.chains.front().completed_iterations < config.iterations;
  if (!out.halted && out.draws_per_chain() >= 4) out.diagnostics = diagnostics(out);
  return out;
}

}  // namespace ssnst
