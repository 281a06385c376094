#include "ssnst/workbench.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include <boost/version.hpp>
#include <json.hpp>

#include "ssnst/error.hpp"

namespace ssnst {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void ensure_parent(const fs::path& p) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  if (ec) fail(ErrorCode::IoError, "cannot create directory for " + p.string());
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create directory " + p.string());
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) fail(ErrorCode::ConfigInvalid, std::string("paths.") + what + " is not set");
  if (!fs::exists(p)) fail(ErrorCode::IoError, std::string(what) + " file not found: " + p.string());
}

std::string cell_name(int site, int t) { return "y[" + std::to_string(site) + ":" + std::to_string(t) + "]"; }

std::string fmt(double v) { return format_double(v); }

std::string chain_file(const fs::path& dir, const char* stem, std::size_t k) {
  return (dir / (std::string(stem) + "_chain_" + std::to_string(k + 1) + ".csv")).string();
}

std::string threshold_name(double thr) { return "p_exceed[" + fmt(thr) + "]"; }

json coverage_json(const std::optional<CoverageResult>& c, double nominal) {
  if (!c) return nullptr;
  return {{"proportion", c->proportion}, {"covered", c->covered}, {"n", c->n},
          {"p_value", c->p_value},       {"nominal", nominal},     {"category", std::string(to_string(c->category))}};
}

json scores_json(const MethodScores& s, double nominal) {
  return {{"rmspe", s.rmspe}, {"crps", s.crps}, {"coverage", coverage_json(s.coverage, nominal)}, {"cells", s.cells}};
}

}  // namespace

Workspace make_workspace(const RunConfig& config, std::vector<Segment> segments, std::vector<Site> sites,
                         ObservationTable table, std::optional<PredictionSites> prediction_sites) {
  config.validate();
  Workspace ws;
  ws.config = config;

  std::unordered_map<int, std::size_t> by_id;
  for (std::size_t i = 0; i < sites.size(); ++i)
    if (!by_id.emplace(sites[i].site_id, i).second)
      fail(ErrorCode::SchemaError, "duplicate site id " + std::to_string(sites[i].site_id));
  for (int id : table.site_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorCode::DanglingReference, "observed site " + std::to_string(id) + " is not in the sites file");
    ws.sites.push_back(sites[it->second]);
  }
  if (!segments.empty()) {
    ws.network = StreamNetwork::build(std::move(segments), std::move(sites));
    ws.network->set_afv(compute_afv(*ws.network, config.weighting).afv);
  }

  const auto S = static_cast<Eigen::Index>(table.site_ids.size());
  const auto T = static_cast<Eigen::Index>(table.times.size());
  ws.heldout = holdout_mask(table.observed, config.holdout_fraction, config.effective_holdout_seed());
  ws.table = std::move(table);

  ws.design = build_design(ws.table.covariate_table(), config.formula);
  auto& panel = ws.panel;
  panel.site_ids = ws.table.site_ids;
  panel.times = ws.table.times;
  panel.y = ws.table.y;
  panel.observed = ws.table.observed && !ws.heldout;
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index s = 0; s < S; ++s)
      if (!panel.observed(s, t)) panel.y(s, t) = kNaN;
  panel.X = ws.design.X;
  panel.covariate_names = ws.design.names;
  panel.validate();

  ws.bundle = ws.network ? make_bundle(*ws.network, ws.sites, ws.sites) : make_euclidean_bundle(ws.sites, ws.sites);

  auto& spec = ws.spec;
  spec.components = config.components;
  spec.temporal = config.temporal;
  spec.method = config.method;
  spec.phi_covariate_names = config.phi_covariates;
  spec.phi_context.sites = static_cast<std::size_t>(S);
  spec.phi_context.site_ids = ws.table.site_ids;
  if (spec.temporal.kind == TemporalCase::var_covariate) {
    auto& z = spec.phi_context.covariates;
    z.resize(S, static_cast<Eigen::Index>(config.phi_covariates.size()));
    for (std::size_t j = 0; j < config.phi_covariates.size(); ++j) {
      const auto it = ws.table.covariates.find(config.phi_covariates[j]);
      if (it == ws.table.covariates.end())
        fail(ErrorCode::UnknownColumn, "no covariate column named '" + config.phi_covariates[j] + "'");
      z.col(static_cast<Eigen::Index>(j)) = it->second.col(0);
    }
  }
  if (spec.temporal.kind == TemporalCase::var_2nn) {
    if (!ws.network) fail(ErrorCode::MissingNetwork, "neighbour transition matrices need a stream network");
    std::vector<double> updist;
    for (const auto& s : ws.sites) updist.push_back(s.updist);
    spec.phi_context.neighbors =
        case3_neighbors(ws.bundle.H, ws.bundle.flow_conn, updist, ws.table.site_ids, spec.temporal.neighbor_mode);
  }
  spec.validate();

  ws.priors = apply_prior_overrides(default_priors(spec, ws.bundle), config);
  ws.layout.emplace(ws.design.names, spec, ws.priors);

  if (prediction_sites) {
    if (prediction_sites->times != ws.table.times)
      fail(ErrorCode::CovariateMissing, "prediction sites must cover exactly the observed time steps");
    if (ws.network)
      for (const auto& s : prediction_sites->sites) ws.network->validate_site(s);
    ws.prediction_sites = std::move(prediction_sites);
  }
  return ws;
}

Workspace load_workspace(const RunConfig& config) {
  require_file(config.paths.sites, "sites");
  require_file(config.paths.observations, "observations");
  std::vector<Segment> segments;
  if (!config.paths.network.empty()) {
    require_file(config.paths.network, "network");
    segments = read_network_json(config.paths.network.string());
  }
  std::optional<PredictionSites> ps;
  if (!config.paths.prediction_sites.empty() && fs::exists(config.paths.prediction_sites))
    ps = read_prediction_sites_csv(config.paths.prediction_sites.string());
  return make_workspace(config, std::move(segments), read_sites_csv(config.paths.sites.string()),
                        read_observations_csv(config.paths.observations.string()), std::move(ps));
}

SimResult run_simulation(const RunConfig& config) {
  if (!config.simulation) fail(ErrorCode::ConfigInvalid, "the config has no simulation section");
  SimResult sim = simulate(*config.simulation, config.seed);
  const auto& p = config.paths;
  if (p.sites.empty() || p.observations.empty())
    fail(ErrorCode::ConfigInvalid, "simulate needs paths.sites and paths.observations");
  if (!sim.segments.empty()) {
    if (p.network.empty()) fail(ErrorCode::ConfigInvalid, "a tree topology needs paths.network");
    ensure_parent(p.network);
    write_network_json(p.network.string(), sim.segments);
  }
  ensure_parent(p.sites);
  write_sites_csv(p.sites.string(), sim.sites);
  ensure_parent(p.observations);
  write_observations_csv(p.observations.string(), sim.observations);
  if (!p.truth.empty()) {
    ensure_parent(p.truth);
    write_truth_csv(p.truth.string(), sim);
  }
  if (!p.prediction_sites.empty() && !sim.prediction_sites.sites.empty()) {
    ensure_parent(p.prediction_sites);
    write_prediction_sites_csv(p.prediction_sites.string(), sim.prediction_sites);
  }
  return sim;
}

void write_truth_csv(const std::string& path, const SimResult& sim) {
  const std::set<int> held(sim.heldout_sites.begin(), sim.heldout_sites.end());
  std::ostringstream out;
  out << "site_id,t,y_true,heldout\n";
  const auto& o = sim.observations;
  for (std::size_t s = 0; s < o.site_ids.size(); ++s)
    for (std::size_t t = 0; t < o.times.size(); ++t)
      out << o.site_ids[s] << ',' << o.times[t] << ','
          << fmt(sim.truth(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t))) << ','
          << (held.contains(o.site_ids[s]) ? 1 : 0) << '\n';
  write_text(path, out.str());
}

TruthRecord read_truth_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto cid = t.column("site_id"), ct = t.column("t"), cy = t.column("y_true");
  const auto ch = t.find("heldout");
  TruthRecord r;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::pair key{t.integer(i, cid), t.integer(i, ct)};
    r.y[key] = t.number(i, cy);
    if (ch && !t.blank(i, *ch) && t.integer(i, *ch) != 0) r.heldout.push_back(key);
  }
  return r;
}

PosteriorDraws run_fit(const Workspace& ws) { return run_mcmc(ws.problem(), ws.config.mcmc); }

void write_diagnostics_csv(const std::string& path, std::span<const ParamDiagnostics> diags) {
  std::ostringstream out;
  out << "parameter,mean,sd,rhat,ess_bulk,mcse\n";
  for (const auto& d : diags)
    out << d.name << ',' << fmt(d.mean) << ',' << fmt(d.sd) << ',' << fmt(d.rhat) << ',' << fmt(d.ess_bulk) << ','
        << fmt(d.mcse) << '\n';
  write_text(path, out.str());
}

std::string format_diagnostics_table(std::span<const ParamDiagnostics> diags) {
  std::size_t w = 9;
  for (const auto& d : diags) w = std::max(w, d.name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(w)) << "parameter" << std::right << std::setw(12) << "mean"
      << std::setw(12) << "sd" << std::setw(9) << "rhat" << std::setw(10) << "ess_bulk" << std::setw(12) << "mcse"
      << '\n';
  for (const auto& d : diags)
    out << std::left << std::setw(static_cast<int>(w)) << d.name << std::right << std::setprecision(4)
        << std::setw(12) << d.mean << std::setw(12) << d.sd << std::fixed << std::setprecision(3) << std::setw(9)
        << d.rhat << std::setprecision(0) << std::setw(10) << d.ess_bulk << std::defaultfloat
        << std::setprecision(4) << std::setw(12) << d.mcse << '\n';
  return out.str();
}

void write_fit(const Workspace& ws, const PosteriorDraws& draws, const fs::path& dir) {
  ensure_dir(dir);
  std::vector<std::string> cells;
  for (const auto& [s, t] : draws.missing_cells)
    cells.push_back(cell_name(ws.panel.site_ids[static_cast<std::size_t>(s)], ws.panel.times[static_cast<std::size_t>(t)]));
  std::vector<std::string> slices;
  for (int t : ws.panel.times) slices.push_back("loglik[" + std::to_string(t) + "]");

  std::ostringstream summary;
  summary << "chain,block,acceptance,scale\n";
  const char* blocks[] = {"beta", "scale", "range", "temporal"};
  for (std::size_t k = 0; k < draws.chains.size(); ++k) {
    const auto& c = draws.chains[k];
    write_matrix_csv(chain_file(dir, "draws", k), draws.names, c.params);
    write_matrix_csv(chain_file(dir, "imputed", k), cells, c.imputed);
    write_matrix_csv(chain_file(dir, "loglik", k), slices, c.loglik);
    for (std::size_t b = 0; b < c.acceptance.size() && b < 4; ++b)
      summary << k + 1 << ',' << blocks[b] << ',' << fmt(c.acceptance[b]) << ','
              << fmt(b < c.scales.size() ? c.scales[b] : kNaN) << '\n';
  }
  write_text((dir / "chain_summary.csv").string(), summary.str());
  write_diagnostics_csv((dir / "diagnostics.csv").string(), draws.diagnostics);

  json design{{"names", ws.design.names},
              {"center", ws.design.transform.center},
              {"scale", ws.design.transform.scale},
              {"formula", ws.config.formula.terms},
              {"standardize", ws.config.formula.standardize}};
  write_text((dir / "design.json").string(), design.dump(2) + "\n");

  std::ostringstream held;
  held << "site_id,t,y\n";
  for (Eigen::Index t = 0; t < ws.heldout.cols(); ++t)
    for (Eigen::Index s = 0; s < ws.heldout.rows(); ++s)
      if (ws.heldout(s, t))
        held << ws.table.site_ids[static_cast<std::size_t>(s)] << ',' << ws.table.times[static_cast<std::size_t>(t)]
             << ',' << fmt(ws.table.y(s, t)) << '\n';
  write_text((dir / "heldout.csv").string(), held.str());

  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << std::hash<std::string>{}(ws.config.source_text);
  json manifest{{"seed", ws.config.seed},
                {"config_hash", hash.str()},
                {"chains", draws.chains.size()},
                {"draws_per_chain", draws.draws_per_chain()},
                {"parameters", draws.names},
                {"halted", draws.halted},
                {"warnings", draws.warnings},
                {"versions",
                 {{"ssnst", kVersion},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"boost", BOOST_LIB_VERSION},
                  {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
  write_text((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

PosteriorDraws read_fit(const Workspace& ws, const fs::path& dir) {
  PosteriorDraws d;
  d.names = ws.layout->names();
  d.missing_cells = ws.panel.missing_cells();
  const auto chains = static_cast<std::size_t>(ws.config.mcmc.chains);
  for (std::size_t k = 0; k < chains; ++k) {
    const auto path = chain_file(dir, "draws", k);
    if (!fs::exists(path)) fail(ErrorCode::IoError, "missing draws file " + path + " (run fit first)");
    ChainDraws c;
    std::vector<std::string> header;
    c.params = read_matrix_csv(path, &header);
    if (header != d.names) fail(ErrorCode::SchemaError, path + ": parameter columns do not match the model");
    c.imputed = read_matrix_csv(chain_file(dir, "imputed", k), &header);
    if (header.size() != d.missing_cells.size())
      fail(ErrorCode::SchemaError, "imputed draws do not match the panel's missing cells");
    if (c.imputed.rows() == 0) c.imputed.resize(c.params.rows(), 0);
    c.loglik = read_matrix_csv(chain_file(dir, "loglik", k), &header);
    d.chains.push_back(std::move(c));
  }
  if (d.draws_per_chain() >= 4) d.diagnostics = diagnostics(d);
  return d;
}

PredictionTask prediction_task(const Workspace& ws) {
  if (!ws.prediction_sites) fail(ErrorCode::ConfigInvalid, "no prediction sites were provided");
  const auto& ps = *ws.prediction_sites;
  PredictionTask task;
  task.sites = ps.sites;
  task.X = build_design(ps.covariate_table(), ws.config.formula, &ws.design.transform).X;
  if (ws.spec.temporal.kind == TemporalCase::var_covariate) {
    const auto P = static_cast<Eigen::Index>(ps.sites.size());
    task.phi_covariates.resize(P, static_cast<Eigen::Index>(ws.config.phi_covariates.size()));
    for (std::size_t j = 0; j < ws.config.phi_covariates.size(); ++j) {
      const auto it = ps.covariates.find(ws.config.phi_covariates[j]);
      if (it == ps.covariates.end())
        fail(ErrorCode::CovariateMissing, "prediction sites lack covariate '" + ws.config.phi_covariates[j] + "'");
      task.phi_covariates.col(static_cast<Eigen::Index>(j)) = it->second.col(0);
    }
  }
  const auto& c = ws.config.prediction;
  task.subsample = c.subsample;
  task.batch_size = c.batch_size;
  task.thresholds = c.thresholds;
  task.hdi_mass = c.hdi_mass;
  task.joint_noise = c.joint_noise;
  task.seed = ws.config.seed;
  return task;
}

KrigingMethod kriging_method(const Workspace& ws) {
  switch (ws.config.prediction.method) {
    case PredictionMethod::separable: return KrigingMethod::separable;
    case PredictionMethod::recursion: return KrigingMethod::recursion;
    case PredictionMethod::automatic: break;
  }
  return ws.spec.temporal.kind == TemporalCase::ar ? KrigingMethod::separable : KrigingMethod::recursion;
}

PredictionResult run_prediction(const Workspace& ws, const PosteriorDraws& draws) {
  return predict(ws.context(), draws, prediction_task(ws), kriging_method(ws));
}

void write_predictions(const Workspace& ws, const PredictionResult& pred, const fs::path& dir) {
  ensure_dir(dir);
  const auto& times = ws.table.times;
  const auto& thr = ws.config.prediction.thresholds;
  std::ostringstream out;
  out << "site_id,t,mean,sd,lower,upper";
  for (double v : thr) out << ',' << threshold_name(v);
  out << '\n';
  const auto P = static_cast<Eigen::Index>(pred.site_ids.size());
  for (Eigen::Index p = 0; p < P; ++p)
    for (std::size_t t = 0; t < times.size(); ++t) {
      const auto tc = static_cast<Eigen::Index>(t);
      out << pred.site_ids[static_cast<std::size_t>(p)] << ',' << times[t] << ',' << fmt(pred.mean(p, tc)) << ','
          << fmt(pred.sd(p, tc)) << ',' << fmt(pred.lower(p, tc)) << ',' << fmt(pred.upper(p, tc));
      for (const auto& e : pred.exceed) out << ',' << fmt(e(p, tc));
      out << '\n';
    }
  write_text((dir / "predictions.csv").string(), out.str());

  std::vector<std::string> header{"draw"};
  for (std::size_t t = 0; t < times.size(); ++t)
    for (Eigen::Index p = 0; p < P; ++p) header.push_back(cell_name(pred.site_ids[static_cast<std::size_t>(p)], times[t]));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(pred.draws.size()), static_cast<Eigen::Index>(header.size()));
  for (std::size_t d = 0; d < pred.draws.size(); ++d) {
    const auto r = static_cast<Eigen::Index>(d);
    m(r, 0) = static_cast<double>(pred.draw_index[d]);
    m.row(r).tail(m.cols() - 1) = pred.draws[d].reshaped().transpose();
  }
  write_matrix_csv((dir / "prediction_draws.csv").string(), header, m);
}

PredictionResult read_predictions(const Workspace& ws, const fs::path& dir) {
  const auto path = (dir / "predictions.csv").string();
  if (!fs::exists(path)) fail(ErrorCode::IoError, "missing " + path + " (run predict first)");
  const CsvTable t = read_csv(path);
  const auto cid = t.column("site_id"), ct = t.column("t"), cm = t.column("mean"), cs = t.column("sd"),
             cl = t.column("lower"), cu = t.column("upper");
  PredictionResult r;
  const auto& times = ws.table.times;
  const auto T = static_cast<Eigen::Index>(times.size());
  std::unordered_map<int, Eigen::Index> row_of;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const int id = t.integer(i, cid);
    if (!row_of.contains(id)) {
      row_of[id] = static_cast<Eigen::Index>(r.site_ids.size());
      r.site_ids.push_back(id);
    }
  }
  const auto P = static_cast<Eigen::Index>(r.site_ids.size());
  const auto& thr = ws.config.prediction.thresholds;
  r.mean.resize(P, T);
  r.sd.resize(P, T);
  r.lower.resize(P, T);
  r.upper.resize(P, T);
  r.exceed.assign(thr.size(), Eigen::MatrixXd(P, T));
  std::vector<std::size_t> ce;
  for (double v : thr) ce.push_back(t.column(threshold_name(v)));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const Eigen::Index p = row_of[t.integer(i, cid)];
    const auto it = std::find(times.begin(), times.end(), t.integer(i, ct));
    if (it == times.end()) fail(ErrorCode::SchemaError, path + ": unknown time step");
    const auto tc = static_cast<Eigen::Index>(it - times.begin());
    auto num = [&](std::size_t c) { return t.blank(i, c) ? kNaN : t.number(i, c); };
    r.mean(p, tc) = num(cm);
    r.sd(p, tc) = num(cs);
    r.lower(p, tc) = num(cl);
    r.upper(p, tc) = num(cu);
    for (std::size_t k = 0; k < ce.size(); ++k) r.exceed[k](p, tc) = num(ce[k]);
  }
  const Eigen::MatrixXd m = read_matrix_csv((dir / "prediction_draws.csv").string());
  if (m.cols() != 1 + P * T) fail(ErrorCode::SchemaError, "prediction draws do not match predictions.csv");
  for (Eigen::Index d = 0; d < m.rows(); ++d) {
    r.draw_index.push_back(static_cast<std::size_t>(m(d, 0)));
    r.draws.emplace_back(m.row(d).tail(P * T).reshaped(P, T));
  }
  for (double v : thr) r.proportion.push_back(proportion_above(r.draws, v));
  return r;
}

ScoredCells imputation_cells(const Workspace& ws, const PosteriorDraws& draws, const TruthRecord* truth) {
  std::set<std::pair<int, int>> flagged;
  if (truth) flagged.insert(truth->heldout.begin(), truth->heldout.end());
  const Eigen::MatrixXd imp = draws.stacked_imputed();
  ScoredCells out;
  std::vector<Eigen::Index> cols;
  for (std::size_t k = 0; k < draws.missing_cells.size(); ++k) {
    const auto [s, t] = draws.missing_cells[k];
    const int id = ws.panel.site_ids[static_cast<std::size_t>(s)];
    const int time = ws.panel.times[static_cast<std::size_t>(t)];
    const bool split = ws.heldout(s, t);
    if (!split && !flagged.contains({id, time})) continue;
    double y = kNaN;
    if (truth && truth->y.contains({id, time}))
      y = truth->y.at({id, time});
    else if (split)
      y = ws.table.y(s, t);
    if (!std::isfinite(y)) continue;
    out.site_ids.push_back(id);
    out.times.push_back(time);
    out.truth.push_back(y);
    cols.push_back(static_cast<Eigen::Index>(k));
  }
  out.draws.resize(imp.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.draws.col(static_cast<Eigen::Index>(j)) = imp.col(cols[j]);
  const double mass = ws.config.prediction.hdi_mass;
  for (Eigen::Index j = 0; j < out.draws.cols(); ++j) {
    out.mean.push_back(out.draws.col(j).mean());
    if (out.draws.rows() >= 50) {
      const Eigen::VectorXd c = out.draws.col(j);
      const auto [lo, hi] = hdi(std::span<const double>(c.data(), static_cast<std::size_t>(c.size())), mass);
      out.lower.push_back(lo);
      out.upper.push_back(hi);
    } else {
      out.lower.push_back(kNaN);
      out.upper.push_back(kNaN);
    }
  }
  return out;
}

ScoredCells kriging_cells(const Workspace& ws, const PredictionResult& pred, const TruthRecord* truth) {
  std::unordered_map<int, Eigen::Index> table_row;
  for (std::size_t i = 0; i < ws.table.site_ids.size(); ++i) table_row[ws.table.site_ids[i]] = static_cast<Eigen::Index>(i);
  ScoredCells out;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> idx;
  const auto& times = ws.table.times;
  for (std::size_t t = 0; t < times.size(); ++t)
    for (std::size_t p = 0; p < pred.site_ids.size(); ++p) {
      const int id = pred.site_ids[p];
      double y = kNaN;
      if (truth && truth->y.contains({id, times[t]})) {
        y = truth->y.at({id, times[t]});
      } else if (const auto it = table_row.find(id); it != table_row.end()) {
        if (ws.table.observed(it->second, static_cast<Eigen::Index>(t))) y = ws.table.y(it->second, static_cast<Eigen::Index>(t));
      }
      if (!std::isfinite(y)) continue;
      const auto pi = static_cast<Eigen::Index>(p), ti = static_cast<Eigen::Index>(t);
      out.site_ids.push_back(id);
      out.times.push_back(times[t]);
      out.truth.push_back(y);
      out.mean.push_back(pred.mean(pi, ti));
      out.lower.push_back(pred.lower(pi, ti));
      out.upper.push_back(pred.upper(pi, ti));
      idx.emplace_back(pi, ti);
    }
  out.draws.resize(static_cast<Eigen::Index>(pred.draws.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t d = 0; d < pred.draws.size(); ++d)
    for (std::size_t j = 0; j < idx.size(); ++j)
      out.draws(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = pred.draws[d](idx[j].first, idx[j].second);
  return out;
}

MethodScores score(const ScoredCells& cells, double nominal) {
  MethodScores s;
  s.cells = cells.truth.size();
  s.rmspe = rmspe(cells.mean, cells.truth);
  s.crps = cells.draws.rows() >= 2 ? crps_sample(cells.draws, cells.truth) : kNaN;
  const bool have_intervals = std::all_of(cells.lower.begin(), cells.lower.end(), [](double v) { return std::isfinite(v); });
  if (have_intervals) s.coverage = coverage(cells.lower, cells.upper, cells.truth, nominal);
  return s;
}

std::string evaluation_json(const Workspace& ws, const PosteriorDraws& draws, const PredictionResult* pred,
                            const TruthRecord* truth) {
  const double nominal = ws.config.prediction.hdi_mass;
  std::optional<MethodScores> imp, krig;
  if (const auto cells = imputation_cells(ws, draws, truth); !cells.truth.empty()) imp = score(cells, nominal);
  if (pred)
    if (const auto cells = kriging_cells(ws, *pred, truth); !cells.truth.empty()) krig = score(cells, nominal);
  if (!imp && !krig) fail(ErrorCode::EmptyHoldout, "no held-out cell with a known truth to score");
  const MethodScores& head = imp ? *imp : *krig;

  json j;
  j["rmspe"] = head.rmspe;
  j["crps"] = head.crps;
  j["coverage"] = coverage_json(head.coverage, nominal);
  j["scored_by"] = imp ? "imputation" : "kriging";
  const WaicResult w = waic(draws.stacked_loglik());
  j["waic"] = {{"waic", w.waic}, {"lppd", w.lppd}, {"p_waic", w.p_waic}, {"degenerate", w.degenerate},
               {"pointwise", std::vector<double>(w.pointwise.data(), w.pointwise.data() + w.pointwise.size())}};
  if (!draws.diagnostics.empty()) {
    const McseRanking r = mcse_rank(draws);
    j["se_rank"] = {{"names", r.names}, {"mcse", r.mcse}, {"rank", r.rank}, {"mean_rank", r.mean_rank}};
  } else {
    j["se_rank"] = nullptr;
  }
  j["imputation"] = imp ? scores_json(*imp, nominal) : json(nullptr);
  if (pred) j["kriging"] = krig ? scores_json(*krig, nominal) : json(nullptr);
  return j.dump(2) + "\n";
}

void write_predicted_vs_observed_csv(const std::string& path,
                                     std::span<const std::pair<std::string, ScoredCells>> sets) {
  std::ostringstream out;
  out << "method,site_id,t,observed,mean,lower,upper\n";
  for (const auto& [method, c] : sets)
    for (std::size_t i = 0; i < c.truth.size(); ++i)
      out << method << ',' << c.site_ids[i] << ',' << c.times[i] << ',' << fmt(c.truth[i]) << ',' << fmt(c.mean[i])
          << ',' << fmt(c.lower[i]) << ',' << fmt(c.upper[i]) << '\n';
  write_text(path, out.str());
}

void write_exceedance_csv(const std::string& path, const PredictionResult& pred, std::span<const int> times,
                          std::span<const double> thresholds) {
  std::ostringstream out;
  out << "site_id,t,threshold,probability\n";
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    const Eigen::MatrixXd e = k < pred.exceed.size() ? pred.exceed[k] : exceedance(pred.draws, thresholds[k]);
    for (std::size_t p = 0; p < pred.site_ids.size(); ++p)
      for (std::size_t t = 0; t < times.size(); ++t)
        out << pred.site_ids[p] << ',' << times[t] << ',' << fmt(thresholds[k]) << ','
            << fmt(e(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(t))) << '\n';
  }
  write_text(path, out.str());
}

double length_above_km(double proportion, double network_length_m) noexcept {
  return proportion * network_length_m / 1000.0;
}

void write_proportion_above_csv(const std::string& path, const PredictionResult& pred, std::span<const int> times,
                                std::span<const double> thresholds, std::optional<double> network_length_m) {
  std::ostringstream out;
  out << "draw,t,threshold,proportion,length_above_km\n";
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    const Eigen::MatrixXd m = k < pred.proportion.size() ? pred.proportion[k] : proportion_above(pred.draws, thresholds[k]);
    for (Eigen::Index d = 0; d < m.rows(); ++d)
      for (std::size_t t = 0; t < times.size(); ++t) {
        const double v = m(d, static_cast<Eigen::Index>(t));
        const auto draw = d < static_cast<Eigen::Index>(pred.draw_index.size())
                              ? pred.draw_index[static_cast<std::size_t>(d)]
                              : static_cast<std::size_t>(d);
        out << draw << ',' << times[t] << ',' << fmt(thresholds[k]) << ',' << fmt(v) << ','
            << (network_length_m ? fmt(length_above_km(v, *network_length_m)) : std::string()) << '\n';
      }
  }
  write_text(path, out.str());
}

void write_posterior_hist_csv(const std::string& path, const PosteriorDraws& draws, int bins) {
  if (bins < 1) fail(ErrorCode::ConfigInvalid, "histogram needs at least one bin");
  const Eigen::MatrixXd all = draws.stacked_params();
  std::ostringstream out;
  out << "parameter,bin,lower,upper,count\n";
  for (std::size_t j = 0; j < draws.names.size(); ++j) {
    const Eigen::VectorXd c = all.col(static_cast<Eigen::Index>(j));
    if (c.size() == 0) continue;
    const double lo = c.minCoeff(), hi = c.maxCoeff();
    const int nb = hi > lo ? bins : 1;
    const double width = hi > lo ? (hi - lo) / nb : 0.0;
    std::vector<long> count(static_cast<std::size_t>(nb), 0);
    for (double v : c) {
      int b = width > 0.0 ? static_cast<int>((v - lo) / width) : 0;
      ++count[static_cast<std::size_t>(std::clamp(b, 0, nb - 1))];
    }
    for (int b = 0; b < nb; ++b)
      out << draws.names[j] << ',' << b << ',' << fmt(lo + b * width) << ','
          << fmt(b + 1 == nb ? hi : lo + (b + 1) * width) << ',' << count[static_cast<std::size_t>(b)] << '\n';
  }
  write_text(path, out.str());
}

void emit_plot_tables(const PlotInputs& in, const fs::path& dir) {
  ensure_dir(dir);
  if (!in.scored.empty()) write_predicted_vs_observed_csv((dir / "predicted_vs_observed.csv").string(), in.scored);
  if (in.prediction && !in.thresholds.empty()) {
    write_exceedance_csv((dir / "exceedance.csv").string(), *in.prediction, in.times, in.thresholds);
    write_proportion_above_csv((dir / "proportion_above.csv").string(), *in.prediction, in.times, in.thresholds,
                               in.network_length_m);
  }
  if (in.draws && in.draws->draws_per_chain() > 0) write_posterior_hist_csv((dir / "posterior_hist.csv").string(), *in.draws);
}

}  // namespace ssnst
