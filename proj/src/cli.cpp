#include "ssnst/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssnst/error.hpp"
#include "ssnst/workbench.hpp"

namespace ssnst {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool resume = false;
  int halt_after = -1;
};

RunConfig configure(const Options& o) {
  RunConfig c = load_config(o.config);
  if (o.seed) c.set_seed(*o.seed);
  if (!o.out.empty()) c.paths.output = o.out;
  c.validate();
  return c;
}

std::optional<double> network_length(const Workspace& ws) {
  if (!ws.network) return std::nullopt;
  return ws.network->total_length();
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const RunConfig c = configure(o);
  const SimResult sim = run_simulation(c);
  out << "simulated " << sim.sites.size() << " sites x " << sim.observations.times.size() << " steps";
  if (!sim.heldout_sites.empty()) out << ", " << sim.heldout_sites.size() << " held-out series";
  out << '\n';
  return 0;
}

int cmd_fit(const Options& o, std::ostream& out, std::ostream& err) {
  RunConfig c = configure(o);
  if (c.mcmc.checkpoint_every > 0) c.mcmc.checkpoint_dir = (c.paths.output / "checkpoints").string();
  c.mcmc.resume = o.resume;
  c.mcmc.halt_after = o.halt_after;
  if (o.resume && c.mcmc.checkpoint_dir.empty()) fail(ErrorCode::ConfigInvalid, "--resume needs checkpoints enabled");
  const Workspace ws = load_workspace(c);
  const PosteriorDraws draws = run_fit(ws);
  for (const auto& w : draws.warnings) err << "warning: " << w << '\n';
  if (draws.halted) {
    out << "halted after " << c.mcmc.halt_after << " iterations; resume with --resume\n";
    return 0;
  }
  write_fit(ws, draws, c.paths.output);
  PlotInputs plots;
  plots.draws = &draws;
  emit_plot_tables(plots, c.paths.output);
  out << "fit " << draws.chains.size() << " chains x " << draws.draws_per_chain() << " draws -> "
      << c.paths.output.string() << '\n';
  if (!draws.diagnostics.empty()) out << format_diagnostics_table(draws.diagnostics);
  return 0;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const RunConfig c = configure(o);
  const Workspace ws = load_workspace(c);
  const PosteriorDraws draws = read_fit(ws, c.paths.output);
  const PredictionResult pred = run_prediction(ws, draws);
  write_predictions(ws, pred, c.paths.output);
  PlotInputs plots;
  plots.prediction = &pred;
  plots.times = ws.table.times;
  plots.thresholds = c.prediction.thresholds;
  plots.network_length_m = network_length(ws);
  emit_plot_tables(plots, c.paths.output);
  out << "predicted " << pred.site_ids.size() << " sites from " << pred.draws.size() << " draws\n";
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const RunConfig c = configure(o);
  const Workspace ws = load_workspace(c);
  const PosteriorDraws draws = read_fit(ws, c.paths.output);
  std::optional<PredictionResult> pred;
  if (fs::exists(c.paths.output / "predictions.csv")) pred = read_predictions(ws, c.paths.output);
  std::optional<TruthRecord> truth;
  if (!c.paths.truth.empty() && fs::exists(c.paths.truth)) truth = read_truth_csv(c.paths.truth.string());
  const TruthRecord* tr = truth ? &*truth : nullptr;
  const std::string report = evaluation_json(ws, draws, pred ? &*pred : nullptr, tr);
  write_text((c.paths.output / "metrics.json").string(), report);

  PlotInputs plots;
  if (auto cells = imputation_cells(ws, draws, tr); !cells.truth.empty()) plots.scored.emplace_back("imputation", std::move(cells));
  if (pred)
    if (auto cells = kriging_cells(ws, *pred, tr); !cells.truth.empty()) plots.scored.emplace_back("kriging", std::move(cells));
  emit_plot_tables(plots, c.paths.output);
  out << report;
  return 0;
}

int cmd_diagnose(const Options& o, std::ostream& out) {
  const RunConfig c = configure(o);
  const Workspace ws = load_workspace(c);
  const PosteriorDraws draws = read_fit(ws, c.paths.output);
  if (draws.diagnostics.empty()) fail(ErrorCode::InsufficientDraws, "need at least 4 draws per chain");
  out << format_diagnostics_table(draws.diagnostics);
  return 0;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal stream network models: simulate, fit, predict, evaluate, diagnose", "ssnst"};
  app.require_subcommand(1, 1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->required();
    sub->add_option("--seed", o.seed, "override the configured seed");
    sub->add_option("--out", o.out, "override the output directory");
  };
  auto* sim = app.add_subcommand("simulate", "write a simulated scenario to the configured input paths");
  auto* fit = app.add_subcommand("fit", "run MCMC and write draws and diagnostics");
  auto* pred = app.add_subcommand("predict", "krige the prediction sites from saved draws");
  auto* eval = app.add_subcommand("evaluate", "score held-out cells and write metrics.json");
  auto* diag = app.add_subcommand("diagnose", "print R-hat and ESS of saved draws");
  for (auto* s : {sim, fit, pred, eval, diag}) common(s);
  fit->add_flag("--resume", o.resume, "continue from the last checkpoint");
  fit->add_option("--halt-after", o.halt_after, "stop after this many iterations");

  if (!args.empty() && args.front().rfind("-", 0) != 0 && !app.get_subcommand_no_throw(args.front())) {
    err << "error: unknown subcommand '" << args.front() << "'\n\n" << app.help();
    return 1;
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (fit->parsed()) return cmd_fit(o, out, err);
    if (pred->parsed()) return cmd_predict(o, out);
    if (eval->parsed()) return cmd_evaluate(o, out);
    if (diag->parsed()) return cmd_diagnose(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_numerical() ? 2 : 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 1;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace ssnst
