// Command-line driver: experiment runs, pruning, L-curves and the Gaussian
// table study. Exit status 0 on success, 1 on runtime failure, 2 on usage or
// configuration errors.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "hsnet/csv.hpp"
#include "hsnet/experiment.hpp"
#include "hsnet/prune.hpp"
#include "hsnet/serialize.hpp"
#include "hsnet/svg.hpp"

namespace fs = std::filesystem;
using namespace hsnet;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct Globals {
  std::uint64_t seed = 0;
  fs::path out_dir;
  fs::path config;
};

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("cannot write '" + tmp.string() + "'");
    fn(os);
  }
  fs::rename(tmp, path);
}

ExperimentConfig config_with_overrides(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  ExperimentConfig c = load_experiment_config(g.config);
  if (!g.out_dir.empty()) c.output_dir = g.out_dir;
  return c;
}

void print_progress(const std::string& line) { std::cerr << line << '\n'; }

int cmd_run(const Globals& g) {
  const ExperimentConfig c = config_with_overrides(g);
  const RunSummary s = run_experiment(c, g.seed, print_progress);
  std::cout << "lambda " << format_double(s.lambda) << '\n';
  for (const auto& p : s.artifacts) std::cout << "wrote " << p.string() << '\n';
  return 0;
}

int cmd_lcurve(const Globals& g) {
  ExperimentConfig c = config_with_overrides(g);
  const Dataset data = experiment_dataset(c, derive_seed(g.seed, 0));
  const auto lambdas = log_grid(c.grid_lo, c.grid_hi, c.grid_per_decade);
  TrainConfig train = c.train;
  train.seed = derive_seed(g.seed, 1);
  const LCurve curve = build_lcurve_grid(
      [&](std::uint64_t s) { return experiment_graph(c, data, s); }, data, lambdas, train, c.phi,
      [&](std::size_t i, const LCurvePoint& p, const NetworkGraph&, const auto&) {
        print_progress("grid " + std::to_string(i + 1) + "/" + std::to_string(lambdas.size()) +
                       ": lambda=" + format_double(p.lambda) + " E=" + format_double(p.deviation) +
                       " S=" + format_double(p.sparsity));
      });
  const CornerResult corner = select_corner(curve);
  write_file(c.output_dir / "lcurve.csv", [&](std::ostream& os) { write_lcurve_csv(os, curve); });
  write_file(c.output_dir / "lcurve.svg",
             [&](std::ostream& os) { write_lcurve_svg(os, curve, corner.index); });
  std::cout << "corner lambda " << format_double(corner.lambda) << '\n';
  return 0;
}

struct PruneArgs {
  fs::path model;
  double threshold = 0.0;
  fs::path probes;
  double tolerance = 0.0;
};

int cmd_prune(const Globals& g, const PruneArgs& a) {
  const NetworkGraph graph = load_graph(a.model);
  const PruneResult pruned = prune_graph(graph, a.threshold);
  const fs::path dir = g.out_dir.empty() ? fs::path(".") : g.out_dir;
  write_file(dir / "pruned.hsng", [&](std::ostream& os) {
    const auto bytes = encode_graph(pruned.graph);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  });
  const auto before = complexity(graph), after = complexity(pruned.graph);
  write_file(dir / "prune.csv", [&](std::ostream& os) { write_prune_csv(os, pruned.report); });
  write_file(dir / "complexity.csv",
             [&](std::ostream& os) { write_complexity_csv(os, before, after); });
  write_prune_table(std::cout, pruned.report);
  write_complexity_table(std::cout, before, after);

  if (!a.probes.empty()) {
    std::ifstream is(a.probes);
    if (!is) throw Error("cannot open probes '" + a.probes.string() + "'");
    const Dataset probes = read_dataset_csv(is);
    Shape shape{probes.size()};
    for (auto d : graph.input_shape()) shape.push_back(d);
    const LosslessCheck check =
        assert_lossless(graph, pruned.graph, probes.inputs.reshaped(shape), a.tolerance);
    std::cout << "lossless " << (check.passed ? "yes" : "no") << " max deviation "
              << format_double(check.max_deviation) << " over " << probes.size() << " probes\n";
    if (!check.passed) return kRuntimeFailure;
  }
  return 0;
}

struct Table1Args {
  std::size_t repetitions = 50;
  std::size_t epochs = 0;
  std::size_t samples = 0;
};

int cmd_table1(const Globals& g, const Table1Args& a) {
  GaussianStudyConfig c;
  c.repetitions = a.repetitions;
  if (a.epochs) c.train.epochs = a.epochs;
  if (a.samples) c.samples = a.samples;
  std::vector<GaussianStudyRow> rows;
  const auto settings = table1_settings();
  for (std::size_t i = 0; i < settings.size(); ++i) {
    rows.push_back(run_gaussian_study(settings[i], c, derive_seed(g.seed, i)));
    print_progress("setting " + std::to_string(i + 1) + "/" + std::to_string(settings.size()) +
                   " done");
  }
  write_table1_text(std::cout, rows);
  if (!g.out_dir.empty()) {
    write_file(g.out_dir / "table1.csv", [&](std::ostream& os) { write_table1_csv(os, rows); });
  }
  return 0;
}

struct ComplexityArgs {
  fs::path model;
  fs::path baseline;
};

int cmd_complexity(const ComplexityArgs& a) {
  const ComplexityReport model = complexity(load_graph(a.model));
  if (a.baseline.empty()) {
    std::cout << "nodes " << model.node_count << "\nweights " << model.weight_count << "\nflops "
              << model.flop_count << '\n';
    return 0;
  }
  write_complexity_table(std::cout, complexity(load_graph(a.baseline)), model);
  return 0;
}

struct GenDataArgs {
  GaussianSpec spec;
  std::size_t samples = 1000;
  std::string name = "gaussian.csv";
};

int cmd_gen_data(const Globals& g, const GenDataArgs& a) {
  const Dataset d = gen_gaussian(a.spec, a.samples, g.seed);
  const fs::path path = (g.out_dir.empty() ? fs::path(".") : g.out_dir) / a.name;
  write_file(path, [&](std::ostream& os) { write_dataset_csv(os, d); });
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity-layer networks: training, lambda selection and structural pruning"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::string out_dir, config;
  app.add_option("--seed", g.seed, "Base seed for every derived random stream");
  app.add_option("--out-dir", out_dir, "Directory for written artifacts");
  app.add_option("--config", config, "Experiment config (JSON)");

  auto* run = app.add_subcommand("run", "Train, select lambda, prune and write all artifacts");
  auto* lcurve = app.add_subcommand("lcurve", "Train over the config's lambda grid and report the corner");

  PruneArgs prune_args;
  auto* prune = app.add_subcommand("prune", "Remove zero-sensitivity nodes from a saved model");
  prune->add_option("model", prune_args.model, "Saved model (.hsng)")->required();
  prune->add_option("--threshold", prune_args.threshold, "Remove nodes with |s| <= threshold")
      ->check(CLI::NonNegativeNumber);
  prune->add_option("--probes", prune_args.probes, "Dataset CSV of probe inputs for the lossless check");
  prune->add_option("--tolerance", prune_args.tolerance, "Allowed max output deviation")
      ->check(CLI::NonNegativeNumber);

  Table1Args t1;
  auto* table1 = app.add_subcommand("table1", "Surviving-node study on the six Gaussian settings");
  table1->add_option("--repetitions", t1.repetitions, "Runs per setting")->check(CLI::PositiveNumber);
  table1->add_option("--epochs", t1.epochs, "Override training epochs");
  table1->add_option("--samples", t1.samples, "Override samples per run");

  ComplexityArgs cx;
  auto* cplx = app.add_subcommand("complexity", "Node, weight and FLOP counts of a saved model");
  cplx->add_option("model", cx.model, "Saved model (.hsng)")->required();
  cplx->add_option("--baseline", cx.baseline, "Compare against this model");

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic Gaussian dataset as CSV");
  gen->add_option("--corr", gd.spec.n_corr, "Correlated high-variance inputs");
  gen->add_option("--indep", gd.spec.n_indep, "Independent low-variance inputs");
  gen->add_option("--var-hi", gd.spec.var_hi, "Variance of the correlated inputs");
  gen->add_option("--var-lo", gd.spec.var_lo, "Variance of the independent inputs");
  gen->add_option("--rho", gd.spec.rho, "Pairwise correlation within the correlated block");
  gen->add_option("--samples", gd.samples, "Rows to generate")->check(CLI::PositiveNumber);
  gen->add_option("--name", gd.name, "Output file name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }
  g.out_dir = out_dir;
  g.config = config;

  try {
    if (*run) return cmd_run(g);
    if (*lcurve) return cmd_lcurve(g);
    if (*prune) return cmd_prune(g, prune_args);
    if (*table1) return cmd_table1(g, t1);
    if (*cplx) return cmd_complexity(cx);
    if (*gen) return cmd_gen_data(g, gd);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}
