// Command-line frontend: simulate | train | rank | subsage | convert.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "subsage/bootstrap.hpp"
#include "subsage/dataset.hpp"
#include "subsage/error.hpp"
#include "subsage/format.hpp"
#include "subsage/parallel.hpp"
#include "subsage/shap_erfc.hpp"
#include "subsage/subsage.hpp"
#include "subsage/synthetic.hpp"
#include "subsage/trainer.hpp"
#include "subsage/tree_model.hpp"

namespace fs = std::filesystem;
using namespace subsage;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

bool g_quiet = false;

void info(const std::string& msg) {
  if (!g_quiet) std::cerr << msg << '\n';
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

// Reads {"response": ..., "kinds": {name: kind}}; the simulate sidecar has
// this shape.
CsvSchema load_schema(const std::string& path, const std::string& response) {
  CsvSchema schema;
  schema.response = response;
  if (path.empty()) return schema;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    if (j.contains("response") && response.empty()) {
      schema.response = j.at("response").get<std::string>();
    }
    if (j.contains("kinds")) {
      for (const auto& [name, kind] : j.at("kinds").items()) {
        schema.kinds[name] = feature_kind_from_string(kind.get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid schema file '" + path + "': " + e.what());
  }
  if (schema.response.empty()) schema.response = "y";
  return schema;
}

int resolve_feature(const Dataset& data, const std::string& key) {
  const auto& names = data.feature_names();
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == key) return static_cast<int>(j);
  }
  throw DataError("unknown feature '" + key + "'");
}

LossKind default_loss(const Ensemble& ensemble) {
  return ensemble.objective() == Objective::regression
             ? LossKind::squared_error
             : LossKind::binary_cross_entropy;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  SyntheticConfig cfg;
  std::string out_dir = ".";
  std::string prefix = "synthetic";
};

int run_simulate(const SimulateArgs& args) {
  validate(args.cfg);
  fs::create_directories(args.out_dir);
  const fs::path csv = fs::path(args.out_dir) / (args.prefix + ".csv");
  const fs::path sidecar = fs::path(args.out_dir) / (args.prefix + ".json");
  const Dataset data = generate_synthetic(args.cfg);
  write_csv(data, csv);
  write_file(sidecar, synthetic_config_json(args.cfg) + "\n");
  info("wrote " + csv.string() + " (" + std::to_string(data.n_rows()) +
       " rows, " + std::to_string(data.n_cols()) + " features) and " +
       sidecar.string());
  return kOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string train_path;
  std::string valid_path;
  std::string schema_path;
  std::string response = "y";
  std::string loss = "squared_error";
  std::string out = "model.json";
  TrainConfig cfg;
};

int run_train(TrainArgs args) {
  const CsvSchema schema = load_schema(args.schema_path, args.response);
  const Dataset train_data = load_csv(args.train_path, schema);
  const Dataset valid_data = load_csv(args.valid_path, schema);
  args.cfg.objective = loss_from_string(args.loss) == LossKind::squared_error
                           ? Objective::regression
                           : Objective::binary_logistic;
  TrainLog log;
  const Ensemble model = train(train_data, valid_data, args.cfg, &log);
  write_model(model, args.out);
  info("trained " + std::to_string(model.n_trees()) + " trees (best round " +
       std::to_string(log.best_round + 1) + ", validation loss " +
       format_double(log.valid_loss[static_cast<std::size_t>(log.best_round)]) +
       "), wrote " + args.out);
  return kOk;
}

// -------------------------------------------------------------------- rank

struct RankArgs {
  std::string model;
  std::vector<std::string> data;
  std::string schema_path;
  std::string response = "y";
  std::size_t top = 10;
  std::string shap_out;
};

int run_rank(const RankArgs& args) {
  const Ensemble model = load_model(args.model);
  const CsvSchema schema = load_schema(args.schema_path, args.response);
  Dataset data = load_csv(args.data.at(0), schema);
  for (std::size_t i = 1; i < args.data.size(); ++i) {
    data = Dataset::concat(data, load_csv(args.data[i], schema));
  }
  if (data.n_cols() != static_cast<std::size_t>(model.n_features())) {
    throw DataError("data has " + std::to_string(data.n_cols()) +
                    " features, model expects " +
                    std::to_string(model.n_features()));
  }
  const Ensemble annotated = annotate_probabilities(model, data);
  const ShapMatrix shap = shap_exact(annotated, data);
  const auto kappa = erfc(shap);
  const auto ranked = rank_features(kappa, std::min(args.top, kappa.size()));
  std::cout << "feature,kappa\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    std::cout << data.feature_names()[static_cast<std::size_t>(
                     ranked[r].feature)]
              << ',' << format_double(ranked[r].kappa) << '\n';
  }
  if (!args.shap_out.empty()) {
    std::string out;
    for (const auto& name : data.feature_names()) out += name + ',';
    out += "phi0\n";
    for (std::size_t i = 0; i < shap.n_rows; ++i) {
      for (std::size_t j = 0; j < shap.n_features; ++j) {
        out += format_double(shap.at(i, j)) + ',';
      }
      out += format_double(shap.phi0) + '\n';
    }
    write_file(args.shap_out, out);
  }
  return kOk;
}

// ----------------------------------------------------------------- subsage

struct SubsageArgs {
  std::string model;
  std::string test;
  std::string schema_path;
  std::string response = "y";
  std::vector<std::string> features;
  std::string loss;
  std::size_t B = 1000;
  double alpha = 0.025;
  std::string bca = "off";
  std::uint64_t seed = 0;
  bool emit_draws = false;
  std::string out = "report.json";
  std::string histogram_dir;
  std::size_t bins = 30;
  std::string train_path_hint;
};

int run_subsage(const SubsageArgs& args) {
  if (!args.train_path_hint.empty()) {
    std::error_code ec;
    if (fs::equivalent(args.train_path_hint, args.test, ec) ||
        args.train_path_hint == args.test) {
      warn("test data '" + args.test +
           "' is the training data; estimates must use data the model has "
           "not seen");
    }
  }
  const Ensemble model = load_model(args.model);
  const CsvSchema schema = load_schema(args.schema_path, args.response);
  const Dataset test = load_csv(args.test, schema);
  const LossKind loss =
      args.loss.empty() ? default_loss(model) : loss_from_string(args.loss);

  BootstrapConfig cfg;
  cfg.B = args.B;
  cfg.alpha = args.alpha;
  cfg.seed = args.seed;
  cfg.acceleration = acceleration_from_string(args.bca);
  validate(cfg);
  if (alpha_too_small(cfg)) {
    warn("B * alpha < 1: interval endpoints collapse to extreme draws");
  }

  std::vector<int> ks;
  for (const auto& key : args.features) ks.push_back(resolve_feature(test, key));

  std::vector<std::string> reports;
  std::printf("%-12s %14s %14s %14s %14s %14s\n", "feature", "psi_hat",
              "pct_lo", "pct_hi", "bca_lo", "bca_hi");
  for (int k : ks) {
    const auto& name = test.feature_names()[static_cast<std::size_t>(k)];
    info("bootstrapping " + name + " (B = " + std::to_string(cfg.B) + ")");
    const BootstrapResult result = paired_bootstrap(model, k, test, loss, cfg);
    reports.push_back(report_json(result, test.feature_names(), loss, cfg,
                                  {args.emit_draws}));
    std::printf("%-12s %14.6g %14.6g %14.6g", name.c_str(),
                result.point_estimate(), result.percentile.first,
                result.percentile.second);
    if (result.bca) {
      std::printf(" %14.6g %14.6g\n", result.bca->lo, result.bca->hi);
    } else {
      std::printf(" %14s %14s\n", "-", "-");
    }
    if (!args.histogram_dir.empty()) {
      fs::create_directories(args.histogram_dir);
      write_file(fs::path(args.histogram_dir) / (name + "_draws.csv"),
                 histogram_csv(result.draws, args.bins));
    }
  }
  std::string doc = "[\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    doc += reports[i];
    doc += i + 1 < reports.size() ? ",\n" : "\n";
  }
  doc += "]\n";
  write_file(args.out, doc);
  info("wrote " + args.out);
  return kOk;
}

// ----------------------------------------------------------------- convert

struct ConvertArgs {
  std::string in;
  std::string out = "model.json";
  int n_features = 0;
  double base_score = 0.0;
  std::string objective = "regression";
  std::string feature_names;
};

int run_convert(const ConvertArgs& args) {
  XgbImportOptions opts;
  if (args.n_features > 0) opts.n_features = args.n_features;
  opts.base_score = args.base_score;
  opts.objective = objective_from_string(args.objective);
  if (!args.feature_names.empty()) {
    std::stringstream ss(args.feature_names);
    std::string name;
    while (std::getline(ss, name, ',')) opts.feature_names.push_back(name);
    if (!opts.n_features) {
      opts.n_features = static_cast<int>(opts.feature_names.size());
    }
  }
  const Ensemble model = import_xgb_dump(args.in, opts);
  write_model(model, args.out);
  info("converted " + std::to_string(model.n_trees()) + " trees to " +
       args.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sub-SAGE feature importance for tree ensembles"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", g_quiet, "Suppress progress messages");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate the synthetic benchmark");
  simulate->add_option("--n", sim.cfg.n, "Sample count")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.cfg.seed, "Data seed");
  simulate->add_option("--noise-seed", sim.cfg.noise_seed,
                       "Seed for the noise-column laws");
  simulate->add_option("--out-dir", sim.out_dir, "Output directory");
  simulate->add_option("--prefix", sim.prefix, "Output file stem");
  simulate->add_option("--a0", sim.cfg.a0);
  simulate->add_option("--a1", sim.cfg.a1);
  simulate->add_option("--a2", sim.cfg.a2);
  simulate->add_option("--a21", sim.cfg.a21);
  simulate->add_option("--a3", sim.cfg.a3);
  simulate->add_option("--a4", sim.cfg.a4);
  simulate->add_option("--a5", sim.cfg.a5);
  simulate->add_option("--a6", sim.cfg.a6);
  simulate->add_option("--sigma-eps", sim.cfg.sigma_eps, "Noise sd");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Fit a boosted tree ensemble");
  train_cmd->add_option("--train", tr.train_path, "Training CSV")->required();
  train_cmd->add_option("--valid", tr.valid_path, "Validation CSV")->required();
  train_cmd->add_option("--schema", tr.schema_path, "Column-kind JSON");
  train_cmd->add_option("--response", tr.response, "Response column");
  train_cmd->add_option("--loss", tr.loss,
                        "squared_error or binary_cross_entropy");
  train_cmd->add_option("--rounds", tr.cfg.max_rounds, "Maximum rounds");
  train_cmd->add_option("--eta", tr.cfg.learning_rate, "Learning rate");
  train_cmd->add_option("--max-depth", tr.cfg.max_depth, "Tree depth");
  train_cmd->add_option("--subsample", tr.cfg.subsample, "Row fraction");
  train_cmd->add_option("--colsample", tr.cfg.colsample, "Column fraction");
  train_cmd->add_option("--lambda", tr.cfg.lambda, "L2 penalty");
  train_cmd->add_option("--gamma", tr.cfg.gamma, "Minimum split gain");
  train_cmd->add_option("--min-child-weight", tr.cfg.min_child_weight);
  train_cmd->add_option("--early-stop", tr.cfg.early_stopping_rounds,
                        "Patience in rounds (0 disables)");
  train_cmd->add_option("--seed", tr.cfg.seed, "Sampling seed");
  train_cmd->add_option("--out", tr.out, "Model file");

  RankArgs rk;
  auto* rank = app.add_subcommand("rank", "Rank features by ERFC");
  rank->add_option("--model", rk.model, "Model file")->required();
  rank->add_option("--data", rk.data, "CSV (repeatable, concatenated)")
      ->required();
  rank->add_option("--schema", rk.schema_path, "Column-kind JSON");
  rank->add_option("--response", rk.response, "Response column");
  rank->add_option("--top", rk.top, "Rows to print")->check(CLI::PositiveNumber);
  rank->add_option("--shap-out", rk.shap_out, "Write per-row SHAP values");

  SubsageArgs ss;
  auto* subsage_cmd =
      app.add_subcommand("subsage", "sub-SAGE estimates with bootstrap intervals");
  subsage_cmd->add_option("--model", ss.model, "Model file")->required();
  subsage_cmd->add_option("--test", ss.test, "Held-out CSV")->required();
  subsage_cmd->add_option("--schema", ss.schema_path, "Column-kind JSON");
  subsage_cmd->add_option("--response", ss.response, "Response column");
  subsage_cmd->add_option("--feature", ss.features, "Feature name (repeatable)")
      ->required();
  subsage_cmd->add_option("--loss", ss.loss,
                          "squared_error or binary_cross_entropy");
  subsage_cmd->add_option("--bootstrap", ss.B, "Bootstrap draws B");
  subsage_cmd->add_option("--alpha", ss.alpha, "Tail probability");
  subsage_cmd->add_option("--bca", ss.bca, "off, zero or jackknife")
      ->check(CLI::IsMember({"off", "zero", "jackknife"}));
  subsage_cmd->add_option("--seed", ss.seed, "Bootstrap seed");
  subsage_cmd->add_flag("--emit-draws", ss.emit_draws, "Include draws in report");
  subsage_cmd->add_option("--out", ss.out, "Report JSON");
  subsage_cmd->add_option("--histogram-dir", ss.histogram_dir,
                          "Write per-feature draw histograms");
  subsage_cmd->add_option("--bins", ss.bins, "Histogram bins")
      ->check(CLI::PositiveNumber);
  subsage_cmd->add_option("--train-path", ss.train_path_hint,
                          "Training CSV, only used to warn on reuse");

  ConvertArgs cv;
  auto* convert = app.add_subcommand("convert", "Import a boosted-tree JSON dump");
  convert->add_option("--in", cv.in, "Dump file")->required();
  convert->add_option("--out", cv.out, "Model file");
  convert->add_option("--n-features", cv.n_features, "Input feature count");
  convert->add_option("--base-score", cv.base_score, "Margin offset");
  convert->add_option("--objective", cv.objective,
                      "regression or binary-logistic");
  convert->add_option("--feature-names", cv.feature_names,
                      "Comma-separated names for non-f<idx> splits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (threads > 0) set_thread_count(threads);
    if (simulate->parsed()) return run_simulate(sim);
    if (train_cmd->parsed()) return run_train(tr);
    if (rank->parsed()) return run_rank(rk);
    if (subsage_cmd->parsed()) return run_subsage(ss);
    if (convert->parsed()) return run_convert(cv);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
