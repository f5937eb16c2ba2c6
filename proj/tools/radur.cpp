// radur: build data, train, evaluate, detect and sweep from one entry point.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "radur/commands.hpp"

namespace {

using json = nlohmann::json;
using radur::RunConfig;

struct KeyHelp {
  const char* key;
  const char* help;
};

const KeyHelp kCommon[] = {
    {"seed", "Seed for data synthesis, initialisation and data order"},
    {"run_dir", "Directory receiving every artifact of the command"},
    {"data_dir", "Dataset directory (manifests, audio, duration_stats.json)"},
    {"profile", "Model size: paper or mini"},
};

const KeyHelp kData[] = {
    {"bank_dir", "Directory-of-WAVs event bank; empty uses the synthetic bank"},
    {"classes", "Number of synthetic classes"},
    {"sizes", "Records per split as train,val,test"},
    {"negative_ratio", "Fraction of records whose mixture lacks the target class"},
    {"clip_duration", "Mixture length in seconds"},
    {"snr_low_db", "Lowest event-to-background SNR"},
    {"snr_high_db", "Highest event-to-background SNR"},
    {"min_events", "Fewest events per mixture"},
    {"max_events", "Most events per mixture"},
    {"events_per_class", "Synthetic event clips per class"},
    {"references_per_class", "Synthetic reference clips per class"},
};

const KeyHelp kTrain[] = {
    {"lr", "Adam learning rate"},
    {"batch_size", "Mini-batch size"},
    {"epochs", "Training epochs"},
    {"warmup_epochs", "Epochs before embedding enhancement starts"},
    {"loss", "Training loss: bce, focal or du_focal"},
    {"attention_pooling", "Attention pooling of reference frames (false: average pooling)"},
    {"k", "Mixture frames selected for enhancement"},
    {"tau", "Score threshold filtering the selected frames"},
    {"alpha", "Duration weight strength"},
    {"beta", "Focal positive-class weight"},
    {"gamma", "Focal focusing exponent"},
    {"duration_mode", "Duration weight normalisation: intent or literal"},
    {"w_short", "Shortest class mean duration in seconds"},
    {"w_long", "Longest class mean duration in seconds"},
};

const KeyHelp kSplit[] = {
    {"split", "Split to evaluate: train, val or test"},
};

const KeyHelp kEval[] = {
    {"two_pass", "Re-detect with the enhanced embedding when it was trained"},
    {"threshold", "Decision threshold on frame scores"},
    {"median_window", "Median filter length in frames (odd)"},
    {"segment_length", "Segment length for segment-based F in seconds"},
    {"collar", "Onset collar for event-based F in seconds"},
    {"offset_ratio", "Offset tolerance as a fraction of event length"},
};

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (auto& c : out) {
    if (c == '_') c = '-';
  }
  return "--" + out;
}

std::string show_default(const json& v) {
  if (v.is_string()) return v.get<std::string>().empty() ? "\"\"" : v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) out += (out.empty() ? "" : ",") + e.dump();
    return out;
  }
  return v.dump();
}

std::string type_name(const json& v) {
  if (v.is_boolean()) return "BOOL";
  if (v.is_number_unsigned()) return "UINT";
  if (v.is_number()) return "FLOAT";
  if (v.is_array()) return "UINT,UINT,UINT";
  return "TEXT";
}

// Collects command-line values as strings; they are typed against the
// defaults once parsing is done.
struct Overrides {
  std::map<std::string, std::string> values;
  std::string config_file;
  bool mini = false;
  bool no_ee = false;

  json resolve_layer() const {
    json out = json::object();
    for (const auto& [key, text] : values) out[key] = radur::parse_override(key, text);
    if (mini) out["profile"] = "mini";
    if (no_ee) out["ee"] = false;
    return out;
  }

  RunConfig resolve() const {
    const json file = config_file.empty() ? json() : radur::read_config_file(config_file);
    return radur::resolve_config(file, resolve_layer());
  }
};

template <std::size_t N>
void add_keys(CLI::App* app, Overrides& o, const KeyHelp (&keys)[N], const char* group) {
  static const json defaults = radur::to_json(RunConfig{});
  for (const auto& k : keys) {
    const std::string help = std::string(k.help) + " (default: " + show_default(defaults.at(k.key)) + ")";
    app->add_option_function<std::string>(
           flag_name(k.key), [&o, key = std::string(k.key)](const std::string& v) { o.values[key] = v; }, help)
        ->group(group)
        ->type_name(type_name(defaults.at(k.key)));
  }
}

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "JSON config file; command-line flags take precedence")->group("Run");
  app->add_flag("--mini", o.mini, "Use the miniature model profile (same as --profile mini)")->group("Run");
  add_keys(app, o, kCommon, "Run");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reference-conditioned target sound detection"};
  app.require_subcommand(1);

  Overrides build_o, train_o, eval_o, detect_o, sweep_o;

  auto* build = app.add_subcommand("build-data", "Synthesise (or assemble) a corpus with manifests");
  add_common(build, build_o);
  add_keys(build, build_o, kData, "Data");

  auto* train = app.add_subcommand("train", "Train a model on a built corpus");
  add_common(train, train_o);
  add_keys(train, train_o, kTrain, "Training");
  add_keys(train, train_o, kEval, "Validation");
  train->add_flag("--no-ee", train_o.no_ee, "Disable embedding enhancement (warm-up for all epochs)")->group("Training");

  std::string eval_checkpoint, eval_scores;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or precomputed scores on a split");
  add_common(eval, eval_o);
  add_keys(eval, eval_o, kSplit, "Evaluation");
  add_keys(eval, eval_o, kEval, "Evaluation");
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint (default: <run-dir>/best.ckpt)");
  eval->add_option("--scores", eval_scores, "JSON Lines of precomputed frame scores instead of a checkpoint");
  eval->get_option("--scores")->excludes(eval->get_option("--checkpoint"));

  std::string mixture, reference, detect_checkpoint;
  auto* detect = app.add_subcommand("detect", "Detect the reference's sound class in a mixture");
  add_common(detect, detect_o);
  add_keys(detect, detect_o, kEval, "Decoding");
  detect->add_option("--mixture", mixture, "Mixture WAV")->required();
  detect->add_option("--reference", reference, "Reference WAV")->required();
  detect->add_option("--checkpoint", detect_checkpoint, "Checkpoint (default: <run-dir>/best.ckpt)");

  std::string sweep_param, sweep_param2;
  std::vector<double> sweep_values, sweep_values2;
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over hyper-parameter values");
  add_common(sweep, sweep_o);
  add_keys(sweep, sweep_o, kTrain, "Training");
  add_keys(sweep, sweep_o, kSplit, "Evaluation");
  add_keys(sweep, sweep_o, kEval, "Evaluation");
  sweep->add_flag("--no-ee", sweep_o.no_ee, "Disable embedding enhancement")->group("Training");
  sweep->add_option("--param", sweep_param, "Parameter to sweep: tau, alpha, beta or gamma")->required()->group("Sweep");
  sweep->add_option("--values", sweep_values, "Comma-separated values")->required()->delimiter(',')->group("Sweep");
  sweep->add_option("--param2", sweep_param2, "Second parameter for a grid (heatmap output)")->group("Sweep");
  sweep->add_option("--values2", sweep_values2, "Values of the second parameter")->delimiter(',')->group("Sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  RunConfig cfg;
  try {
    if (build->parsed()) cfg = build_o.resolve();
    if (train->parsed()) cfg = train_o.resolve();
    if (eval->parsed()) cfg = eval_o.resolve();
    if (detect->parsed()) cfg = detect_o.resolve();
    if (sweep->parsed()) {
      cfg = sweep_o.resolve();
      if (sweep_param2.empty() != sweep_values2.empty()) throw radur::ConfigError("--param2 needs --values2");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (build->parsed()) radur::cli::cmd_build_data(cfg, std::cout);
    if (train->parsed()) radur::cli::cmd_train(cfg, std::cout);
    if (eval->parsed()) {
      if (eval_scores.empty()) {
        radur::cli::cmd_eval(cfg, eval_checkpoint, std::cout);
      } else {
        radur::cli::cmd_eval_scores(cfg, eval_scores, std::cout);
      }
    }
    if (detect->parsed()) radur::cli::cmd_detect(cfg, mixture, reference, detect_checkpoint, std::cout);
    if (sweep->parsed()) {
      std::vector<std::string> params{sweep_param};
      std::vector<std::vector<double>> values{sweep_values};
      if (!sweep_param2.empty()) {
        params.push_back(sweep_param2);
        values.push_back(sweep_values2);
      }
      radur::cli::cmd_sweep(cfg, params, values, std::cout);
    }
  } catch (const radur::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
