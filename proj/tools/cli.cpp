/* Copyright 2026 The hbnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hbnet/bench.hpp"
#include "hbnet/complexity.hpp"
#include "hbnet/error.hpp"
#include "hbnet/hbds.hpp"
#include "hbnet/modelio.hpp"
#include "hbnet/train.hpp"
#include "hbnet/vpr.hpp"

namespace hbnet::cli {
namespace {

namespace fs = std::filesystem;

// Options shared by every command that needs a network.
struct NetOptions {
  std::string spec_file;
  std::string weights_file;
  std::string first_stage = "hbds";
  int depth_multiplier = 12;
  std::uint64_t seed = 1;
  int tap = -1;
  int threads = 0;

  void add_to(CLI::App* cmd, bool with_weights) {
    cmd->add_option("--spec", spec_file, "Network spec JSON file")->check(CLI::ExistingFile);
    cmd->add_option("--first-stage", first_stage, "First stage when no spec file is given")
        ->check(CLI::IsMember({"conv", "hbds"}));
    cmd->add_option("--d", depth_multiplier, "HB-DS depth multiplier")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Seed for random weight initialization");
    cmd->add_option("--tap-layer", tap, "Layer index whose output forms the descriptor")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--threads", threads, "Worker threads (0 = runtime default)")
        ->check(CLI::NonNegativeNumber);
    if (with_weights) {
      cmd->add_option("--weights", weights_file, "Weight file to load instead of random weights")
          ->check(CLI::ExistingFile);
    }
  }

  NetworkSpec spec() const {
    NetworkSpec s = !spec_file.empty()
                        ? load_spec_file(spec_file)
                        : NetworkSpec::default_spec(
                              first_stage == "conv" ? FirstStage::kStandardConv : FirstStage::kHBDS,
                              depth_multiplier);
    if (tap >= 0) s.tap = tap;
    (void)s.layer_shapes();
    return s;
  }

  Network network() const {
    if (!weights_file.empty()) {
      Network loaded = load_weights(read_file(weights_file));
      if (tap < 0) return loaded;
      NetworkSpec s = loaded.spec();
      s.tap = tap;
      return Network(s, loaded.weights());
    }
    return build_random_network(spec(), seed);
  }

  ExecContext context() const { return ExecContext{threads, nullptr}; }
};

OutputFormat parse_format(const std::string& s) {
  return s == "json" ? OutputFormat::kJson : OutputFormat::kCsv;
}

void add_format(CLI::App* cmd, std::string& format) {
  cmd->add_option("--out", format, "Report format")->check(CLI::IsMember({"csv", "json"}));
}

std::vector<Descriptor> describe(const Network& net, const std::vector<FloatTensor>& images,
                                 const std::vector<std::string>& ids, const ExecContext& ctx) {
  std::vector<Descriptor> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(extract_descriptor(net.forward(images[i], false, ctx).features, ids[i]));
  }
  return out;
}

std::vector<Descriptor> read_descriptors(const std::string& path) {
  return load_descriptors(read_file(path));
}

std::vector<std::string> ids_of(const std::vector<Descriptor>& d) {
  std::vector<std::string> ids;
  for (const Descriptor& x : d) ids.push_back(x.id);
  return ids;
}

// Inputs to `match` and `eval`: descriptor files plus a ground truth taken
// from a manifest or from a frame tolerance.
struct MatchInputs {
  std::string queries;
  std::string references;
  std::string manifest;
  int tolerance = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--queries", queries, "Query descriptor file")->check(CLI::ExistingFile);
    cmd->add_option("--references", references, "Reference descriptor file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--manifest", manifest, "Dataset manifest supplying the ground truth")
        ->check(CLI::ExistingFile);
    cmd->add_option("--tolerance", tolerance, "Frame tolerance when no manifest is given")
        ->check(CLI::NonNegativeNumber);
  }
};

struct MatchOutput {
  std::vector<MatchResult> results;
  std::vector<std::string> query_ids;
  std::vector<std::string> reference_ids;
};

MatchOutput run_match(const MatchInputs& in, const NetOptions& net_opts) {
  std::vector<Descriptor> queries;
  std::vector<Descriptor> refs;
  GroundTruth truth;
  if (!in.queries.empty() || !in.references.empty()) {
    if (in.queries.empty() || in.references.empty()) {
      throw ContractError("--queries and --references must be given together");
    }
    queries = read_descriptors(in.queries);
    refs = read_descriptors(in.references);
    truth = !in.manifest.empty()
                ? load_manifest(in.manifest).ground_truth()
                : GroundTruth::from_tolerance(static_cast<int>(queries.size()),
                                              static_cast<int>(refs.size()), in.tolerance);
  } else {
    if (in.manifest.empty()) {
      throw ContractError("give --queries/--references descriptor files or a --manifest");
    }
    const DatasetManifest m = load_manifest(in.manifest);
    const PlaceDataset<FloatTensor> ds = load_dataset(m);
    const Network net = net_opts.network();
    queries = describe(net, ds.queries, ds.query_ids, net_opts.context());
    refs = describe(net, ds.references, ds.reference_ids, net_opts.context());
    truth = ds.truth;
  }
  if (truth.query_count() != static_cast<int>(queries.size()) ||
      truth.reference_count() != static_cast<int>(refs.size())) {
    throw ShapeError("ground truth does not match the descriptor counts");
  }
  MatchOutput out;
  out.results = match_all(queries, refs, truth, net_opts.threads);
  out.query_ids = ids_of(queries);
  out.reference_ids = ids_of(refs);
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> values;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      values.push_back(v);
    } catch (const std::logic_error&) {
      throw ContractError("bad entry '" + item + "' in integer list '" + s + "'");
    }
  }
  if (values.empty()) throw ContractError("empty integer list");
  return values;
}

std::string format_training(const TrainResult& r, OutputFormat fmt) {
  std::ostringstream os;
  if (fmt == OutputFormat::kJson) {
    nlohmann::json j;
    j["train_accuracy"] = r.train_accuracy;
    j["epoch_loss"] = r.epoch_loss;
    os << j.dump(2) << '\n';
  } else {
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) os << e + 1 << ',' << r.epoch_loss[e] << '\n';
    os << "# train_accuracy=" << r.train_accuracy << '\n';
  }
  return os.str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"hbnet: binary network inference, complexity analysis and place-recognition "
               "evaluation"};
  app.name("hbnet");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string format = "csv";

  // analyze
  NetOptions analyze_net;
  auto* analyze = app.add_subcommand("analyze", "Per-layer parameter and MAC report for a network");
  analyze_net.add_to(analyze, false);
  add_format(analyze, format);

  // extract
  NetOptions extract_net;
  std::string extract_manifest;
  std::string extract_set = "references";
  std::string extract_output;
  auto* extract = app.add_subcommand("extract", "Compute descriptors for a manifest image set");
  extract_net.add_to(extract, true);
  extract->add_option("--manifest", extract_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  extract->add_option("--set", extract_set, "Which image list to describe")
      ->check(CLI::IsMember({"references", "queries"}));
  extract->add_option("-o,--output", extract_output, "Descriptor file to write")->required();

  // match
  NetOptions match_net;
  MatchInputs match_in;
  auto* match = app.add_subcommand("match", "Best reference for every query");
  match_in.add_to(match);
  match_net.add_to(match, true);
  add_format(match, format);

  // eval
  NetOptions eval_net;
  MatchInputs eval_in;
  auto* eval = app.add_subcommand("eval", "Match and compute EP, AUC and TP%");
  eval_in.add_to(eval);
  eval_net.add_to(eval, true);
  add_format(eval, format);

  // bench
  NetOptions bench_net;
  BenchConfig bench_cfg;
  std::string sweep;
  auto* bench = app.add_subcommand("bench", "Time forward passes and report latency and energy");
  bench_net.add_to(bench, true);
  bench->add_option("--runs", bench_cfg.runs, "Measured runs")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_cfg.warmup, "Warm-up runs")->check(CLI::NonNegativeNumber);
  bench->add_option("--power-watts", bench_cfg.power_watts, "Platform power for energy figures")
      ->check(CLI::PositiveNumber);
  bench->add_option("--sweep", sweep, "Comma-separated depth multipliers to sweep (HB-DS only)");
  add_format(bench, format);

  // train-toy
  TrainConfig train_cfg;
  int train_samples = 64;
  int train_size = 32;
  int train_d = 2;
  std::string train_weights;
  auto* train = app.add_subcommand("train-toy", "Train a tiny HB-DS network on a synthetic set");
  train->add_option("--samples", train_samples, "Images in the synthetic set")
      ->check(CLI::Range(2, 100000));
  train->add_option("--size", train_size, "Image side length")->check(CLI::Range(8, 512));
  train->add_option("--d", train_d, "HB-DS depth multiplier")->check(CLI::PositiveNumber);
  train->add_option("--epochs", train_cfg.epochs, "Training epochs")->check(CLI::PositiveNumber);
  train->add_option("--lr", train_cfg.learning_rate, "Learning rate")->check(CLI::NonNegativeNumber);
  train->add_option("--batch", train_cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
  train->add_option("--seed", train_cfg.seed, "Seed for data, initialization and shuffling");
  train->add_option("--weights-out", train_weights, "Write the trained network to this file");
  add_format(train, format);

  // weights export / import
  auto* weights = app.add_subcommand("weights", "Weight file utilities");
  weights->require_subcommand(1);
  NetOptions export_net;
  std::string export_output;
  auto* wexport = weights->add_subcommand("export", "Write a seeded random network to a file");
  export_net.add_to(wexport, false);
  wexport->add_option("-o,--output", export_output, "Weight file to write")->required();
  std::string import_input;
  std::string import_spec_out;
  auto* wimport = weights->add_subcommand("import", "Validate a weight file and print its spec");
  wimport->add_option("file", import_input, "Weight file")->required()->check(CLI::ExistingFile);
  wimport->add_option("--spec-out", import_spec_out, "Also write the embedded spec here");

  if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
    err << "hbnet: unknown command '" << argv[1] << "'\n" << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  const OutputFormat fmt = parse_format(format);
  try {
    if (*analyze) {
      out << format_complexity(network_report(analyze_net.spec()), fmt);
    } else if (*extract) {
      const DatasetManifest m = load_manifest(extract_manifest);
      const PlaceDataset<FloatTensor> ds = load_dataset(m);
      const bool refs = extract_set == "references";
      const Network net = extract_net.network();
      const auto descriptors = describe(net, refs ? ds.references : ds.queries,
                                        refs ? ds.reference_ids : ds.query_ids,
                                        extract_net.context());
      write_file(extract_output, save_descriptors(descriptors));
      err << "wrote " << descriptors.size() << " descriptors of dimension "
          << (descriptors.empty() ? 0 : descriptors.front().dim()) << " to " << extract_output
          << '\n';
    } else if (*match) {
      const MatchOutput m = run_match(match_in, match_net);
      out << format_matches(m.results, m.query_ids, m.reference_ids, fmt);
    } else if (*eval) {
      const MatchOutput m = run_match(eval_in, eval_net);
      out << format_metrics(evaluate(m.results), fmt);
    } else if (*bench) {
      bench_cfg.threads = bench_net.threads;
      if (!sweep.empty()) {
        const std::vector<int> ds = parse_int_list(sweep);
        out << format_sweep(sweep_depth_multiplier(bench_net.spec(), ds, bench_cfg, bench_net.seed),
                            fmt);
      } else {
        const Network net = bench_net.network();
        FloatTensor input(net.spec().input);
        std::mt19937_64 rng(bench_net.seed);
        std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
        for (float& v : input.data()) v = uniform(rng);
        const std::vector<FloatTensor> inputs{input};
        out << format_bench(time_inference(net, inputs, bench_cfg), fmt);
      }
    } else if (*train) {
      const ToyDataset data = make_blob_dataset(train_samples, train_size, train_cfg.seed);
      NetworkSpec spec;
      spec.input = {train_size, train_size, 3};
      spec.layers = {LayerDesc::hbds(3, 2, 16, train_d), LayerDesc::max_pool(3, 2)};
      spec.tap = 1;
      const TrainResult r = train_toy(spec, data, train_cfg);
      if (!train_weights.empty()) write_file(train_weights, save_weights(r.network));
      out << format_training(r, fmt);
    } else if (*wexport) {
      write_file(export_output, save_weights(export_net.network()));
      err << "wrote " << export_output << '\n';
    } else if (*wimport) {
      const Network net = load_weights(read_file(import_input));
      const std::string spec_json = spec_to_json(net.spec());
      if (!import_spec_out.empty()) {
        write_file(import_spec_out,
                   std::vector<std::uint8_t>(spec_json.begin(), spec_json.end()));
      }
      out << spec_json << '\n';
    }
  } catch (const Error& e) {
    err << "hbnet: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "hbnet: unexpected error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace hbnet::cli
