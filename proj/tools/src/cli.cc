#include "cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "wavernn/config_file.h"
#include "wavernn/corpus.h"
#include "wavernn/errors.h"
#include "wavernn/fused.h"
#include "wavernn/latency.h"
#include "wavernn/matvec_bench.h"
#include "wavernn/model_io.h"
#include "wavernn/subscale.h"
#include "wavernn/trainer.h"
#include "wavernn/wav.h"

namespace wavernn::cli {

namespace {

std::uint64_t fnv1a(std::span<const std::int16_t> samples) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::int16_t s : samples) {
    const auto u = static_cast<std::uint16_t>(s);
    for (int b = 0; b < 2; ++b) {
      h ^= (u >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

// ---------------------------------------------------------------- corpus

struct CorpusArgs {
  std::string out;
  CorpusSpec spec;
};

void add_corpus(CLI::App& app, CorpusArgs& a) {
  auto* c = app.add_subcommand("corpus", "Write a synthetic sine-mixture corpus of WAV files");
  c->add_option("--out", a.out, "Output directory")->required();
  c->add_option("--utterances", a.spec.utterances, "Number of files")->capture_default_str();
  c->add_option("--length", a.spec.length, "Samples per file")->capture_default_str();
  c->add_option("--sample-rate", a.spec.sample_rate, "Hz")->capture_default_str();
  c->add_option("--components", a.spec.components, "Sinusoids per file")->capture_default_str();
  c->add_option("--frequencies", a.spec.frequencies, "Fixed component frequencies (Hz)")
      ->delimiter(',');
  c->add_option("--min-frequency", a.spec.min_frequency)->capture_default_str();
  c->add_option("--max-frequency", a.spec.max_frequency)->capture_default_str();
  c->add_option("--amplitude", a.spec.amplitude)->capture_default_str();
  c->add_option("--noise", a.spec.noise_std, "Gaussian noise std")->capture_default_str();
  c->add_option("--seed", a.spec.seed)->capture_default_str();
}

int run_corpus(const CorpusArgs& a, std::ostream& out) {
  const auto paths = make_corpus(a.spec, a.out);
  out << "wrote " << paths.size() << " files of " << a.spec.length << " samples to "
      << a.out << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string corpus;
  std::string out;
  std::string history;
  std::size_t steps = 0;
  std::size_t log_every = 100;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train a model from a key=value config");
  c->add_option("--config", a.config, "Config file")->required()->check(CLI::ExistingFile);
  c->add_option("--corpus", a.corpus, "Directory of WAV files")->required();
  c->add_option("--out", a.out, "Model file to write")->required();
  c->add_option("--history", a.history, "CSV of step, nll, sparsity");
  c->add_option("--steps", a.steps, "Override the configured step count");
  c->add_option("--log-every", a.log_every, "Progress line interval (0 = quiet)")
      ->capture_default_str();
}

TrainConfig train_config(const KeyValueConfig& kv) {
  TrainConfig t;
  t.steps = kv.get_size("steps", t.steps);
  t.batch_size = kv.get_size("batch_size", t.batch_size);
  t.sequence_length = kv.get_size("sequence_length", t.sequence_length);
  t.seed = kv.get_size("seed", t.seed);
  t.init_gain = static_cast<float>(kv.get_double("init_gain", t.init_gain));
  const std::string opt = kv.get("optimizer", "adam");
  if (opt == "adam") {
    t.optimizer.kind = OptimizerKind::adam;
  } else if (opt == "sgd") {
    t.optimizer.kind = OptimizerKind::sgd;
  } else {
    throw InputError("optimizer must be adam or sgd, not " + opt);
  }
  t.optimizer.learning_rate = kv.get_double("learning_rate", t.optimizer.learning_rate);
  t.optimizer.clip_norm = kv.get_double("clip_norm", t.optimizer.clip_norm);
  if (kv.get_bool("prune", false)) {
    PruneSchedule p;
    p.target = kv.get_double("prune_target", p.target);
    p.start = static_cast<long>(kv.get_size("prune_start", static_cast<std::size_t>(p.start)));
    p.duration =
        static_cast<long>(kv.get_size("prune_duration", static_cast<std::size_t>(p.duration)));
    p.cadence =
        static_cast<long>(kv.get_size("prune_cadence", static_cast<std::size_t>(p.cadence)));
    p.block = BlockShape::parse(kv.get("block", p.block.to_string()));
    t.prune = p;
  }
  return t;
}

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const KeyValueConfig kv = KeyValueConfig::load(a.config);
  TrainConfig opts = train_config(kv);
  if (a.steps) opts.steps = a.steps;
  const std::string mode = kv.get("mode", "plain");
  const std::size_t h = kv.get_size("state_size", 64);
  const std::size_t proj = kv.get_size("proj_width", 0);

  auto corpus = std::make_shared<const std::vector<std::vector<std::uint16_t>>>(
      load_corpus(a.corpus));
  if (corpus->empty()) throw InputError("no WAV files in " + a.corpus);

  CellConfig cell;
  BatchSource source;
  std::optional<SubscaleModel> sub;
  if (mode == "plain") {
    cell = CellConfig{CellKind::wavernn, h, 0, proj};
    source = random_segment_source(cell, corpus, opts.sequence_length, opts.batch_size);
  } else if (mode == "fused") {
    cell = fused_config(h, proj);
    source = fused_segment_source(cell, corpus, opts.sequence_length, opts.batch_size);
  } else if (mode == "subscale") {
    SubscaleConfig sc;
    sc.batch_factor = kv.get_size("batch_factor", 4);
    sc.horizon = kv.get_size("horizon", 8);
    sc.lookahead = kv.get_size("lookahead", sc.lookahead);
    sc.validate();
    const auto net_cfg = CondNetConfig::for_horizon(sc.batch_factor, sc.horizon,
                                                    kv.get_size("cond_channels", 16));
    // The conditioning net keeps its random initialization; only the cell
    // is trained.
    sub = SubscaleModel::random(sc, h, net_cfg, opts.seed ^ 0x5eedull);
    cell = CellConfig{CellKind::wavernn, h, sub->net.output_dim(), proj};
    sub->cell = CellParams::zeros(cell);
    source = subscale_segment_source(std::make_shared<const SubscaleModel>(*sub), corpus,
                                     opts.sequence_length, opts.batch_size);
  } else {
    throw InputError("mode must be plain, fused or subscale, not " + mode);
  }
  for (const auto& key : kv.unused_keys()) err << "warning: unused config key " << key << "\n";

  std::optional<std::ofstream> history;
  if (!a.history.empty()) {
    history.emplace(open_output(a.history));
    *history << "step,nll,sparsity\n";
  }
  TrainHooks hooks;
  hooks.on_step = [&](const TrainRecord& r) {
    if (history) *history << r.step << "," << r.nll << "," << r.sparsity << "\n";
    if (a.log_every && (r.step % a.log_every == 0 || r.step == opts.steps)) {
      err << "step " << r.step << " nll " << r.nll << " sparsity " << r.sparsity << "\n";
    }
  };
  hooks.on_abort = [&](const TrainState& s) {
    Model m{export_params(cell, s, opts.prune.has_value()), std::nullopt, {}};
    if (sub) m = {m.cell, sub->config, sub->net};
    save_model(m, a.out + ".last_good");
    err << "training diverged; last good parameters saved to " << a.out << ".last_good\n";
  };
  const auto start = std::chrono::steady_clock::now();
  const TrainState state = train(cell, opts, source, hooks);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Model model{export_params(cell, state, opts.prune.has_value()), std::nullopt, {}};
  if (sub) model = {model.cell, sub->config, sub->net};
  save_model(model, a.out);
  const auto report = model_sparsity_report(model);
  out << "trained " << opts.steps << " steps in " << std::fixed << std::setprecision(1)
      << secs << " s; final nll " << std::setprecision(4)
      << (state.history.empty() ? 0.0 : state.history.back().nll) << "; "
      << report.total_nonzero << " nonzero parameters; wrote " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string model;
  std::size_t length = 24000;
  std::uint64_t seed = 1;
  std::string out;
  std::string mode = "auto";
  std::string execution = "batched";
  std::size_t threads = 0;
  std::string trace;
  std::uint32_t sample_rate = 24000;
};

void add_sample(CLI::App& app, SampleArgs& a) {
  auto* c = app.add_subcommand("sample", "Generate audio from a model file");
  c->add_option("--model", a.model, "Model file")->required()->check(CLI::ExistingFile);
  c->add_option("--length", a.length, "Samples to generate")->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--out", a.out, "WAV file to write");
  c->add_option("--mode", a.mode, "auto, plain, subscale or fused")
      ->check(CLI::IsMember({"auto", "plain", "subscale", "fused"}))
      ->capture_default_str();
  c->add_option("--execution", a.execution, "Subscale lanes: sequential, batched or threaded")
      ->check(CLI::IsMember({"sequential", "batched", "threaded"}))
      ->capture_default_str();
  c->add_option("--threads", a.threads, "Worker threads for threaded execution (0 = B)");
  c->add_option("--trace", a.trace, "Subscale schedule trace CSV");
  c->add_option("--sample-rate", a.sample_rate)->capture_default_str();
}

int run_sample(const SampleArgs& a, std::ostream& out) {
  if (a.length == 0) throw InputError("length must be positive");
  const Model model = load_model(a.model);
  std::string mode = a.mode;
  if (mode == "auto") {
    mode = model.subscale ? "subscale"
           : model.cell.config.kind == CellKind::fused ? "fused"
                                                       : "plain";
  }
  std::vector<std::uint16_t> samples;
  double rate = 0.0;
  const auto start = std::chrono::steady_clock::now();
  if (mode == "plain") {
    if (model.cell.config.kind != CellKind::wavernn) throw InputError("model is not a plain cell");
    // Models trained without conditioning see zeros in any cond columns.
    DenseMatrix cond;
    if (model.cell.config.cond_dim) cond = DenseMatrix(a.length, model.cell.config.cond_dim);
    Rng rng(a.seed);
    auto r = generate(model.cell, a.length, cond, rng);
    samples = std::move(r.samples);
    rate = r.samples_per_second;
  } else if (mode == "fused") {
    if (model.cell.config.kind != CellKind::fused) throw InputError("model is not a fused cell");
    Rng rng(a.seed);
    auto r = fused_generate(model.cell, a.length + a.length % 2, rng);
    samples = std::move(r.samples);
    samples.resize(a.length);
    rate = r.samples_per_second;
  } else {
    const SubscaleModel sm = model.to_subscale();
    const std::size_t b = sm.config.batch_factor;
    const std::size_t n = (a.length + b - 1) / b * b;
    if (a.execution == "sequential") {
      samples = sequential_generate(sm, n, a.seed);
    } else {
      auto r = batched_generate(sm, n, a.seed,
                                a.execution == "threaded" ? LaneExecution::threaded
                                                          : LaneExecution::batched,
                                a.threads);
      samples = std::move(r.waveform);
      if (!a.trace.empty()) {
        auto csv = open_output(a.trace);
        csv << "step,active_lanes,emitted_samples\n";
        for (const auto& row : r.trace) {
          csv << row.step << "," << row.active_lanes << "," << row.emitted_samples << "\n";
        }
      }
    }
    samples.resize(a.length);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (rate == 0.0 && secs > 0.0) rate = static_cast<double>(a.length) / secs;

  WavFile wav;
  wav.sample_rate = a.sample_rate;
  wav.samples = from_engine(samples);
  if (!a.out.empty()) wav_write(wav, a.out);
  out << "mode " << mode << "; " << a.length << " samples; " << std::fixed
      << std::setprecision(1) << rate << " samples/sec; checksum " << hex(fnv1a(wav.samples))
      << "\n";
  return kExitOk;
}

// ------------------------------------------------------------- benchmark

struct BenchArgs {
  std::vector<std::size_t> sizes{1024};
  std::vector<double> sparsities{0.0, 0.9, 0.95};
  std::vector<std::string> blocks{"4x4", "16x1"};
  std::size_t repetitions = 15;
  std::size_t threads = 1;
  std::string csv;
  bool ops = false;
};

void add_benchmark(CLI::App& app, BenchArgs& a) {
  auto* c = app.add_subcommand("benchmark", "Time the kernels and the per-sample operations");
  c->add_option("--sizes", a.sizes, "State sizes")->delimiter(',')->capture_default_str();
  c->add_option("--sparsities", a.sparsities, "Block sparsities (0 = dense)")
      ->delimiter(',')
      ->capture_default_str();
  c->add_option("--blocks", a.blocks, "Block shapes")->delimiter(',')->capture_default_str();
  c->add_option("--repetitions", a.repetitions)->capture_default_str();
  c->add_option("--threads", a.threads, "Workers per product (1 or 2)")
      ->check(CLI::Range(1, 2))
      ->capture_default_str();
  c->add_option("--csv", a.csv, "Also write the sample table as CSV");
  c->add_flag("--ops", a.ops, "Print the per-operation breakdown");
}

int run_benchmark(const BenchArgs& a, std::ostream& out) {
  BenchmarkOptions opts;
  opts.repetitions = a.repetitions;
  opts.threads = a.threads;
  std::vector<BlockShape> blocks;
  for (const auto& b : a.blocks) blocks.push_back(BlockShape::parse(b));

  std::optional<std::ofstream> csv;
  if (!a.csv.empty()) {
    csv.emplace(open_output(a.csv));
    *csv << "size,sparsity,type,matvec_us,samples_per_second\n";
  }
  out << std::left << std::setw(8) << "Size" << std::setw(12) << "Sparsity %" << std::setw(8)
      << "Type" << std::right << std::setw(14) << "matvec us" << std::setw(16)
      << "samples/sec\n";
  for (std::size_t size : a.sizes) {
    for (double z : a.sparsities) {
      const std::vector<BlockShape> shapes = z == 0.0 ? std::vector{kBlock1x1} : blocks;
      for (BlockShape block : shapes) {
        const MatvecSpec spec{size, size, z, block};
        const MatvecTiming mv = benchmark_matvec(spec, opts);
        const SampleCostReport cost = benchmark_sample_ops(size, z, block, opts);
        out << std::left << std::setw(8) << size << std::setw(12) << std::fixed
            << std::setprecision(1) << z * 100.0 << std::setw(8) << spec.type_label()
            << std::right << std::setw(14) << std::setprecision(2) << mv.median_ns / 1e3
            << std::setw(15) << std::setprecision(0) << cost.samples_per_second << "\n";
        if (csv) {
          *csv << size << "," << z << "," << spec.type_label() << "," << mv.median_ns / 1e3
               << "," << cost.samples_per_second << "\n";
        }
        if (a.ops) {
          for (const auto& op : cost.ops) {
            std::ostringstream shape;
            if (op.name == "nonlinearities") {
              shape << op.inputs << " elements";
            } else {
              shape << op.outputs << "x" << op.inputs;
            }
            out << "    " << std::left << std::setw(15) << op.name << std::right << "x"
                << op.count << "  " << std::left << std::setw(14) << shape.str() << std::right
                << std::setprecision(2) << op.median_ns / 1e3 << " us\n";
          }
          out << "    total " << cost.total_ns / 1e3 << " us per sample\n";
        }
      }
    }
  }
  return kExitOk;
}

// --------------------------------------------------------------- inspect

struct InspectArgs {
  std::string model;
  std::string csv;
};

void add_inspect(CLI::App& app, InspectArgs& a) {
  auto* c = app.add_subcommand("inspect", "Print the configuration and sparsity of a model");
  c->add_option("--model", a.model, "Model file")->required()->check(CLI::ExistingFile);
  c->add_option("--csv", a.csv, "Also write the per-matrix table as CSV");
}

int run_inspect(const InspectArgs& a, std::ostream& out) {
  const Model m = load_model(a.model);
  const CellConfig& c = m.cell.config;
  out << "cell " << (c.kind == CellKind::fused ? "fused" : "plain") << ", state " << c.state_size
      << ", input " << c.input_dim() << ", cond " << c.cond_dim << ", head width "
      << c.hidden_width() << "\n";
  if (m.subscale) {
    const auto& n = m.cond_net.config();
    out << "subscale B " << m.subscale->batch_factor << ", F " << m.subscale->horizon << ", L "
        << m.subscale->lookahead << "; conditioning net " << n.dilations.size()
        << " layers, kernel " << n.kernel << ", receptive field " << n.receptive_field() << "\n";
  }
  const SparsityReport r = model_sparsity_report(m);
  std::optional<std::ofstream> csv;
  if (!a.csv.empty()) {
    csv.emplace(open_output(a.csv));
    *csv << "name,rows,cols,weights,nonzero,sparsity,prunable\n";
  }
  out << std::left << std::setw(22) << "matrix" << std::right << std::setw(12) << "shape"
      << std::setw(12) << "nonzero" << std::setw(11) << "sparsity\n";
  for (const auto& s : r.matrices) {
    std::ostringstream shape;
    shape << s.rows << "x" << s.cols;
    out << std::left << std::setw(22) << s.name << std::right << std::setw(12) << shape.str()
        << std::setw(12) << s.nonzero << std::setw(10) << std::fixed << std::setprecision(4)
        << s.sparsity << "\n";
    if (csv) {
      *csv << s.name << "," << s.rows << "," << s.cols << "," << s.weights << "," << s.nonzero
           << "," << s.sparsity << "," << (s.prunable ? 1 : 0) << "\n";
    }
  }
  out << "total parameters " << r.total_parameters << ", nonzero " << r.total_nonzero
      << ", prunable sparsity " << std::setprecision(4) << r.prunable_sparsity << "\n";
  if (m.subscale) {
    std::size_t net = 0;
    for (const auto& [name, t] : m.cond_net.tensors()) net += t->size();
    out << "conditioning net parameters " << net << "\n";
  }
  return kExitOk;
}

// -------------------------------------------------------------- estimate

struct EstimateArgs {
  std::size_t ops = 5;
  double overhead_us = 5.0;
  double compute_us = 0.0;
  std::size_t samples = 24000;
  double params = 0.0;
  double sample_rate = 24000.0;
  double bytes = 4.0;
};

void add_estimate(CLI::App& app, EstimateArgs& a) {
  auto* c = app.add_subcommand("estimate", "Sampling latency and memory bandwidth estimates");
  c->add_option("--ops", a.ops, "Operations per sample (N)")->capture_default_str();
  c->add_option("--overhead-us", a.overhead_us, "Overhead per op (us)")->capture_default_str();
  c->add_option("--compute-us", a.compute_us, "Compute time per op (us)")->capture_default_str();
  c->add_option("--samples", a.samples, "Samples to generate (|u|)")->capture_default_str();
  c->add_option("--params", a.params, "Parameters read per sample (enables bandwidth)");
  c->add_option("--sample-rate", a.sample_rate)->capture_default_str();
  c->add_option("--bytes", a.bytes, "Bytes per parameter")->capture_default_str();
}

int run_estimate(const EstimateArgs& a, std::ostream& out) {
  const auto e = estimate_latency(
      LatencyModel::uniform(a.ops, a.compute_us * 1e-6, a.overhead_us * 1e-6, a.samples));
  out << std::fixed << std::setprecision(6) << "T(u) " << e.total_seconds << " s for "
      << a.samples << " samples\n"
      << std::setprecision(1) << "samples/sec " << e.samples_per_second << "\n"
      << "overhead bound " << e.overhead_bound << " samples/sec\n"
      << "compute bound " << e.compute_bound << " samples/sec\n"
      << "binding " << e.binding << "\n";
  if (a.params > 0.0) {
    const double bw = estimate_bandwidth(a.params, a.sample_rate, a.bytes);
    out << std::setprecision(3) << "bandwidth " << bw / 1e9 << " GB/s\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train, prune and sample WaveRNN audio models"};
  app.require_subcommand(1);
  CorpusArgs corpus;
  TrainArgs train_args;
  SampleArgs sample;
  BenchArgs bench;
  InspectArgs inspect;
  EstimateArgs estimate;
  add_corpus(app, corpus);
  add_train(app, train_args);
  add_sample(app, sample);
  add_benchmark(app, bench);
  add_inspect(app, inspect);
  add_estimate(app, estimate);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << "\n" << app.help();
    return kExitUserError;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "corpus") return run_corpus(corpus, out);
    if (cmd == "train") return run_train(train_args, out, err);
    if (cmd == "sample") return run_sample(sample, out);
    if (cmd == "benchmark") return run_benchmark(bench, out);
    if (cmd == "inspect") return run_inspect(inspect, out);
    if (cmd == "estimate") return run_estimate(estimate, out);
    err << "unknown command " << cmd << "\n";
    return kExitUserError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUserError;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternalError;
  }
}

}  // namespace wavernn::cli
