#pragma once

// The commands behind the CLI: generate, preprocess, train, eval, sweep.
// Each writes into RunConfig::output and stamps its artifacts with the
// resolved config so any result can be rerun from its own files.
//
//   <output>/source.{manifest,f32}    synthetic labeled source
//   <output>/target.{manifest,f32}    target domain, labels sealed for eval
//   <output>/generate.json            provenance of both containers
//   <output>/model.ckpt, train.log, metrics.txt, confusion.tsv
//   <output>/sweep_runs.tsv, sweep.tsv

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "synfault/adapt.hpp"
#include "synfault/config.hpp"
#include "synfault/datastore.hpp"
#include "synfault/dsp.hpp"
#include "synfault/machine.hpp"
#include "synfault/metrics.hpp"
#include "synfault/siggen.hpp"

namespace synfault::pipeline {

namespace fs = std::filesystem;
using config::RunConfig;
using datastore::Dataset;
using nlohmann::json;

namespace stream {
inline constexpr std::uint64_t kSegments = 0x61;
inline constexpr std::uint64_t kHealthySplit = 0x62;
inline constexpr std::uint64_t kSimulatedMachine = 0x63;
inline constexpr std::uint64_t kSourceFaults = 0x64;
inline constexpr std::uint64_t kTargetFaults = 0x65;
inline constexpr std::uint64_t kSubsample = 0x66;
inline constexpr std::uint64_t kHeldOut = 0x67;
}  // namespace stream

struct Paths {
  fs::path root;
  fs::path source() const { return root / "source"; }
  fs::path target() const { return root / "target"; }
  fs::path provenance() const { return root / "generate.json"; }
  fs::path checkpoint() const { return root / "model.ckpt"; }
  fs::path train_log() const { return root / "train.log"; }
  fs::path metrics() const { return root / "metrics.txt"; }
  fs::path confusion() const { return root / "confusion.tsv"; }
  fs::path sweep_runs() const { return root / "sweep_runs.tsv"; }
  fs::path sweep_summary() const { return root / "sweep.tsv"; }
};

inline std::string config_line(const RunConfig& c) { return config::to_json(c).dump(); }

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  nn::io::write_file(p, text);
}

// --- generate ------------------------------------------------------------------

struct Generated {
  Dataset source;
  Dataset target;
};

namespace detail {

/// Healthy and (when recordings exist) real fault segments for the target.
inline Dataset collect_segments(const RunConfig& c) {
  const std::uint64_t seed = c.seed_value();
  Rng rng = make_rng(seed, stream::kSegments);
  if (!c.data.recordings.empty()) {
    return datastore::ingest_recordings(datastore::read_recording_list(c.data.recordings), c.data.segment_length, c.data.per_class, rng);
  }
  const auto& m = c.data.machine;
  const auto n = static_cast<std::size_t>(c.data.simulated_seconds * m.sample_rate);
  const auto raw = machine::healthy_recording(n, derive_seed(seed, stream::kSimulatedMachine), m);
  Dataset ds;
  for (const auto& s : datastore::segment_recording(raw, c.data.segment_length, c.data.per_class, rng, m.sample_rate, m.shaft_rpm,
                                                    FaultClass::Healthy)) {
    ds.add(s, "healthy-" + std::to_string(ds.size()), 0, "simulated");
  }
  return ds;
}

inline void add_synthetic(Dataset& out, const std::vector<siggen::SyntheticSample>& samples, const Dataset& healthy,
                          const std::vector<std::size_t>& pool, const std::string& prefix) {
  std::map<FaultClass, std::size_t> count;
  for (const auto& s : samples) {
    const FaultClass c = *s.segment.label;
    out.add(s.segment, prefix + std::string(to_string(c)) + "-" + std::to_string(count[c]++), s.seed, healthy.records[pool[s.carrier]].id);
  }
}

}  // namespace detail

/// Splits the healthy segments, synthesizes the source from one half and
/// builds the target from the other half plus real (or simulated) faults.
inline Generated generate(const RunConfig& c) {
  c.validate();
  const std::uint64_t seed = c.seed_value();
  const Dataset all = detail::collect_segments(c);
  const auto healthy_idx = all.indices_of(FaultClass::Healthy);
  if (healthy_idx.size() < 2) throw ValidationError("need healthy recordings to build the source domain");

  Rng split_rng = make_rng(seed, stream::kHealthySplit);
  const auto split = datastore::split_healthy(healthy_idx.size(), split_rng, c.data.per_class);
  const Dataset healthy = datastore::select(all, healthy_idx);
  auto segments_of = [&](const std::vector<std::size_t>& pool) {
    std::vector<Segment> out;
    for (std::size_t i : pool) out.push_back(healthy.segment(i));
    return out;
  };

  Generated g;
  g.source.domain = DomainTag::SyntheticSource;
  const std::vector<FaultClass> all_classes(kAllFaultClasses.begin(), kAllFaultClasses.end());
  const auto src = siggen::generate_source_dataset(segments_of(split.source_pool), c.geometry, all_classes, c.data.per_class,
                                                   derive_seed(seed, stream::kSourceFaults), c.defect);
  detail::add_synthetic(g.source, src, healthy, split.source_pool, "src-");

  g.target.domain = DomainTag::RealTarget;
  std::map<std::size_t, std::size_t> copies;
  for (std::size_t i : split.target_pool) {
    const std::size_t k = copies[i]++;
    g.target.add(healthy.segment(i), healthy.records[i].id + (k ? "~" + std::to_string(k) : ""), 0, healthy.records[i].source);
  }
  if (!c.data.recordings.empty()) {
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (all.records[i].label == FaultClass::Healthy) continue;
      g.target.add(all.segment(i), all.records[i].id, 0, all.records[i].source);
    }
  } else {
    const std::vector<FaultClass> faults{FaultClass::OuterRace, FaultClass::InnerRace, FaultClass::RollingElement};
    auto tgt = siggen::generate_source_dataset(segments_of(split.target_pool), c.geometry, faults, c.data.per_class,
                                               derive_seed(seed, stream::kTargetFaults), c.data.target_defect);
    for (auto& s : tgt) s.segment.domain = DomainTag::RealTarget;
    detail::add_synthetic(g.target, tgt, healthy, split.target_pool, "tgt-");
  }
  for (FaultClass cl : kAllFaultClasses) {
    if (g.target.indices_of(cl).empty()) throw ValidationError("target has no " + std::string(to_string(cl)) + " segments");
  }
  return g;
}

inline void write_generated(const RunConfig& c, const Generated& g) {
  const Paths p{c.output};
  datastore::save(g.source, p.source());
  datastore::save(g.target, p.target());
  json prov{{"config", config::to_json(c)}, {"source_samples", g.source.size()}, {"target_samples", g.target.size()}};
  write_text(p.provenance(), prov.dump(2) + "\n");
}

// --- preprocess ------------------------------------------------------------------

inline adapt::SpectrumSet spectra(const Dataset& ds, const dsp::PreprocessOptions& opt, bool keep_labels = true) {
  adapt::SpectrumSet out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto e = dsp::preprocess(ds.segment(i), opt);
    out.push_back(e.values, keep_labels && e.label ? static_cast<int>(class_index(*e.label)) : -1);
  }
  return out;
}

inline adapt::SpectrumSet rows(const adapt::SpectrumSet& s, std::span<const std::size_t> idx) {
  adapt::SpectrumSet out;
  out.width = s.width;
  for (std::size_t i : idx) {
    const auto r = s.row(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
    out.labels.push_back(s.labels[i]);
  }
  return out;
}

/// Tab-separated spectra: id, label, then one column per shaft order.
inline void write_spectra_tsv(std::ostream& os, const Dataset& ds, const adapt::SpectrumSet& s) {
  os << "id\tlabel";
  os << std::setprecision(4);
  for (std::size_t j = 0; j < s.width; ++j) os << "\t" << dsp::EnvelopeSpectrum::order_at(j);
  os << "\n" << std::setprecision(7);
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << ds.records[i].id << "\t" << (ds.records[i].label ? std::string(to_string(*ds.records[i].label)) : "");
    for (float v : s.row(i)) os << "\t" << v;
    os << "\n";
  }
}

// --- train / eval ----------------------------------------------------------------

/// Target rows used for adaptation (labels hidden) and for scoring.
struct TargetSplit {
  std::vector<std::size_t> adapt;
  std::vector<std::size_t> score;
};

inline TargetSplit split_target(const Dataset& target, const datastore::ImbalanceSpec& spec, config::Evaluation mode, std::uint64_t seed) {
  Rng rng = make_rng(seed, stream::kSubsample);
  TargetSplit out;
  if (mode == config::Evaluation::Transductive) {
    out.adapt = datastore::subsample_indices(target, spec, rng);
    out.score = out.adapt;
    return out;
  }
  // Held-out: per class halves, each subsampled at the same balance.
  Rng halves = make_rng(seed, stream::kHeldOut);
  std::vector<std::size_t> a, b;
  for (FaultClass c : kAllFaultClasses) {
    auto idx = target.indices_of(c);
    if (idx.size() < 2) throw ParameterError("held-out evaluation needs two target samples of every class");
    std::shuffle(idx.begin(), idx.end(), halves);
    const std::size_t h = (idx.size() + 1) / 2;
    a.insert(a.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(h));
    b.insert(b.end(), idx.begin() + static_cast<std::ptrdiff_t>(h), idx.end());
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  auto pick = [&](const std::vector<std::size_t>& part) {
    const auto sub = datastore::subsample_indices(datastore::select(target, part), spec, rng);
    std::vector<std::size_t> out_idx;
    for (std::size_t i : sub) out_idx.push_back(part[i]);
    return out_idx;
  };
  out.adapt = pick(a);
  out.score = pick(b);
  return out;
}

struct RunResult {
  adapt::TrainResult<float> trained;
  metrics::ConfusionMatrix confusion{4};
  metrics::Report report;
  double seconds = 0.0;
};

/// Trains one model on precomputed spectra and scores it on the target.
inline RunResult run(const adapt::SpectrumSet& source, const adapt::SpectrumSet& target, const TargetSplit& split,
                     const adapt::TrainConfig& cfg, const std::function<void(const adapt::EpochLog&)>& on_epoch = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto adapt_set = rows(target, split.adapt).unlabeled();
  const auto score_set = rows(target, split.score);
  adapt::TrainHooks hooks;
  hooks.eval = &score_set;
  hooks.eval_every = std::max<std::size_t>(1, cfg.epochs / 10);
  hooks.on_epoch = on_epoch;
  RunResult r{adapt::train<float>(source, adapt_set, cfg, hooks), metrics::ConfusionMatrix(cfg.classes), {}, 0.0};
  r.confusion = adapt::confusion(r.trained.model, score_set);
  r.report = metrics::evaluate(r.confusion);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline Dataset load_dataset(const fs::path& stem) {
  if (!fs::exists(datastore::manifest_path(stem)))
    throw ValidationError("dataset " + stem.string() + " not found (run `generate` first)");
  return datastore::load(stem);
}

/// `train` command: writes checkpoint, per-epoch log, metrics and confusion.
inline RunResult train(const RunConfig& c, std::ostream* progress = nullptr) {
  c.validate();
  const Paths p{c.output};
  const Dataset source = load_dataset(p.source());
  const Dataset target = load_dataset(p.target());
  adapt::TrainConfig cfg = c.train;
  cfg.seed = c.seed_value();
  const auto src = spectra(source, c.preprocess);
  const auto tgt = spectra(target, c.preprocess);
  const auto split = split_target(target, c.imbalance, c.evaluation, cfg.seed);

  fs::create_directories(p.root);
  std::ofstream log(p.train_log());
  log << "# config=" << config_line(c) << "\n";
  auto r = run(src, tgt, split, cfg, [&](const adapt::EpochLog& e) {
    log << e.to_string(cfg) << "\n" << std::flush;
    if (progress) *progress << e.to_string(cfg) << "\n" << std::flush;
  });

  const std::map<std::string, std::string> tags{{"method", adapt::to_string(cfg.method)}, {"seed", std::to_string(cfg.seed)}};
  auto header = tags;
  header["config"] = config_line(c);
  header["balanced_accuracy"] = std::to_string(r.report.balanced_accuracy);
  nn::save_checkpoint(p.checkpoint(), r.trained.model.checkpoint(header));
  write_text(p.metrics(), "# config=" + config_line(c) + "\n" + metrics::to_key_value(r.report, tags) + "\n");
  write_text(p.confusion(), "# config=" + config_line(c) + "\n" + metrics::to_string(r.confusion));
  return r;
}

struct EvalResult {
  metrics::ConfusionMatrix confusion{4};
  metrics::Report report;
  std::map<std::string, std::string> header;
};

/// `eval` command: scores a checkpoint on every labeled record of a dataset.
inline EvalResult evaluate(const fs::path& checkpoint, const fs::path& dataset, const dsp::PreprocessOptions& opt = {}) {
  if (!fs::exists(checkpoint)) throw ValidationError("checkpoint not found: " + checkpoint.string());
  const auto ck = nn::load_checkpoint(checkpoint);
  auto m = model::Model<float>::from_checkpoint(ck);
  const Dataset ds = load_dataset(dataset);
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.records[i].label) labeled.push_back(i);
  if (labeled.empty()) throw ValidationError("dataset has no labeled records to score");
  EvalResult r;
  r.header = ck.header;
  r.confusion = adapt::confusion(m, spectra(datastore::select(ds, labeled), opt));
  r.report = metrics::evaluate(r.confusion);
  return r;
}

// --- sweep ---------------------------------------------------------------------

struct SweepCell {
  double level = 0.0;
  adapt::Method method = adapt::Method::SourceOnly;
  std::uint64_t seed = 0;
  std::optional<metrics::Report> report;  // empty: the run failed
  std::string error;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  bool complete() const {
    return std::all_of(cells.begin(), cells.end(), [](const SweepCell& c) { return c.report.has_value(); });
  }
};

inline std::string percent(double level) {
  std::ostringstream os;
  os << level * 100.0;
  return os.str();
}

/// Every (balance level, method, seed) cell; rolling-element fraction set
/// per level on top of the configured imbalance. Failed cells are recorded
/// and the sweep moves on.
inline SweepResult sweep(const RunConfig& c, std::ostream* progress = nullptr) {
  c.validate();
  const Paths p{c.output};
  const Dataset source = load_dataset(p.source());
  const Dataset target = load_dataset(p.target());
  const auto src = spectra(source, c.preprocess);
  const auto tgt = spectra(target, c.preprocess);

  SweepResult out;
  for (double level : c.sweep.levels) {
    auto spec = c.imbalance;
    spec.fraction[class_index(FaultClass::RollingElement)] = level;
    for (adapt::Method method : c.sweep.methods) {
      for (std::size_t k = 0; k < c.sweep.seeds; ++k) {
        SweepCell cell{level, method, c.seed_value() + k, std::nullopt, {}};
        try {
          adapt::TrainConfig cfg = c.train;
          cfg.method = method;
          cfg.seed = cell.seed;
          cell.report = run(src, tgt, split_target(target, spec, c.evaluation, cell.seed), cfg).report;
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        if (progress) {
          *progress << "level=" << percent(level) << " method=" << adapt::to_string(method) << " seed=" << cell.seed;
          if (cell.report) *progress << " balanced_accuracy=" << cell.report->balanced_accuracy << "\n";
          else *progress << " status=failed error=\"" << cell.error << "\"\n";
        }
        out.cells.push_back(std::move(cell));
      }
    }
  }

  std::ostringstream runs;
  runs << "# config=" << config_line(c) << "\n";
  runs << "level\tmethod\tseed\tstatus\tbalanced_accuracy\taccuracy\tf1_macro\tf1_micro\tkappa\n";
  for (const auto& cell : out.cells) {
    runs << percent(cell.level) << "\t" << adapt::to_string(cell.method) << "\t" << cell.seed << "\t" << (cell.report ? "ok" : "failed");
    if (cell.report) {
      const auto& r = *cell.report;
      runs << "\t" << r.balanced_accuracy << "\t" << r.accuracy << "\t" << r.f1_macro << "\t" << r.f1_micro << "\t" << r.kappa;
    } else {
      runs << "\t\t\t\t\t";
    }
    runs << "\n";
  }
  write_text(p.sweep_runs(), runs.str());

  // Mean over the seeds of each (level, method) cell.
  std::ostringstream grid;
  grid << "# config=" << config_line(c) << "\n";
  grid << "level";
  for (auto m : c.sweep.methods) grid << "\t" << adapt::to_string(m);
  grid << "\n";
  for (double level : c.sweep.levels) {
    grid << percent(level);
    for (auto m : c.sweep.methods) {
      std::vector<metrics::Report> ok;
      std::size_t failed = 0;
      for (const auto& cell : out.cells) {
        if (cell.level != level || cell.method != m) continue;
        if (cell.report) ok.push_back(*cell.report);
        else ++failed;
      }
      grid << "\t";
      if (!ok.empty()) grid << metrics::mean_report(ok).balanced_accuracy;
      if (failed) grid << (ok.empty() ? "" : " ") << "(" << failed << " failed)";
    }
    grid << "\n";
  }
  write_text(p.sweep_summary(), grid.str());
  return out;
}

}  // namespace synfault::pipeline
