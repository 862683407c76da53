// synfault: generate / preprocess / train / eval / sweep.
//
// Settings come from built-in defaults, then --config, then SYNFAULT_*
// environment variables, then flags.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "synfault/pipeline.hpp"

using namespace synfault;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> method;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> per_class;
  std::optional<std::string> recordings;
  std::optional<std::string> evaluation;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "JSON run configuration")->envname("SYNFAULT_CONFIG");
  cmd->add_option("-s,--seed", c.seed, "base seed")->envname("SYNFAULT_SEED");
  cmd->add_option("-o,--output", c.output, "run directory")->envname("SYNFAULT_OUTPUT");
  cmd->add_option("--recordings", c.recordings, "sidecar JSON listing converted recordings")->envname("SYNFAULT_RECORDINGS");
  cmd->add_option("--per-class", c.per_class, "segments per class")->envname("SYNFAULT_PER_CLASS");
  cmd->add_option("-m,--method", c.method, "source-only | dann | conditional | proposed")->envname("SYNFAULT_METHOD");
  cmd->add_option("-e,--epochs", c.epochs, "training epochs")->envname("SYNFAULT_EPOCHS");
  cmd->add_option("--evaluation", c.evaluation, "transductive | held-out")->envname("SYNFAULT_EVALUATION");
}

config::RunConfig resolve(const Common& o) {
  config::RunConfig c = o.config_path.empty() ? config::RunConfig{} : config::load(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.output) c.output = *o.output;
  if (o.recordings) c.data.recordings = *o.recordings;
  if (o.per_class) c.data.per_class = *o.per_class;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.method) {
    try {
      c.train.method = adapt::method_from_string(*o.method);
    } catch (const ParameterError& e) {
      throw ValidationError(e.what());
    }
  }
  if (o.evaluation) {
    if (*o.evaluation == "transductive") c.evaluation = config::Evaluation::Transductive;
    else if (*o.evaluation == "held-out") c.evaluation = config::Evaluation::HeldOut;
    else throw ValidationError("--evaluation must be transductive or held-out");
  }
  if (c.seed) c.train.seed = *c.seed;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic-to-real bearing fault adaptation"};
  app.require_subcommand(1);

  Common common;
  std::vector<double> levels;
  std::optional<std::size_t> seeds;
  std::vector<std::string> methods;
  std::string checkpoint, dataset;

  auto* gen = app.add_subcommand("generate", "build the synthetic source and the target datasets");
  auto* pre = app.add_subcommand("preprocess", "write envelope order spectra of both datasets as TSV");
  auto* trn = app.add_subcommand("train", "train one model and score it on the target");
  auto* evl = app.add_subcommand("eval", "score a checkpoint on a dataset");
  auto* swp = app.add_subcommand("sweep", "balance levels x methods x seeds");
  for (auto* cmd : {gen, pre, trn, swp}) add_common(cmd, common);
  swp->add_option("--levels", levels, "rolling-element keep fractions, e.g. 0.2 0.01");
  swp->add_option("--seeds", seeds, "seeds per cell")->envname("SYNFAULT_SWEEP_SEEDS");
  swp->add_option("--methods", methods, "methods to compare");
  evl->add_option("--checkpoint", checkpoint, "model.ckpt from train")->required();
  evl->add_option("--dataset", dataset, "dataset stem (path without .manifest)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*evl) {
      const auto r = pipeline::evaluate(checkpoint, dataset);
      std::cout << metrics::to_key_value(r.report) << "\n" << metrics::to_string(r.confusion);
      return 0;
    }
    auto c = resolve(common);
    if (*gen) {
      const auto g = pipeline::generate(c);
      pipeline::write_generated(c, g);
      std::cout << "source=" << g.source.size() << " target=" << g.target.size() << " output=" << c.output << "\n";
    } else if (*pre) {
      const pipeline::Paths p{c.output};
      for (const auto& [name, stem] : {std::pair{"source", p.source()}, std::pair{"target", p.target()}}) {
        const auto ds = pipeline::load_dataset(stem);
        const auto path = p.root / (std::string(name) + "_spectra.tsv");
        std::ofstream os(path);
        pipeline::write_spectra_tsv(os, ds, pipeline::spectra(ds, c.preprocess));
        std::cout << path.string() << "\n";
      }
    } else if (*trn) {
      const auto r = pipeline::train(c, &std::cout);
      std::cout << metrics::to_key_value(r.report, {{"method", adapt::to_string(c.train.method)}}) << "\n";
    } else if (*swp) {
      if (!levels.empty()) c.sweep.levels = levels;
      if (seeds) c.sweep.seeds = *seeds;
      if (!methods.empty()) {
        c.sweep.methods.clear();
        for (const auto& m : methods) c.sweep.methods.push_back(adapt::method_from_string(m));
      }
      c.validate();
      const auto r = pipeline::sweep(c, &std::cout);
      std::cout << nn::io::read_file(pipeline::Paths{c.output}.sweep_summary());
      if (!r.complete()) {
        std::cerr << "error: some sweep runs failed (see sweep_runs.tsv)\n";
        return 3;
      }
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
