#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "synfault/pipeline.hpp"

using namespace synfault;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "synfault_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

config::RunConfig small_run(const fs::path& out, std::uint64_t seed = 11) {
  config::RunConfig c;
  c.seed = seed;
  c.output = out.string();
  c.data.per_class = 10;
  c.data.simulated_seconds = 10;
  c.train.epochs = 5;
  c.train.batch_size = 16;
  c.train.seed = seed;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SYNFAULT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string body(const fs::path& p) {
  // Drop the "# config=" line: it names the output directory.
  auto text = nn::io::read_file(p);
  return text.substr(text.find('\n') + 1);
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  config::RunConfig c;
  c.seed = 42;
  c.output = "somewhere";
  c.data.per_class = 77;
  c.data.target_defect.frequency_scale = 1.02;
  c.defect.pulse_band = {0.1, 0.4};
  c.train.method = adapt::Method::Conditional;
  c.train.lr = 3e-4;
  c.imbalance = datastore::ImbalanceSpec::rolling_element_level(0.05);
  c.sweep.levels = {0.5, 0.02};
  c.sweep.methods = {adapt::Method::DANN};
  c.sweep.seeds = 3;
  c.evaluation = config::Evaluation::HeldOut;
  const auto j = config::to_json(c);
  const auto back = config::from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(config::to_json(back), j);
  EXPECT_EQ(back.train.seed, 42u);
  EXPECT_EQ(back.imbalance.fraction, c.imbalance.fraction);
  EXPECT_EQ(back.evaluation, config::Evaluation::HeldOut);
}

TEST(Config, UnknownKeysAndMissingSeedAreValidationErrors) {
  EXPECT_THROW(config::from_json(nlohmann::json::parse(R"({"seed": 1, "trian": {}})")), ValidationError);
  EXPECT_THROW(config::from_json(nlohmann::json::parse(R"({"seed": 1, "train": {"epoch": 3}})")), ValidationError);
  EXPECT_THROW(config::from_json(nlohmann::json::parse(R"({"seed": 1, "train": {"method": "magic"}})")), ValidationError);
  EXPECT_THROW(config::from_json(nlohmann::json::parse(R"({"seed": "one"})")), ValidationError);
  EXPECT_THROW(config::from_json(nlohmann::json::parse(R"({"evaluation": "both"})")), ValidationError);
  const auto c = config::from_json(nlohmann::json::parse(R"({"train": {"epochs": 3}})"));
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(c.seed_value(), ValidationError);
}

TEST(Config, FileWithCommentsAndRelativeRecordings) {
  const auto dir = scratch("configfile");
  std::ofstream(dir / "run.json") << R"({
    // comments are allowed
    "seed": 5,
    "data": {"recordings": "data/list.json", "per_class": 20}
  })";
  const auto c = config::load(dir / "run.json");
  EXPECT_EQ(c.seed_value(), 5u);
  EXPECT_EQ(fs::path(c.data.recordings), (dir / "data/list.json").lexically_normal());
  EXPECT_THROW(c.validate(), ValidationError);  // list does not exist
  EXPECT_THROW(config::load(dir / "missing.json"), ValidationError);
}

TEST(Pipeline, GenerateShapesAndProvenance) {
  const auto c = small_run(scratch("generate"));
  const auto g = pipeline::generate(c);
  for (FaultClass cl : kAllFaultClasses) {
    EXPECT_EQ(g.source.indices_of(cl).size(), 10u);
    EXPECT_EQ(g.target.indices_of(cl).size(), 10u);
  }
  EXPECT_EQ(g.source.domain, DomainTag::SyntheticSource);
  EXPECT_EQ(g.target.domain, DomainTag::RealTarget);
  // Source carriers and target healthy segments come from disjoint halves.
  std::set<std::string> src_carriers, tgt_healthy;
  for (const auto& r : g.source.records) src_carriers.insert(r.source);
  for (std::size_t i : g.target.indices_of(FaultClass::Healthy)) {
    const auto& id = g.target.records[i].id;
    tgt_healthy.insert(id.substr(0, id.find('~')));
  }
  for (const auto& id : tgt_healthy) EXPECT_EQ(src_carriers.count(id), 0u) << id;
  EXPECT_NO_THROW(g.source.validate());
  EXPECT_NO_THROW(g.target.validate());
}

TEST(Pipeline, TrainIsReproducibleAndWritesArtifacts) {
  const auto a = small_run(scratch("train_a"));
  const auto b = small_run(scratch("train_b"));
  for (const auto* c : {&a, &b}) pipeline::write_generated(*c, pipeline::generate(*c));
  const auto ra = pipeline::train(a);
  const auto rb = pipeline::train(b);
  const pipeline::Paths pa{a.output}, pb{b.output};
  for (const auto& p : {pa.metrics(), pa.confusion(), pa.train_log(), pa.checkpoint()}) EXPECT_TRUE(fs::exists(p)) << p;
  EXPECT_EQ(body(pa.metrics()), body(pb.metrics()));
  EXPECT_EQ(body(pa.train_log()), body(pb.train_log()));
  EXPECT_EQ(nn::io::read_file(pa.source().string() + ".f32"), nn::io::read_file(pb.source().string() + ".f32"));
  EXPECT_EQ(ra.report.balanced_accuracy, rb.report.balanced_accuracy);
  EXPECT_EQ(nn::io::read_file(pa.train_log()).rfind("# config=", 0), 0u);

  // The checkpoint scores the same as the training run on the same rows.
  const auto ev = pipeline::evaluate(pa.checkpoint(), pa.target());
  EXPECT_EQ(ev.report.balanced_accuracy, ra.report.balanced_accuracy);
  EXPECT_EQ(ev.header.at("method"), adapt::to_string(a.train.method));
}

TEST(Pipeline, HeldOutSplitIsDisjointAndImbalanced) {
  const auto c = small_run(scratch("heldout"));
  const auto g = pipeline::generate(c);
  const auto spec = datastore::ImbalanceSpec::rolling_element_level(0.2);
  const auto s = pipeline::split_target(g.target, spec, config::Evaluation::HeldOut, 3);
  std::vector<std::size_t> both;
  std::set_intersection(s.adapt.begin(), s.adapt.end(), s.score.begin(), s.score.end(), std::back_inserter(both));
  EXPECT_TRUE(both.empty());
  auto count = [&](const std::vector<std::size_t>& idx, FaultClass cl) {
    return std::count_if(idx.begin(), idx.end(), [&](std::size_t i) { return g.target.records[i].label == cl; });
  };
  EXPECT_EQ(count(s.adapt, FaultClass::Healthy), 5);
  EXPECT_EQ(count(s.adapt, FaultClass::RollingElement), 1);
  EXPECT_EQ(count(s.score, FaultClass::InnerRace), 1);
  const auto t = pipeline::split_target(g.target, spec, config::Evaluation::Transductive, 3);
  EXPECT_EQ(t.adapt, t.score);
  EXPECT_EQ(t.adapt.size(), 10u + 1 + 1 + 2);
}

TEST(Pipeline, SweepFillsEveryCell) {
  auto c = small_run(scratch("sweep"));
  c.train.epochs = 2;
  c.sweep.levels = {0.5, 0.1};
  c.sweep.methods = {adapt::Method::SourceOnly, adapt::Method::AugmentedConditional};
  c.sweep.seeds = 2;
  pipeline::write_generated(c, pipeline::generate(c));
  const auto r = pipeline::sweep(c);
  ASSERT_EQ(r.cells.size(), 8u);
  EXPECT_TRUE(r.complete());
  std::set<std::uint64_t> seeds;
  for (const auto& cell : r.cells) seeds.insert(cell.seed);
  EXPECT_EQ(seeds, (std::set<std::uint64_t>{11, 12}));
  const auto grid = body(pipeline::Paths{c.output}.sweep_summary());
  EXPECT_EQ(std::count(grid.begin(), grid.end(), '\n'), 3);
  EXPECT_NE(grid.find("source-only\tproposed"), std::string::npos);
}

TEST(Pipeline, TrainWithoutGenerateFails) {
  const auto c = small_run(scratch("nodata"));
  EXPECT_THROW(pipeline::train(c), ValidationError);
}

TEST(Cli, EndToEndAndExitCodes) {
  const auto dir = scratch("cli");
  const std::string out = " -o " + (dir / "run").string();
  ASSERT_EQ(run_cli("generate --seed 3 --per-class 10" + out), 0);
  ASSERT_EQ(run_cli("train --seed 3 --per-class 10 --epochs 3 -m dann" + out), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "metrics.txt"));
  EXPECT_NE(nn::io::read_file(dir / "run" / "metrics.txt").find("method=dann"), std::string::npos);
  EXPECT_EQ(run_cli("eval --checkpoint " + (dir / "run/model.ckpt").string() + " --dataset " + (dir / "run/target").string()), 0);
  EXPECT_EQ(run_cli("preprocess --seed 3" + out), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "target_spectra.tsv"));

  EXPECT_NE(run_cli("train --epochs 3" + out), 0);                                   // no seed
  EXPECT_NE(run_cli("generate --seed 3 --recordings /no/such/list.json" + out), 0);  // missing data
  EXPECT_NE(run_cli("train --seed 3 -m nonsense" + out), 0);
  EXPECT_NE(run_cli("eval --checkpoint /no/such.ckpt --dataset x"), 0);
  EXPECT_NE(run_cli(""), 0);
  std::ofstream(dir / "bad.json") << R"({"seed": 1, "bogus": true})";
  EXPECT_NE(run_cli("generate --config " + (dir / "bad.json").string() + out), 0);
}
