#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "crackseg/train.hpp"
#include "fixtures.hpp"

using namespace crackseg;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.stage_channels = {32, 40, 48, 56};
  c.bottleneck_channels = 64;
  c.se_reduction = 8;
  c.mvb_dim_ratio = 1.0;
  c.mvb_depths = {1, 1, 1};
  return c;
}

AppConfig tiny_app(const fs::path& ckdir) {
  AppConfig a;
  a.model = tiny_model();
  a.data.image_size = 32;
  a.train.epochs = 2;
  a.train.batch_size = 2;
  a.train.checkpoint_dir = ckdir.string();
  a.train.seed = 11;
  a.eval.inference.tile = 32;
  return a;
}

std::vector<CrackSample> tiny_samples(int n, int size = 32) {
  std::vector<CrackSample> out;
  for (int i = 0; i < n; ++i) out.push_back(fixtures::synthetic_crack(size, size, 100 + i));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

template <typename T>
void expect_same_parameters(CrackSegNet<T>& a, CrackSegNet<T>& b) {
  auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    ASSERT_EQ(pa[i].param->value.storage(), pb[i].param->value.storage()) << pa[i].name;
  auto ba = a.named_buffers(), bb = b.named_buffers();
  ASSERT_EQ(ba.size(), bb.size());
  for (std::size_t i = 0; i < ba.size(); ++i) ASSERT_EQ(ba[i].buffer->storage(), bb[i].buffer->storage()) << ba[i].name;
}

}  // namespace

// --- configuration --------------------------------------------------------

TEST(Config, ParsesSectionsAndLists) {
  const auto c = parse_config(
      "[model]\nstage_channels = 32, 48, 96, 192\nmvb_stages = 0,1,1,1\nuse_bam = false\n"
      "[data]\nroot = /data/crack500\nimage_size = 128\n"
      "[train]\nlearning_rate = 3e-4\nlr_schedule = cosine\n"
      "[eval]\naveraging = macro\ntile = 128\noverlap = 32\n");
  EXPECT_EQ(c.model.stage_channels, (std::array<int, 4>{32, 48, 96, 192}));
  EXPECT_EQ(c.model.mvb_stages, (std::array<bool, 4>{false, true, true, true}));
  EXPECT_FALSE(c.model.use_bam);
  EXPECT_EQ(c.data.root, "/data/crack500");
  EXPECT_EQ(c.data.image_size, 128);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 3e-4);
  EXPECT_EQ(c.train.lr_schedule, "cosine");
  EXPECT_EQ(c.eval.averaging, Averaging::macro);
  EXPECT_EQ(c.eval.inference.overlap, 32);
  EXPECT_EQ(c.train.batch_size, 2);
}

TEST(Config, RoundTripsThroughIni) {
  AppConfig a = tiny_app("/tmp/ck");
  a.train.learning_rate = 1.0 / 3.0;
  a.data.boundary.ring = true;
  a.eval.threshold = 0.375;
  const std::string text = to_ini(a);
  const AppConfig b = parse_config(text);
  EXPECT_EQ(to_ini(b), text);
  EXPECT_EQ(b.model, a.model);
  EXPECT_EQ(b.train.learning_rate, a.train.learning_rate);
}

TEST(Config, RejectsUnknownAndMalformedEntries) {
  EXPECT_THROW(parse_config("[model]\nwidth = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[optimizer]\nlr = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nepochs = ten\n"), ConfigError);
  EXPECT_THROW(parse_config("[data]\naugment = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\nstage_channels = 1,2,3\n"), ConfigError);
  EXPECT_THROW(parse_config("[eval]\naveraging = weighted\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.ini"), ConfigError);
}

TEST(Config, ValidationCatchesInconsistentSettings) {
  AppConfig a = tiny_app("");
  EXPECT_NO_THROW(validate(a));
  a.data.image_size = 40;
  EXPECT_THROW(validate(a), ConfigError);
  a = tiny_app("");
  a.train.optimizer = "sgd";
  EXPECT_THROW(validate(a), ConfigError);
  a = tiny_app("");
  a.eval.threshold = 1.5;
  EXPECT_THROW(validate(a), ConfigError);
  a = tiny_app("");
  a.eval.inference.tile = 24;
  EXPECT_THROW(validate(a), ConfigError);
}

// --- checkpoints ----------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = fixtures::temp_dir("ckpt");
  CrackSegNet<float> model(tiny_model(), 4);
  Adam<float> adam(model.named_parameters());
  // One real step so moments, running stats and weights are all non-trivial.
  const auto t = to_training_tensor<float>(tiny_samples(1)[0], 32);
  auto out = model.forward(t.image);
  auto loss = total_loss(out, t.mask, &t.boundary);
  model.zero_grad();
  model.backward(loss.d_logits, loss.d_boundary);
  adam.step();
  TrainingState st{3, 17, 0.625, 2};
  save_checkpoint(dir / "a.ckpt", model, "[train]\nepochs = 3\n", st, &adam);

  CrackSegNet<float> other(tiny_model(), 99);
  Adam<float> adam2(other.named_parameters());
  CheckpointReader reader(dir / "a.ckpt");
  reader.load_into(other, &adam2);
  expect_same_parameters(model, other);
  EXPECT_EQ(adam2.steps(), 1);
  for (std::size_t k = 0; k < adam.params().size(); ++k) {
    ASSERT_EQ(adam.first_moment(k), adam2.first_moment(k));
    ASSERT_EQ(adam.second_moment(k), adam2.second_moment(k));
  }
  EXPECT_EQ(reader.header().state.iterations, 17);
  EXPECT_EQ(reader.header().state.best_val_f1, 0.625);
  EXPECT_EQ(reader.header().config_text, "[train]\nepochs = 3\n");

  save_checkpoint(dir / "b.ckpt", other, "[train]\nepochs = 3\n", st, &adam2);
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
  EXPECT_FALSE(fs::exists(dir / "a.ckpt.tmp"));

  auto loaded = load_model<float>(dir / "a.ckpt");
  expect_same_parameters(model, *loaded);
}

TEST(Checkpoint, RejectsMismatchedAndCorruptFiles) {
  const auto dir = fixtures::temp_dir("ckpt_bad");
  CrackSegNet<float> model(tiny_model());
  save_checkpoint(dir / "m.ckpt", model);
  auto cfg = tiny_model();
  cfg.use_bam = false;
  CrackSegNet<float> other(cfg);
  EXPECT_THROW(CheckpointReader(dir / "m.ckpt").load_into(other), ConfigError);
  Adam<float> adam(model.named_parameters());
  EXPECT_THROW(CheckpointReader(dir / "m.ckpt").load_into(model, &adam), CheckpointError);

  std::ofstream(dir / "junk.ckpt") << "hello world, not a checkpoint";
  EXPECT_THROW(CheckpointReader{dir / "junk.ckpt"}, CheckpointError);
  const std::string full = slurp(dir / "m.ckpt");
  std::ofstream(dir / "short.ckpt", std::ios::binary) << full.substr(0, full.size() / 2);
  EXPECT_THROW(CheckpointReader(dir / "short.ckpt").load_into(model), CheckpointError);
  EXPECT_THROW(CheckpointReader{dir / "absent.ckpt"}, CheckpointError);
}

// --- training loop --------------------------------------------------------

TEST(Train, ZeroEpochsWritesInitialCheckpoint) {
  const auto dir = fixtures::temp_dir("train0");
  auto cfg = tiny_app(dir);
  cfg.train.epochs = 0;
  CrackSegNet<float> model(cfg.model, 1);
  MemorySource src(tiny_samples(2));
  std::ostringstream logtext;
  EventLog log(&logtext);
  const auto r = train(model, src, nullptr, cfg, log);
  EXPECT_EQ(r.state.epochs_done, 0);
  EXPECT_TRUE(r.epochs.empty());
  ASSERT_TRUE(fs::exists(dir / "last.ckpt"));
  auto loaded = load_model<float>(dir / "last.ckpt");
  expect_same_parameters(model, *loaded);
}

TEST(Train, LogIsNdjsonAndCheckpointsAreWritten) {
  const auto dir = fixtures::temp_dir("train_log");
  auto cfg = tiny_app(dir);
  cfg.train.log_every = 1;
  CrackSegNet<float> model(cfg.model, 1);
  MemorySource src(tiny_samples(3));
  MemorySource val({fixtures::synthetic_crack(48, 32, 7, 3, Split::val)});
  std::ostringstream logtext;
  EventLog log(&logtext);
  const auto r = train(model, src, &val, cfg, log);
  EXPECT_EQ(r.state.epochs_done, 2);
  EXPECT_EQ(r.state.iterations, 4);
  ASSERT_EQ(r.epochs.size(), 2u);
  EXPECT_TRUE(r.epochs[0].val_f1.has_value());
  std::istringstream lines(logtext.str());
  std::string line;
  std::map<std::string, int> events;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    ++events[j.at("event").get<std::string>()];
    if (j["event"] == "epoch") {
      EXPECT_TRUE(j.contains("loss"));
      EXPECT_TRUE(j.contains("val_f1"));
    }
  }
  EXPECT_EQ(events["start"], 1);
  EXPECT_EQ(events["iter"], 4);
  EXPECT_EQ(events["epoch"], 2);
  EXPECT_EQ(events["end"], 1);
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  EXPECT_GE(CheckpointReader(dir / "best.ckpt").header().state.best_epoch, 1);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const auto full_dir = fixtures::temp_dir("resume_full");
  const auto part_dir = fixtures::temp_dir("resume_part");
  MemorySource src(tiny_samples(3));
  EventLog quiet;

  auto cfg = tiny_app(full_dir);
  CrackSegNet<float> straight(cfg.model, 2);
  train(straight, src, nullptr, cfg, quiet);

  auto first = tiny_app(part_dir);
  first.train.epochs = 1;
  CrackSegNet<float> half(first.model, 2);
  train(half, src, nullptr, first, quiet);

  auto second = tiny_app(part_dir);
  CrackSegNet<float> resumed(second.model, 77);
  TrainPaths paths;
  paths.resume = part_dir / "last.ckpt";
  const auto r = train(resumed, src, nullptr, second, quiet, paths);
  EXPECT_EQ(r.state.epochs_done, 2);
  expect_same_parameters(straight, resumed);
}

TEST(Train, NonFiniteLossAbortsWithSampleIds) {
  const auto dir = fixtures::temp_dir("train_nan");
  auto cfg = tiny_app(dir);
  cfg.data.augment = false;
  CrackSegNet<float> model(cfg.model, 1);
  for (auto& p : model.named_parameters())
    if (p.name == "head.bias") p.param->value.fill(std::numeric_limits<float>::quiet_NaN());
  MemorySource src(tiny_samples(2));
  std::ostringstream logtext;
  EventLog log(&logtext);
  try {
    train(model, src, nullptr, cfg, log);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("train/synthetic_10"), std::string::npos) << e.what();
  }
  EXPECT_NE(logtext.str().find("\"event\":\"nan\""), std::string::npos);
  ASSERT_TRUE(fs::exists(dir / "nan_batch.json"));
  const auto dump = nlohmann::json::parse(slurp(dir / "nan_batch.json"));
  EXPECT_EQ(dump["ids"].size(), 2u);
}

TEST(Train, EmptyTrainingSplitIsAnError) {
  auto cfg = tiny_app("");
  CrackSegNet<float> model(cfg.model);
  MemorySource empty({});
  EventLog quiet;
  EXPECT_THROW(train(model, empty, nullptr, cfg, quiet), DataError);
}

// --- evaluation -----------------------------------------------------------

TEST(Evaluate, ConstantPredictorsGiveKnownCounts) {
  const auto val = tiny_samples(2, 48);
  std::uint64_t cracks = 0;
  for (const auto& s : val)
    for (auto v : s.mask.pixels) cracks += v;
  MemorySource src(val);
  EvalConfig ec;
  ec.inference.tile = 32;
  CrackSegNet<float> model(tiny_model());
  auto set_head = [&](float bias) {
    for (auto& p : model.named_parameters()) {
      if (p.name == "head.weight") p.param->value.zero();
      if (p.name == "head.bias") p.param->value.fill(bias);
    }
  };
  set_head(-50);
  auto report = evaluate_source(model, src, ec);
  EXPECT_EQ(report.pooled().tp, 0u);
  EXPECT_EQ(report.pooled().fp, 0u);
  EXPECT_EQ(report.pooled().fn, cracks);
  EXPECT_TRUE(report.summary().degenerate);
  EXPECT_EQ(report.summary().f1, 0.0);

  set_head(50);
  report = evaluate_source(model, src, ec);
  EXPECT_EQ(report.pooled().tp, cracks);
  EXPECT_EQ(report.pooled().tn, 0u);
  EXPECT_NEAR(report.summary().precision, static_cast<double>(cracks) / (2 * 48 * 48), 1e-12);
  EXPECT_EQ(report.summary().recall, 1.0);
  EXPECT_EQ(report.rows()[0].id, "train/synthetic_100");
}

TEST(Evaluate, DiskSourceMatchesMemorySource) {
  const auto root = fixtures::temp_dir("eval_disk");
  const auto samples = tiny_samples(2);
  fixtures::write_dataset(root, samples);
  const auto ds = load_dataset(root, "deepcrack");
  DiskSource disk(ds.split(Split::train), {});
  MemorySource mem(samples);
  ASSERT_EQ(disk.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(disk.get(i).image, mem.get(i).image);
    EXPECT_EQ(disk.get(i).mask, mem.get(i).mask);
    EXPECT_EQ(disk.get(i).boundary, mem.get(i).boundary);
  }
}
