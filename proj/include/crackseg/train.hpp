#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crackseg/checkpoint.hpp"
#include "crackseg/config.hpp"
#include "crackseg/data/transforms.hpp"
#include "crackseg/inference.hpp"
#include "crackseg/loss.hpp"
#include "crackseg/metrics.hpp"
#include "crackseg/optim.hpp"

namespace crackseg {

class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual CrackSample get(std::size_t i) const = 0;
};

class MemorySource : public SampleSource {
 public:
  explicit MemorySource(std::vector<CrackSample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  CrackSample get(std::size_t i) const override { return samples_.at(i); }

 private:
  std::vector<CrackSample> samples_;
};

class DiskSource : public SampleSource {
 public:
  DiskSource(std::vector<SampleRef> refs, BoundaryOptions b) : refs_(std::move(refs)), boundary_(b) {}
  std::size_t size() const override { return refs_.size(); }
  CrackSample get(std::size_t i) const override { return load_sample(refs_.at(i), boundary_); }

 private:
  std::vector<SampleRef> refs_;
  BoundaryOptions boundary_;
};

// Newline-delimited JSON events; a null stream discards them.
class EventLog {
 public:
  explicit EventLog(std::ostream* os = nullptr) : os_(os) {}
  void emit(const nlohmann::json& event) {
    if (!os_) return;
    *os_ << event.dump() << '\n';
    os_->flush();
  }

 private:
  std::ostream* os_;
};

// Runs predict_image over every sample and collects per-image counts.
template <typename T>
MetricsReport evaluate_source(CrackSegNet<T>& model, const SampleSource& source, const EvalConfig& eval) {
  InferenceOptions opt = eval.inference;
  opt.threshold = eval.threshold;
  MetricsReport report;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const CrackSample s = source.get(i);
    const PredictionRecord rec = predict_image(model, image_to_tensor<T>(s.image), opt);
    ConfusionCounts c;
    accumulate(c, rec.mask, s.mask.pixels);
    report.add(s.id, c);
  }
  return report;
}

struct EpochStats {
  int epoch = 0;
  double loss = 0, wbce = 0, dice = 0, boundary_wbce = 0, boundary_dice = 0;
  std::optional<double> val_f1;
};

struct TrainResult {
  TrainingState state;
  std::vector<EpochStats> epochs;
};

struct TrainPaths {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
};

namespace detail {

inline double scheduled_lr(const TrainConfig& t, int epoch) {
  if (t.lr_schedule == "cosine" && t.epochs > 0)
    return t.learning_rate * 0.5 * (1 + std::cos(3.14159265358979323846 * epoch / t.epochs));
  return t.learning_rate;
}

}  // namespace detail

// Epoch loop: shuffle -> augment -> resize/normalize -> forward -> loss ->
// backward -> Adam. Everything random derives from train.seed and the epoch
// and sample indices, so a resumed run repeats an uninterrupted one.
template <typename T>
TrainResult train(CrackSegNet<T>& model, const SampleSource& train_set, const SampleSource* val_set,
                  const AppConfig& cfg, EventLog& log, const TrainPaths& paths = {}) {
  validate(cfg);
  if (train_set.size() == 0 && cfg.train.epochs > 0) throw DataError("training split is empty");
  const auto& tc = cfg.train;
  const std::string config_text = to_ini(cfg);
  AdamOptions ao;
  ao.lr = tc.learning_rate;
  ao.weight_decay = tc.weight_decay;
  Adam<T> adam(model.named_parameters(), ao);
  TrainResult result;
  if (paths.resume) {
    CheckpointReader reader(*paths.resume);
    reader.load_into(model, &adam);
    result.state = reader.header().state;
    log.emit({{"event", "resume"}, {"checkpoint", paths.resume->string()}, {"epochs_done", result.state.epochs_done}});
  }
  std::filesystem::path ckdir;
  if (!tc.checkpoint_dir.empty()) {
    ckdir = tc.checkpoint_dir;
    std::filesystem::create_directories(ckdir);
  }
  auto save = [&](const std::string& file) {
    if (ckdir.empty()) return;
    save_checkpoint(ckdir / file, model, config_text, result.state, &adam);
    log.emit({{"event", "checkpoint"}, {"path", (ckdir / file).string()}, {"epochs_done", result.state.epochs_done}});
  };
  log.emit({{"event", "start"},
            {"train_samples", train_set.size()},
            {"val_samples", val_set ? val_set->size() : 0},
            {"parameters", model.parameter_count()},
            {"config", config_text}});
  if (tc.epochs == 0) {
    save("last.ckpt");
    log.emit({{"event", "end"}, {"epochs_done", result.state.epochs_done}});
    return result;
  }
  const bool have_val = val_set && val_set->size() > 0 && tc.eval_every > 0;
  for (int epoch = result.state.epochs_done; epoch < tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    model.set_training(true);
    adam.set_lr(detail::scheduled_lr(tc, epoch));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(tc.seed, static_cast<std::uint64_t>(epoch), 0x5eed));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochStats stats;
    stats.epoch = epoch + 1;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch_size, ++batches) {
      const std::size_t count = std::min<std::size_t>(tc.batch_size, order.size() - b0);
      std::vector<Tensor<T>> imgs, masks, bounds;
      std::vector<std::string> ids;
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t idx = order[b0 + k];
        CrackSample s = train_set.get(idx);
        if (cfg.data.augment) s = augment(s, sample_seed(tc.seed, static_cast<std::uint64_t>(epoch), idx));
        auto tt = to_training_tensor<T>(s, cfg.data.image_size);
        imgs.push_back(std::move(tt.image));
        masks.push_back(std::move(tt.mask));
        bounds.push_back(std::move(tt.boundary));
        ids.push_back(s.id);
      }
      const Tensor<T> x = stack_batch(imgs);
      const Tensor<T> y = stack_batch(masks);
      const Tensor<T> yb = stack_batch(bounds);
      ModelOutput<T> out = model.forward(x);
      auto loss = total_loss(out, y, out.boundary_map ? &yb : nullptr, tc.lambda_boundary);
      if (!std::isfinite(loss.total)) {
        const nlohmann::json dump = {{"event", "nan"},     {"epoch", epoch + 1},   {"batch", batches},
                                     {"ids", ids},         {"wbce", loss.wbce},    {"dice", loss.dice},
                                     {"boundary_wbce", loss.boundary_wbce},        {"boundary_dice", loss.boundary_dice},
                                     {"logits_finite", out.seg_logits.all_finite()}};
        log.emit(dump);
        if (!ckdir.empty()) std::ofstream(ckdir / "nan_batch.json") << dump.dump(2) << '\n';
        std::string joined;
        for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + " batch " +
                            std::to_string(batches) + " (samples " + joined + ")");
      }
      model.zero_grad();
      model.backward(loss.d_logits, loss.d_boundary);
      adam.step();
      ++result.state.iterations;
      stats.loss += loss.total;
      stats.wbce += loss.wbce;
      stats.dice += loss.dice;
      stats.boundary_wbce += loss.boundary_wbce;
      stats.boundary_dice += loss.boundary_dice;
      if (tc.log_every > 0 && result.state.iterations % tc.log_every == 0)
        log.emit({{"event", "iter"},
                  {"epoch", epoch + 1},
                  {"iteration", result.state.iterations},
                  {"loss", loss.total},
                  {"wbce", loss.wbce},
                  {"dice", loss.dice},
                  {"boundary_wbce", loss.boundary_wbce},
                  {"boundary_dice", loss.boundary_dice}});
    }
    const double nb = std::max(batches, 1);
    stats.loss /= nb;
    stats.wbce /= nb;
    stats.dice /= nb;
    stats.boundary_wbce /= nb;
    stats.boundary_dice /= nb;
    result.state.epochs_done = epoch + 1;
    bool improved = false;
    if (have_val && (epoch + 1) % tc.eval_every == 0) {
      stats.val_f1 = evaluate_source(model, *val_set, cfg.eval).summary(cfg.eval.averaging).f1;
      model.set_training(true);
      if (*stats.val_f1 > result.state.best_val_f1) {
        result.state.best_val_f1 = *stats.val_f1;
        result.state.best_epoch = epoch + 1;
        improved = true;
      }
    }
    nlohmann::json ev = {{"event", "epoch"},
                         {"epoch", epoch + 1},
                         {"iterations", result.state.iterations},
                         {"lr", adam.options().lr},
                         {"loss", stats.loss},
                         {"wbce", stats.wbce},
                         {"dice", stats.dice},
                         {"boundary_wbce", stats.boundary_wbce},
                         {"boundary_dice", stats.boundary_dice},
                         {"val_f1", stats.val_f1 ? nlohmann::json(*stats.val_f1) : nlohmann::json(nullptr)},
                         {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    log.emit(ev);
    result.epochs.push_back(stats);
    save("last.ckpt");
    if (improved) save("best.ckpt");
  }
  // Without validation the final epoch is the selected model.
  if (!have_val) save("best.ckpt");
  log.emit({{"event", "end"}, {"epochs_done", result.state.epochs_done}, {"iterations", result.state.iterations}});
  return result;
}

}  // namespace crackseg
