#pragma once

// Training loop, evaluation and resume. Every random draw is keyed by
// (seed, epoch, sample index), so batch preparation can run on any number of
// workers and a resumed run replays the uninterrupted trajectory exactly.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "b2i/byte2image.hpp"
#include "b2i/checkpoint.hpp"
#include "b2i/corpus.hpp"
#include "b2i/metrics.hpp"
#include "b2i/model.hpp"
#include "b2i/optim.hpp"

namespace b2i {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double peak_lr = 5e-4;
  std::size_t warmup_epochs = 2;
  AdamWConfig adamw{};
  std::uint64_t seed = 1;
  bool augment = true;
  AugmentConfig augment_cfg{};
  std::size_t workers = 1;  // batch preparation only; never changes results

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (warmup_epochs < 1 || warmup_epochs >= epochs) {
      throw ConfigError("need 1 <= warmup_epochs (" + std::to_string(warmup_epochs) +
                        ") < epochs (" + std::to_string(epochs) + ")");
    }
    if (!(peak_lr > 0)) throw ConfigError("learning rate must be > 0");
    if (adamw.weight_decay < 0) throw ConfigError("weight decay must be >= 0");
  }
};

/// Fields that shape the trajectory; stored in checkpoints for resume.
inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size},
          {"peak_lr", c.peak_lr},     {"warmup_epochs", c.warmup_epochs},
          {"seed", c.seed},           {"augment", c.augment},
          {"weight_decay", c.adamw.weight_decay},
          {"augment_cfg",
           {{"flip_p", c.augment_cfg.flip_p},
            {"erase_p", c.augment_cfg.erase_p},
            {"area_min", c.augment_cfg.area_min},
            {"area_max", c.augment_cfg.area_max},
            {"aspect_min", c.augment_cfg.aspect_min},
            {"aspect_max", c.augment_cfg.aspect_max},
            {"attempts", c.augment_cfg.attempts}}}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  try {
    base.epochs = j.at("epochs").get<std::size_t>();
    base.batch_size = j.at("batch_size").get<std::size_t>();
    base.peak_lr = j.at("peak_lr").get<double>();
    base.warmup_epochs = j.at("warmup_epochs").get<std::size_t>();
    base.seed = j.at("seed").get<std::uint64_t>();
    base.augment = j.at("augment").get<bool>();
    base.adamw.weight_decay = j.at("weight_decay").get<double>();
    const auto& a = j.at("augment_cfg");
    base.augment_cfg.flip_p = a.at("flip_p").get<double>();
    base.augment_cfg.erase_p = a.at("erase_p").get<double>();
    base.augment_cfg.area_min = a.at("area_min").get<double>();
    base.augment_cfg.area_max = a.at("area_max").get<double>();
    base.augment_cfg.aspect_min = a.at("aspect_min").get<double>();
    base.augment_cfg.aspect_max = a.at("aspect_max").get<double>();
    base.augment_cfg.attempts = a.at("attempts").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint training metadata: ") + e.what());
  }
  return base;
}

struct Dataset {
  std::vector<std::vector<std::uint8_t>> bytes;
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return bytes.size(); }
};

inline Dataset to_dataset(std::vector<LabeledSector> samples) {
  Dataset d;
  for (auto& s : samples) {
    d.bytes.push_back(std::move(s.bytes));
    d.labels.push_back(s.label);
  }
  return d;
}

/// Converts (and optionally augments) the listed samples and packs them.
/// The augmentation stream of sample i in epoch e is seeded by (seed, e, i).
template <typename T>
ModelInput<T> prepare_batch(const ModelConfig& cfg, const Dataset& data,
                            std::span<const std::size_t> index, std::size_t workers,
                            const AugmentConfig* augment = nullptr,
                            std::uint64_t seed = 0, std::uint64_t epoch = 0) {
  std::vector<std::span<const std::uint8_t>> bytes;
  for (std::size_t i : index) bytes.emplace_back(data.bytes.at(i));
  std::vector<NGramImage> images;
  if (cfg.uses_image()) {
    images.resize(index.size());
    detail::parallel_for(index.size(), workers, [&](std::size_t k) {
      if (bytes[k].size() != cfg.sector_len) {
        throw ShapeError("sample " + std::to_string(index[k]) + " has " +
                         std::to_string(bytes[k].size()) + " bytes, model expects " +
                         std::to_string(cfg.sector_len));
      }
      images[k] = convert(bytes[k], cfg.ngram);
      if (augment) {
        Rng rng(derive_seed({seed, epoch, index[k]}));
        b2i::augment(images[k], rng, *augment);
      }
    });
  }
  return pack_inputs<T>(cfg, bytes, images);
}

template <typename T>
ConfusionMatrix evaluate(FusionModel<T>& model, const Dataset& data,
                         std::size_t batch_size = 128, std::size_t workers = 1) {
  ConfusionMatrix cm(model.config().num_classes);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i)
      idx.push_back(i);
    const auto pred = model.predict(prepare_batch<T>(model.config(), data, idx, workers));
    for (std::size_t k = 0; k < idx.size(); ++k) cm.update(data.labels[idx[k]], pred[k]);
  }
  return cm;
}

struct EpochLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double lr = 0;
  double train_loss = 0;
  std::optional<double> val_acc;
  bool best = false;
};

inline std::string format_log(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch=%zu step=%llu lr=%.9g train_loss=%.6f val_acc=%s best=%d",
                e.epoch, static_cast<unsigned long long>(e.step), e.lr, e.train_loss,
                e.val_acc ? std::to_string(*e.val_acc).c_str() : "na", e.best ? 1 : 0);
  return buf;
}

template <typename T>
struct TrainState {
  FusionModel<T> model;
  AdamW<T> opt;
  std::size_t epochs_done = 0;
  std::uint64_t step = 0;
  double best_val = -1.0;
};

template <typename T>
TrainState<T> fresh_state(const ModelConfig& cfg, const TrainConfig& tc) {
  TrainState<T> st{FusionModel<T>(cfg), AdamW<T>(tc.adamw)};
  st.model.init(derive_seed({tc.seed, 0x1417}));
  return st;
}

/// Continues where the checkpoint left off. The stored trajectory fields
/// (epochs, lr, seed, ...) replace those in `tc`.
template <typename T>
TrainState<T> resume_state(const CheckpointData& d, TrainConfig& tc) {
  if (!d.training.contains("epochs_done")) {
    throw CheckpointError("checkpoint carries no training state to resume");
  }
  tc = train_config_from_json(d.training.at("config"), tc);
  TrainState<T> st{restore_model<T>(d), AdamW<T>(tc.adamw)};
  st.opt = restore_optimizer<T>(d, st.model, tc.adamw);
  st.epochs_done = d.training.at("epochs_done").get<std::size_t>();
  st.step = d.training.at("step").get<std::uint64_t>();
  st.best_val = d.training.at("best_val").get<double>();
  return st;
}

struct TrainOutputs {
  std::optional<fs::path> checkpoint;  // latest; best goes to "<path>.best"
  std::vector<std::string> labels;
  std::function<void(const EpochLog&)> on_epoch;
  std::size_t stop_after = std::numeric_limits<std::size_t>::max();  // epochs
};

template <typename T>
void train(TrainState<T>& st, const TrainConfig& tc, const Dataset& train_set,
           const Dataset& val_set, const TrainOutputs& out) {
  tc.validate();
  if (train_set.size() == 0) throw SplitError("training split is empty");
  const ModelConfig& cfg = st.model.config();
  for (std::uint32_t y : train_set.labels)
    if (y >= cfg.num_classes) throw ConfigError("training label exceeds class count");
  for (std::uint32_t y : val_set.labels)
    if (y >= cfg.num_classes) throw ConfigError("validation label exceeds class count");

  const std::size_t n = train_set.size();
  const std::uint64_t batches = (n + tc.batch_size - 1) / tc.batch_size;
  const LrSchedule sched(tc.peak_lr, tc.warmup_epochs * batches, tc.epochs * batches);

  for (std::size_t epoch = st.epochs_done + 1; epoch <= tc.epochs; ++epoch) {
    if (epoch > out.stop_after) break;
    const auto order = permutation(n, derive_seed({tc.seed, epoch, 0xB47C}));
    double loss_sum = 0;
    for (std::uint64_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * tc.batch_size;
      const std::size_t hi = std::min(n, lo + tc.batch_size);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const auto input = prepare_batch<T>(cfg, train_set, idx, tc.workers,
                                          tc.augment ? &tc.augment_cfg : nullptr,
                                          tc.seed, epoch);
      std::vector<std::uint32_t> labels;
      for (std::size_t i : idx) labels.push_back(train_set.labels[i]);
      const T loss = st.model.train_step(input, labels, st.opt, sched.lr_at(st.step + 1));
      ++st.step;
      loss_sum += static_cast<double>(loss) * static_cast<double>(idx.size());
    }
    st.epochs_done = epoch;

    EpochLog log{epoch, st.step, sched.lr_at(st.step), loss_sum / static_cast<double>(n), std::nullopt, false};
    if (val_set.size() > 0) {
      log.val_acc = evaluate(st.model, val_set, 128, tc.workers).accuracy();
      if (*log.val_acc > st.best_val) {
        st.best_val = *log.val_acc;
        log.best = true;
      }
    }
    if (out.checkpoint) {
      const nlohmann::json meta = {{"config", train_config_to_json(tc)},
                                   {"epochs_done", st.epochs_done},
                                   {"step", st.step},
                                   {"best_val", st.best_val},
                                   {"last_val_acc", log.val_acc ? *log.val_acc : -1.0},
                                   {"last_train_loss", log.train_loss}};
      save_checkpoint(*out.checkpoint, st.model, &st.opt, out.labels, meta);
      if (log.best) {
        save_checkpoint(fs::path(out.checkpoint->string() + ".best"), st.model, &st.opt,
                        out.labels, meta);
      }
    }
    if (out.on_epoch) out.on_epoch(log);
  }
}

}  // namespace b2i
