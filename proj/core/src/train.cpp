#include "dermfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dermfuse/losses.hpp"
#include "dermfuse/ops.hpp"

namespace dermfuse {

namespace {
enum : uint64_t {
  kTagShuffle = 200,
  kTagAugment = 300,
  kTagMixup = 301,
};
}

Adam::Adam(const TrainConfig& cfg) : cfg_(cfg) {}

void Adam::step(std::vector<NamedParam>& params, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params[i].tensor.numel()), 0.0);
      v_[i].assign(static_cast<size_t>(params[i].tensor.numel()), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw ShapeError("adam: parameter list changed size");
  }
  steps_ += 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  const double decay = 1.0 - lr * cfg_.weight_decay;

  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].tensor;
    auto& data = p.data();
    const auto& grad = p.grad_buf();
    auto& m = m_[i];
    auto& v = v_[i];
    if (!grad.empty() && grad.size() != data.size()) {
      throw ShapeError("adam: gradient size mismatch for " + params[i].name);
    }
    for (size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      if (!std::isfinite(g)) {
        throw NumericError("adam: non-finite gradient in " + params[i].name);
      }
      data[j] *= decay;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      data[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

double cosine_lr(int epoch, int total_epochs, double base_lr) {
  if (epoch < 0 || epoch >= total_epochs) {
    throw ConfigError("cosine_lr: epoch " + std::to_string(epoch) +
                      " outside [0, " + std::to_string(total_epochs) + ")");
  }
  return 0.5 * base_lr *
         (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                         static_cast<double>(total_epochs)));
}

Metrics evaluate(const Model& model, const std::vector<Sample>& split) {
  if (split.empty()) throw DataError("evaluate: empty split");
  std::vector<TaskLabels> predicted, actual;
  predicted.reserve(split.size());
  actual.reserve(split.size());
  for (const Sample& s : split) {
    predicted.push_back(model.predict(s).classes);
    actual.push_back(s.y);
  }
  return Metrics::from_pairs(predicted, actual);
}

Tensor batch_loss(const Model& model, const std::vector<TrainExample>& batch,
                  const TrainConfig& cfg) {
  Tensor logits = model.forward_batch(batch);
  Tensor targets = Tensor::zeros(logits.shape());
  auto& td = targets.data();
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto& row = batch[i].target;
    for (size_t c = 0; c < row.size(); ++c) {
      td[i * row.size() + c] = row[c];
    }
  }
  return cfg.loss == "twl" ? two_way_loss(logits, targets, cfg.temperature)
                           : bce_loss(logits, targets);
}

TrainResult train_model(Model& model, const Dataset& data) {
  const RunConfig& cfg = model.config();
  if (data.train_idx.empty()) throw DataError("train: empty training split");
  if (cfg.train.epochs > 0 && data.val_idx.empty()) {
    throw DataError("train: empty validation split");
  }

  const std::vector<Sample> train_set = data.gather(data.train_idx);
  const std::vector<Sample> val_set = data.gather(data.val_idx);
  const bool mixup_on =
      std::find(cfg.train.augment.begin(), cfg.train.augment.end(), "mixup") !=
      cfg.train.augment.end();

  Adam adam(cfg.train);
  TrainResult result;
  result.best = Checkpoint::capture(model, -1.0);
  double best_avg = -1.0;

  const int64_t n = static_cast<int64_t>(train_set.size());
  const int64_t bs = cfg.train.batch_size;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const double lr = cfg.train.schedule == "cosine"
                          ? cosine_lr(epoch, cfg.train.epochs, cfg.train.lr)
                          : cfg.train.lr;

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::derive(cfg.seed, {kTagShuffle,
                                           static_cast<uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int64_t seen = 0;
    int batch_index = 0;
    for (int64_t start = 0; start < n; start += bs, ++batch_index) {
      const int64_t count = std::min(bs, n - start);
      std::vector<TrainExample> batch;
      batch.reserve(static_cast<size_t>(count));
      for (int64_t j = 0; j < count; ++j) {
        const int64_t idx = order[static_cast<size_t>(start + j)];
        Rng aug_rng(Rng::derive(cfg.seed, {kTagAugment,
                                           static_cast<uint64_t>(epoch),
                                           static_cast<uint64_t>(idx)}));
        batch.push_back(to_example(augment_sample(
            train_set[static_cast<size_t>(idx)], aug_rng, cfg.train.augment)));
      }
      if (mixup_on && count > 1) {
        Rng mix_rng(Rng::derive(cfg.seed, {kTagMixup,
                                           static_cast<uint64_t>(epoch),
                                           static_cast<uint64_t>(batch_index)}));
        const double lambda =
            mix_rng.beta(cfg.train.mixup_alpha, cfg.train.mixup_alpha);
        std::vector<TrainExample> mixed;
        mixed.reserve(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) {
          mixed.push_back(mixup_examples(
              batch[i], batch[(i + 1) % batch.size()], lambda));
        }
        batch = std::move(mixed);
      }

      try {
        Tape tape;
        Tensor loss;
        {
          Tape::Scope scope(tape);
          loss = batch_loss(model, batch, cfg.train);
        }
        for (NamedParam& p : model.parameters()) p.tensor.zero_grad();
        tape.backward(loss);
        adam.step(model.parameters(), lr);
        loss_sum += loss.value() * static_cast<double>(count);
        seen += count;
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
    try {
      rec.val = evaluate(model, val_set);
    } catch (const NumericError& e) {
      throw NumericError("training aborted during validation after epoch " +
                         std::to_string(epoch) + ": " + e.what());
    }
    if (rec.val.avg > best_avg) {
      best_avg = rec.val.avg;
      result.best = Checkpoint::capture(model, best_avg);
      result.best.adam_m = adam.moment1();
      result.best.adam_v = adam.moment2();
      result.best.adam_steps = adam.steps();
    }
    result.history.push_back(std::move(rec));
  }
  return result;
}

}  // namespace dermfuse
