#include "masa/train/loop.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "masa/core/autograd.hpp"
#include "masa/core/ops.hpp"

namespace masa {

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rank() != 1) throw DimensionError("cross_entropy needs logits [C], got " + shape_str(logits.shape()));
  const std::size_t C = logits.dim(0);
  if (label >= C) {
    throw UsageError("label " + std::to_string(label) + " out of range for " + std::to_string(C) + " classes");
  }
  const auto& z = logits.values();
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  return make_result("cross_entropy", {}, {lse - z[label]}, {logits},
                     [logits, label, lse](const detail::TensorImpl& o) {
                       auto g = detail::grad_buffer(logits);
                       const auto& z = logits.values();
                       for (std::size_t c = 0; c < z.size(); ++c) {
                         const double p = std::exp(z[c] - lse);
                         g[c] += o.grad[0] * (p - (c == label ? 1.0 : 0.0));
                       }
                     });
}

TrainingError::TrainingError(std::uint64_t step, const std::string& what)
    : Error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

Trainer::Trainer(TrainConfig config)
    : config_(std::move(config)),
      data_(synth_dataset(config_.seed, config_.dataset_size, config_.model.input_resolution,
                          config_.model.num_classes, config_.data)),
      model_(build_backbone(config_.model, config_.seed)),
      params_(model_.parameters()),
      shuffle_seed_(config_.seed ^ 0x9e3779b97f4a7c15ULL) {
  if (config_.batch_size == 0) throw ConfigError("batch size must be positive");
  state_.options = config_.optim;
  order_.resize(data_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  cursor_ = order_.size();
}

double Trainer::step() {
  const std::uint64_t index = state_.step + 1;
  std::vector<std::size_t> batch;
  while (batch.size() < config_.batch_size) {
    if (cursor_ == order_.size()) {
      std::mt19937_64 rng(shuffle_seed_++);
      std::shuffle(order_.begin(), order_.end(), rng);
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }

  for (Tensor& p : params_) p.zero_grad();
  double loss_value = 0.0;
  try {
    Tensor total;
    for (std::size_t i : batch) {
      const Tensor l = cross_entropy(forward_classify(model_, data_[i].image), data_[i].label);
      total = total.defined() ? add(total, l) : l;
    }
    const Tensor loss = scale(total, 1.0 / static_cast<double>(batch.size()));
    loss_value = loss.item();
    backward(loss);
  } catch (const NumericError& e) {
    throw TrainingError(index, e.what());
  }
  if (!std::isfinite(loss_value)) throw TrainingError(index, "non-finite loss");

  std::vector<std::vector<double>> grads;
  grads.reserve(params_.size());
  for (const Tensor& p : params_) {
    grads.emplace_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                    : std::vector<double>{});
  }
  adamw_step(params_, grads, state_, cosine_lr(config_.optim.lr, state_.step, config_.steps));
  return loss_value;
}

MetricRow Trainer::evaluate() const {
  NoGradGuard no_grad;
  double loss = 0.0;
  std::size_t correct = 0;
  try {
    for (const SynthSample& s : data_) {
      const Tensor logits = forward_classify(model_, s.image);
      loss += cross_entropy(logits, s.label).item();
      const auto& z = logits.values();
      const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
      correct += best == s.label ? 1 : 0;
    }
  } catch (const NumericError& e) {
    throw TrainingError(state_.step, e.what());
  }
  const double n = static_cast<double>(data_.size());
  return {state_.step, loss / n, static_cast<double>(correct) / n};
}

TrainMetrics train_loop(const TrainConfig& config) {
  Trainer trainer(config);
  TrainMetrics metrics;
  metrics.initial = trainer.evaluate();
  for (std::uint64_t s = 1; s <= config.steps; ++s) {
    trainer.step();
    if ((config.eval_interval != 0 && s % config.eval_interval == 0) || s == config.steps) {
      metrics.rows.push_back(trainer.evaluate());
    }
  }
  return metrics;
}

void write_metrics_csv(const TrainMetrics& metrics, std::ostream& out) {
  out << "step,loss,train_accuracy\n";
  out << std::setprecision(17);
  for (const MetricRow& r : metrics.rows) out << r.step << ',' << r.loss << ',' << r.train_accuracy << '\n';
}

}  // namespace masa
