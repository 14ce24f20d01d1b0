#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "masa/blocks/model.hpp"
#include "masa/core/error.hpp"
#include "masa/train/data.hpp"
#include "masa/train/optim.hpp"

namespace masa {

// -log softmax(logits)[label], logits: [C].
Tensor cross_entropy(const Tensor& logits, std::size_t label);

class TrainingError : public Error {
 public:
  TrainingError(std::uint64_t step, const std::string& what);
  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

struct TrainConfig {
  ModelConfig model = preset("tiny");
  std::uint64_t seed = 7;
  std::uint64_t steps = 300;
  std::size_t batch_size = 8;
  std::size_t dataset_size = 64;
  std::uint64_t eval_interval = 25;
  AdamWOptions optim{};
  SynthOptions data{};
};

struct MetricRow {
  std::uint64_t step = 0;
  double loss = 0.0;            // mean cross-entropy over the training set
  double train_accuracy = 0.0;  // fraction of the training set classified correctly
};

struct TrainMetrics {
  MetricRow initial;
  std::vector<MetricRow> rows;  // one per evaluation interval, steps >= 1

  const MetricRow& last() const { return rows.empty() ? initial : rows.back(); }
};

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  // One optimizer step on the next batch. TrainingError carries the 1-based
  // step index when the forward pass or the loss goes non-finite.
  double step();
  MetricRow evaluate() const;

  std::uint64_t steps_done() const noexcept { return state_.step; }
  Model& model() noexcept { return model_; }
  const std::vector<SynthSample>& dataset() const noexcept { return data_; }

 private:
  TrainConfig config_;
  std::vector<SynthSample> data_;
  Model model_;
  std::vector<Tensor> params_;
  OptimState state_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t shuffle_seed_;
};

TrainMetrics train_loop(const TrainConfig& config);

// CSV with columns step,loss,train_accuracy; rows only, no initial record.
void write_metrics_csv(const TrainMetrics& metrics, std::ostream& out);

}  // namespace masa
