#pragma once

#include <functional>

#include "cbfn/adam.hpp"
#include "cbfn/augment.hpp"
#include "cbfn/dataset.hpp"
#include "cbfn/network.hpp"

namespace cbfn {

struct TrainConfig {
  int epochs = 100;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int crop = 256;
  double scale_min = 0.6;
  double scale_max = 1.0;
  double flip_prob = 0.5;
  int batch_size = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainCallbacks {
  std::function<void(int epoch, std::int64_t step, double loss)> on_step;
  std::function<void(int epoch, double mean_loss)> on_epoch;
  std::function<void(const std::string& message)> on_warning;
};

struct TrainResult {
  std::vector<double> epoch_mean_loss;
  std::int64_t steps = 0;
};

// l1 training with Adam. Per epoch: seeded shuffle, per-sample keyed
// augmentation, train-mode forward (with the resized global input when
// the variant requires it), backward, one optimizer step per batch.
// Samples smaller than the crop are skipped with a warning. A non-finite
// loss or gradient raises NumericError; the network is left at its last
// completed step.
TrainResult train(Network& net, const std::vector<SamplePair>& dataset,
                  const TrainConfig& config, AdamState<float>& adam,
                  const TrainCallbacks& callbacks = {});

}  // namespace cbfn
