#include "cbfn/train.hpp"

#include <cmath>
#include <numeric>

#include "cbfn/ops.hpp"

namespace cbfn {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("TrainConfig: negative epoch count");
  if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0)) {
    throw ConfigError("TrainConfig: scale range must satisfy 0 < min <= max <= 1");
  }
  if (flip_prob < 0.0 || flip_prob > 1.0) {
    throw ConfigError("TrainConfig: flip probability outside [0,1]");
  }
  if (crop < 1) throw ConfigError("TrainConfig: non-positive crop");
  if (batch_size < 1) throw ConfigError("TrainConfig: non-positive batch size");
  if (lr < 0.0) throw ConfigError("TrainConfig: negative learning rate");
}

namespace {

// RNG stream tags; combined with the epoch so every (seed, epoch, sample)
// triple has its own generator, independent of iteration order.
constexpr std::uint64_t kShuffleStream = 0x51ull << 56;
constexpr std::uint64_t kAugmentStream = 0xA6ull << 56;

Tensor<float> stack_images(const std::vector<Image>& images) {
  const Image& first = images.front();
  const Shape s{static_cast<std::int64_t>(images.size()), first.c, first.h, first.w};
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(s.numel()));
  for (const Image& img : images) {
    data.insert(data.end(), img.data.begin(), img.data.end());
  }
  return Tensor<float>::from_data(s, std::move(data));
}

}  // namespace

TrainResult train(Network& net, const std::vector<SamplePair>& dataset,
                  const TrainConfig& config, AdamState<float>& adam,
                  const TrainCallbacks& callbacks) {
  config.validate();
  if (dataset.empty()) throw UsageError("train: empty dataset");

  const int depth = net.config().depth();
  if (config.crop % (1 << depth) != 0) {
    throw ConfigError("TrainConfig: crop " + std::to_string(config.crop) +
                      " not divisible by 2^" + std::to_string(depth));
  }

  const bool needs_global = net.config().variant == Variant::local_global;
  const int gis = net.config().global_input_size;

  AugmentConfig aug;
  aug.crop = config.crop;
  aug.scale_min = config.scale_min;
  aug.scale_max = config.scale_max;
  aug.flip_prob = config.flip_prob;

  const AdamConfig adam_cfg{config.lr, config.beta1, config.beta2, config.adam_epsilon};

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (augmentable(dataset[i], config.crop)) {
      usable.push_back(i);
    } else if (callbacks.on_warning) {
      callbacks.on_warning("skipping " + dataset[i].id +
                           ": short side smaller than crop " +
                           std::to_string(config.crop));
    }
  }
  if (usable.empty()) throw UsageError("train: no sample is as large as the crop");

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    Rng shuffle_rng = Rng::keyed(config.seed, kShuffleStream | static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::int64_t batches = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), pos + static_cast<std::size_t>(config.batch_size));
      std::vector<Image> inputs, targets, globals;
      for (std::size_t k = pos; k < end; ++k) {
        const std::size_t idx = order[k];
        Rng rng = Rng::keyed(config.seed,
                             kAugmentStream | static_cast<std::uint64_t>(epoch),
                             static_cast<std::uint64_t>(idx));
        PatchPair patch = augment(dataset[idx], rng, aug);
        if (needs_global) globals.push_back(resize_bilinear(patch.input, gis, gis));
        inputs.push_back(std::move(patch.input));
        targets.push_back(std::move(patch.target));
      }

      Tensor<float> x = stack_images(inputs);
      Tensor<float> y = stack_images(targets);
      Tensor<float> gx;
      if (needs_global) gx = stack_images(globals);

      Graph<float> graph;
      Tensor<float> pred =
          net.forward(&graph, x, needs_global ? &gx : nullptr, Mode::train);
      Tensor<float> loss = l1_loss(&graph, pred, y);
      const double loss_v = static_cast<double>(loss.data()[0]);
      if (!std::isfinite(loss_v)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      net.zero_grad();
      graph.backward(loss);
      adam_step(net.parameters(), adam, adam_cfg);

      loss_sum += loss_v;
      ++batches;
      ++result.steps;
      if (callbacks.on_step) callbacks.on_step(epoch + 1, result.steps, loss_v);
    }

    const double mean = loss_sum / static_cast<double>(batches);
    result.epoch_mean_loss.push_back(mean);
    if (callbacks.on_epoch) callbacks.on_epoch(epoch + 1, mean);
  }
  return result;
}

}  // namespace cbfn
