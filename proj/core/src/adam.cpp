#include "cbfn/adam.hpp"

#include <cmath>

#include "cbfn/errors.hpp"

namespace cbfn {

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state,
               const AdamConfig& config) {
  if (state.slots.size() != params.size()) {
    throw UsageError("adam_step: state has " + std::to_string(state.slots.size()) +
                     " slots for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.slots[i].name != params[i].name) {
      throw UsageError("adam_step: state slot '" + state.slots[i].name +
                       "' does not match parameter '" + params[i].name + "'");
    }
    if (static_cast<std::int64_t>(state.slots[i].m.size()) != params[i].tensor.numel()) {
      throw UsageError("adam_step: state size mismatch for " + params[i].name);
    }
  }

  // Validate every gradient before mutating anything.
  for (const auto& p : params) {
    for (const T g : p.tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("adam_step: non-finite gradient in parameter " + p.name);
      }
    }
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].tensor.values();
    const auto& grad = params[i].tensor.grad();
    auto& m = state.slots[i].m;
    auto& v = state.slots[i].v;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = static_cast<double>(grad[j]);
      const double mj = config.beta1 * static_cast<double>(m[j]) + (1.0 - config.beta1) * g;
      const double vj = config.beta2 * static_cast<double>(v[j]) + (1.0 - config.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mh = mj / bc1;
      const double vh = vj / bc2;
      value[j] = static_cast<T>(static_cast<double>(value[j]) -
                                config.lr * mh / (std::sqrt(vh) + config.epsilon));
    }
  }
}

template void adam_step<float>(std::vector<Parameter<float>>&, AdamState<float>&,
                               const AdamConfig&);
template void adam_step<double>(std::vector<Parameter<double>>&, AdamState<double>&,
                                const AdamConfig&);

}  // namespace cbfn
