#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbfn/tensor.hpp"

namespace cbfn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  struct Slot {
    std::string name;
    std::vector<T> m, v;
  };
  std::vector<Slot> slots;  // aligned with the parameter list
  std::int64_t t = 0;

  static AdamState zeros_like(const std::vector<Parameter<T>>& params) {
    AdamState s;
    s.slots.reserve(params.size());
    for (const auto& p : params) {
      Slot slot;
      slot.name = p.name;
      slot.m.assign(static_cast<std::size_t>(p.tensor.numel()), T(0));
      slot.v.assign(slot.m.size(), T(0));
      s.slots.push_back(std::move(slot));
    }
    return s;
  }
};

// One bias-corrected Adam update from the parameters' current gradients.
// Any non-finite gradient aborts the step before any state is touched,
// raising a NumericError that names the offending parameter.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, AdamState<T>& state,
               const AdamConfig& config);

}  // namespace cbfn
