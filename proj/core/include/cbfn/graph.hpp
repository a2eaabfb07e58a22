#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cbfn/errors.hpp"
#include "cbfn/tensor.hpp"

namespace cbfn {

// Reverse-mode tape. Forward ops append one step each, in execution order,
// so the list is topologically sorted by construction. backward() replays
// the steps once, in reverse.
//
// Gradients of op outputs (intermediates) are reset at the start of every
// backward() call; leaf tensors (parameters, inputs) accumulate until
// explicitly zeroed, so repeated backward() calls sum their contributions.
template <typename T>
class Graph {
 public:
  void record(std::vector<Tensor<T>> outputs, std::function<void()> backward_fn) {
    steps_.push_back(Step{std::move(outputs), std::move(backward_fn)});
  }

  void backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw UsageError("Graph::backward: loss must be a defined scalar tensor");
    }
    if (!loss.requires_grad()) {
      throw UsageError("Graph::backward: loss was not recorded on this graph");
    }
    for (Step& step : steps_) {
      for (Tensor<T>& out : step.outputs) out.zero_grad();
    }
    // Find the loss among recorded outputs so stray tensors are rejected.
    bool found = false;
    for (const Step& step : steps_) {
      for (const Tensor<T>& out : step.outputs) {
        if (out.same_storage(loss)) found = true;
      }
    }
    if (!found) {
      throw UsageError("Graph::backward: loss is not an output of this graph");
    }
    const_cast<Tensor<T>&>(loss).grad()[0] = T(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
      it->fn();
    }
  }

  void clear() { steps_.clear(); }
  std::size_t size() const { return steps_.size(); }

 private:
  struct Step {
    std::vector<Tensor<T>> outputs;
    std::function<void()> fn;
  };

  std::vector<Step> steps_;
};

}  // namespace cbfn
