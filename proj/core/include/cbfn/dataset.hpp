#pragma once

#include <string>
#include <vector>

#include "cbfn/image.hpp"

namespace cbfn {

// One training example: input and target share dimensions, values in [0,1].
struct SamplePair {
  Image input;
  Image target;
  std::string id;
};

struct DatasetLoad {
  struct Rejection {
    std::string name;
    std::string reason;
  };
  std::vector<SamplePair> pairs;      // sorted by id
  std::vector<Rejection> rejected;    // unmatched or mismatched files
};

// Reads <dir>/input/*.png and <dir>/target/*.png, pairing by filename.
// Files present on only one side, or pairs whose dimensions disagree, are
// reported in `rejected` rather than raising.
DatasetLoad load_dataset(const std::string& dir);

}  // namespace cbfn
