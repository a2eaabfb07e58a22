#include "cbfn/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "cbfn/image_io.hpp"

namespace cbfn {

namespace fs = std::filesystem;

DatasetLoad load_dataset(const std::string& dir) {
  const fs::path input_dir = fs::path(dir) / "input";
  const fs::path target_dir = fs::path(dir) / "target";
  if (!fs::is_directory(input_dir) || !fs::is_directory(target_dir)) {
    throw IoError("dataset directory " + dir + " must contain input/ and target/");
  }

  auto list_pngs = [](const fs::path& p) {
    std::set<std::string> names;
    for (const auto& entry : fs::directory_iterator(p)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        names.insert(entry.path().filename().string());
      }
    }
    return names;
  };

  const std::set<std::string> inputs = list_pngs(input_dir);
  const std::set<std::string> targets = list_pngs(target_dir);

  DatasetLoad out;
  for (const std::string& name : inputs) {
    if (!targets.count(name)) {
      out.rejected.push_back({name, "no matching target"});
    }
  }
  for (const std::string& name : targets) {
    if (!inputs.count(name)) {
      out.rejected.push_back({name, "no matching input"});
    }
  }

  for (const std::string& name : inputs) {
    if (!targets.count(name)) continue;
    ImageU8 in_u8 = read_png((input_dir / name).string());
    ImageU8 tg_u8 = read_png((target_dir / name).string());
    if (in_u8.w != tg_u8.w || in_u8.h != tg_u8.h) {
      out.rejected.push_back({name, "dimension mismatch (" + std::to_string(in_u8.w) +
                                        "x" + std::to_string(in_u8.h) + " vs " +
                                        std::to_string(tg_u8.w) + "x" +
                                        std::to_string(tg_u8.h) + ")"});
      continue;
    }
    if (in_u8.c != 3 || tg_u8.c != 3) {
      out.rejected.push_back({name, "not an RGB image"});
      continue;
    }
    SamplePair pair;
    pair.input = to_float(in_u8);
    pair.target = to_float(tg_u8);
    pair.id = name;
    out.pairs.push_back(std::move(pair));
  }
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const SamplePair& a, const SamplePair& b) { return a.id < b.id; });
  std::sort(out.rejected.begin(), out.rejected.end(),
            [](const DatasetLoad::Rejection& a, const DatasetLoad::Rejection& b) {
              return a.name < b.name;
            });
  return out;
}

}  // namespace cbfn
