#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cbfn {

// key=value run record written alongside every CLI output. The entry set
// for a given command is fixed (defaults materialized), so manifests for
// identical runs are byte-identical, and `argv` preserves a re-runnable
// command line.
struct RunManifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& key, const std::string& value) {
    entries.emplace_back(key, value);
  }
  void set(const std::string& key, long long value) {
    entries.emplace_back(key, std::to_string(value));
  }

  std::string text() const;
  void write(const std::string& path) const;
};

// Reads the `argv` line back from a manifest file (for re-runs).
std::string manifest_argv(const std::string& path);

}  // namespace cbfn
