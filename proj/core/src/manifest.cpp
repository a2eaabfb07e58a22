#include "cbfn/manifest.hpp"

#include <fstream>

#include "cbfn/errors.hpp"

namespace cbfn {

std::string RunManifest::text() const {
  std::string out;
  for (const auto& [key, value] : entries) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

void RunManifest::write(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  out << text();
  if (!out) throw IoError("failed writing manifest " + path);
}

std::string manifest_argv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("argv=", 0) == 0) return line.substr(5);
  }
  throw IoError("manifest " + path + " has no argv entry");
}

}  // namespace cbfn
