#pragma once

#include <string>

#include "cbfn/image.hpp"

namespace cbfn {

// 8-bit PNG decode/encode. Reading converts palette/gray+alpha inputs to
// plain 8-bit RGB (or keeps single-channel gray); 16-bit files are
// reduced. Writing emits one- or three-channel 8-bit files. Both throw
// IoError on malformed files or filesystem failures.
ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

}  // namespace cbfn
