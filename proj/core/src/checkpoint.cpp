#include "cbfn/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace cbfn {

namespace {

constexpr char kMagic[4] = {'C', 'B', 'F', 'N'};
constexpr std::uint32_t kVersion = 1;

enum DType : std::uint8_t { kF32 = 0, kF64 = 1, kU64 = 2 };

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_bytes(std::string& buf, const void* data, std::size_t n) {
  buf.append(static_cast<const char*>(data), n);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw IoError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string format_float(float v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

std::string join_widths(const std::vector<int>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(widths[i]);
  }
  return out;
}

std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

std::string serialize_config(const NetworkConfig& c) {
  std::string out;
  out += std::string("variant=") + variant_name(c.variant) + "\n";
  out += std::string("fixed_layers=") + (c.fixed_layers ? "1" : "0") + "\n";
  out += "encoder_widths=" + join_widths(c.encoder_widths) + "\n";
  out += "bottleneck_width=" + std::to_string(c.bottleneck_width) + "\n";
  out += "decoder_widths=" + join_widths(c.decoder_widths) + "\n";
  out += "global_width=" + std::to_string(c.global_width) + "\n";
  out += "global_input_size=" + std::to_string(c.global_input_size) + "\n";
  out += "smoothness_order=" + std::to_string(c.smoothness_order) + "\n";
  out += "bn_epsilon=" + format_float(c.bn_epsilon) + "\n";
  out += "bn_momentum=" + format_float(c.bn_momentum) + "\n";
  return out;
}

NetworkConfig parse_config(const std::string& text) {
  NetworkConfig c;
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint config line without '='");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto want = [&kv](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError("checkpoint config missing key " + key);
    return it->second;
  };
  c.variant = variant_from_name(want("variant"));
  c.fixed_layers = want("fixed_layers") == "1";
  c.encoder_widths = parse_widths(want("encoder_widths"));
  c.bottleneck_width = std::stoi(want("bottleneck_width"));
  c.decoder_widths = parse_widths(want("decoder_widths"));
  c.global_width = std::stoi(want("global_width"));
  c.global_input_size = std::stoi(want("global_input_size"));
  c.smoothness_order = std::stoi(want("smoothness_order"));
  c.bn_epsilon = std::strtof(want("bn_epsilon").c_str(), nullptr);
  c.bn_momentum = std::strtof(want("bn_momentum").c_str(), nullptr);
  return c;
}

struct ArrayRecord {
  std::string name;
  std::uint8_t dtype = kF32;
  std::vector<std::uint32_t> dims;
  std::string raw;
};

void append_record(std::string& payload, const ArrayRecord& rec) {
  put_u32(payload, static_cast<std::uint32_t>(rec.name.size()));
  put_bytes(payload, rec.name.data(), rec.name.size());
  payload.push_back(static_cast<char>(rec.dtype));
  payload.push_back(static_cast<char>(rec.dims.size()));
  for (std::uint32_t d : rec.dims) put_u32(payload, d);
  put_bytes(payload, rec.raw.data(), rec.raw.size());
}

ArrayRecord f32_record(const std::string& name, const Tensor<float>& t) {
  ArrayRecord rec;
  rec.name = name;
  rec.dtype = kF32;
  const Shape s = t.shape();
  rec.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
              static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  rec.raw.assign(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::size_t>(t.numel()) * sizeof(float));
  return rec;
}

ArrayRecord f32_vec_record(const std::string& name, const std::vector<float>& v) {
  ArrayRecord rec;
  rec.name = name;
  rec.dtype = kF32;
  rec.dims = {static_cast<std::uint32_t>(v.size())};
  rec.raw.assign(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  return rec;
}

std::size_t dtype_size(std::uint8_t dtype) {
  switch (dtype) {
    case kF32: return 4;
    case kF64: return 8;
    case kU64: return 8;
    default: throw IoError("checkpoint has unknown dtype tag");
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net,
                     const AdamState<float>& adam) {
  std::string payload;
  put_u32(payload, kVersion);

  const std::string config_text = serialize_config(net.config());
  put_u32(payload, static_cast<std::uint32_t>(config_text.size()));
  put_bytes(payload, config_text.data(), config_text.size());

  std::vector<ArrayRecord> records;
  for (const auto& p : net.parameters()) {
    records.push_back(f32_record("param:" + p.name, p.tensor));
  }
  for (const auto& s : net.state_buffers()) {
    records.push_back(f32_record("state:" + s.name, s.tensor));
  }
  for (const auto& slot : adam.slots) {
    records.push_back(f32_vec_record("adam.m:" + slot.name, slot.m));
    records.push_back(f32_vec_record("adam.v:" + slot.name, slot.v));
  }
  {
    ArrayRecord rec;
    rec.name = "adam:t";
    rec.dtype = kU64;
    rec.dims = {1};
    const std::uint64_t t = static_cast<std::uint64_t>(adam.t);
    rec.raw.assign(reinterpret_cast<const char*>(&t), sizeof(t));
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(),
            [](const ArrayRecord& a, const ArrayRecord& b) { return a.name < b.name; });

  put_u32(payload, static_cast<std::uint32_t>(records.size()));
  for (const ArrayRecord& rec : records) append_record(payload, rec);

  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(payload.data()),
            static_cast<uInt>(payload.size())));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::string crc_bytes;
  put_u32(crc_bytes, crc);
  out.write(crc_bytes.data(), 4);
  if (!out) throw IoError("failed writing " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (all.size() < 12) throw IoError("checkpoint truncated");
  if (std::memcmp(all.data(), kMagic, 4) != 0) {
    throw IoError(path + " is not a CBFN checkpoint (bad magic)");
  }
  const std::string payload = all.substr(4, all.size() - 8);
  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) {
    stored_crc |= static_cast<std::uint32_t>(
                      static_cast<unsigned char>(all[all.size() - 4 + i]))
                  << (8 * i);
  }
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(payload.data()),
            static_cast<uInt>(payload.size())));
  if (crc != stored_crc) throw IoError(path + ": checksum mismatch");

  Reader r{payload};
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t config_len = r.u32();
  const NetworkConfig config = parse_config(r.bytes(config_len));

  std::map<std::string, ArrayRecord> records;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    ArrayRecord rec;
    const std::uint32_t name_len = r.u32();
    rec.name = r.bytes(name_len);
    rec.dtype = r.u8();
    const std::uint8_t rank = r.u8();
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      rec.dims.push_back(r.u32());
      numel *= rec.dims.back();
    }
    rec.raw = r.bytes(numel * dtype_size(rec.dtype));
    records[rec.name] = std::move(rec);
  }

  LoadedCheckpoint out;
  out.net = Network::build(config, 0);

  const auto fill_f32 = [&records](const std::string& name, float* dst,
                                   std::int64_t numel) {
    auto it = records.find(name);
    if (it == records.end()) throw IoError("checkpoint missing array " + name);
    if (it->second.dtype != kF32 ||
        it->second.raw.size() != static_cast<std::size_t>(numel) * sizeof(float)) {
      throw IoError("checkpoint array " + name + " has unexpected size/dtype");
    }
    std::memcpy(dst, it->second.raw.data(), it->second.raw.size());
  };

  for (auto& p : out.net.parameters()) {
    fill_f32("param:" + p.name, p.tensor.data(), p.tensor.numel());
  }
  for (auto& s : out.net.state_buffers()) {
    fill_f32("state:" + s.name, s.tensor.data(), s.tensor.numel());
  }
  out.adam = AdamState<float>::zeros_like(out.net.parameters());
  for (auto& slot : out.adam.slots) {
    fill_f32("adam.m:" + slot.name, slot.m.data(),
             static_cast<std::int64_t>(slot.m.size()));
    fill_f32("adam.v:" + slot.name, slot.v.data(),
             static_cast<std::int64_t>(slot.v.size()));
  }
  {
    auto it = records.find("adam:t");
    if (it == records.end()) throw IoError("checkpoint missing array adam:t");
    if (it->second.dtype != kU64 || it->second.raw.size() != 8) {
      throw IoError("checkpoint array adam:t has unexpected size/dtype");
    }
    std::uint64_t t = 0;
    std::memcpy(&t, it->second.raw.data(), 8);
    out.adam.t = static_cast<std::int64_t>(t);
  }
  return out;
}

}  // namespace cbfn
