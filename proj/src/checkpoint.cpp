#include "wattnet/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "wattnet/errors.hpp"
#include "wattnet/io.hpp"

namespace wattnet::checkpoint {

namespace {

constexpr char kMagic[8] = {'W', 'A', 'T', 'T', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

const NamedTensor& Contents::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw ValidationError("checkpoint has no tensor '" + name + "'");
}

std::string encode(const Contents& c) {
  nlohmann::ordered_json header;
  header["format"] = "wattnet-checkpoint";
  header["version"] = 1;
  header["meta"] = c.meta;
  auto& list = header["tensors"] = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& t : c.tensors) {
    if (ad::numel(t.shape) != t.values.size())
      throw ShapeError("checkpoint tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
                       " values for shape " + ad::shape_str(t.shape));
    list.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += 8 * t.values.size();
  }
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& t : c.tensors)
    for (double v : t.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Contents decode(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw ParseError("not a wattnet checkpoint");
  const std::uint64_t hlen = get_u64(p + 8);
  if (hlen > bytes.size() - 16) throw ParseError("checkpoint header length exceeds file size");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  const std::size_t base = 16 + hlen;
  const std::size_t payload = bytes.size() - base;
  Contents c;
  try {
    if (header.at("version").get<int>() != 1) throw ParseError("unsupported checkpoint version");
    c.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<ad::Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (count != ad::numel(t.shape)) throw ParseError("checkpoint tensor '" + t.name + "' count/shape mismatch");
      if (offset % 8 != 0 || offset > payload || count > (payload - offset) / 8)
        throw ParseError("checkpoint tensor '" + t.name + "' lies outside the payload");
      t.values.resize(count);
      for (std::size_t i = 0; i < count; ++i)
        t.values[i] = std::bit_cast<double>(get_u64(p + base + offset + 8 * i));
      c.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  return c;
}

void save(const std::filesystem::path& path, const Contents& c) { io::write_file(path, encode(c)); }

Contents load(const std::filesystem::path& path) { return decode(io::read_file(path)); }

}  // namespace wattnet::checkpoint
