#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "wattnet/autodiff.hpp"

// Binary tensor checkpoints:
//   "WATTCKPT" | u64 LE header length | JSON header | f64 LE payload
// The header lists every tensor's name, shape and byte offset into the
// payload, plus an arbitrary "meta" object.
namespace wattnet::checkpoint {

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

struct Contents {
  nlohmann::ordered_json meta;
  std::vector<NamedTensor> tensors;

  // Throws ValidationError if absent.
  const NamedTensor& get(const std::string& name) const;
};

std::string encode(const Contents& c);
Contents decode(std::string_view bytes);

void save(const std::filesystem::path& path, const Contents& c);
Contents load(const std::filesystem::path& path);

}  // namespace wattnet::checkpoint
