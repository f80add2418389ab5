#pragma once

// CheckpointBundle file layout (all integers little-endian):
//
//   magic      8 bytes  "CMXCKPT1"
//   u64        manifest length in bytes
//   manifest   UTF-8 JSON: {"kind", "config", "vocab_fingerprint",
//              "dev_metric", "parameters": [{"name", "shape"}...]}
//   u32        parameter count
//   per parameter:
//     u32 name length, name bytes, u32 rank, u64 dims[rank],
//     f64 payload[product(dims)]

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "commx/autodiff.hpp"

namespace commx {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct CheckpointBundle {
  std::string kind;  // "classifier", "layperson", "joint"
  nlohmann::json config = nlohmann::json::object();
  std::string vocab_fingerprint;
  double dev_metric = 0.0;
  std::vector<NamedTensor> parameters;

  static CheckpointBundle capture(std::string kind,
                                  const ad::ParameterStore& store);
  // Copies values into a store with the same names and shapes.
  void restore(ad::ParameterStore& store) const;
};

void write_parameters(std::ostream& out, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> read_parameters(std::istream& in);

void save_bundle(const std::filesystem::path& path,
                 const CheckpointBundle& bundle);
// Rejects a bundle whose fingerprint differs from `expected_fingerprint`.
CheckpointBundle load_bundle(
    const std::filesystem::path& path,
    const std::optional<std::string>& expected_fingerprint = std::nullopt);

// Hex digest over parameter names, shapes and raw bytes.
std::string parameter_hash(const ad::ParameterStore& store);

}  // namespace commx
