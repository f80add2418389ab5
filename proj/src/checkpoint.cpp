#include "commx/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "commx/error.hpp"
#include "commx/hash.hpp"

namespace commx {

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'M', 'X', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) &
                              0xff));
  }
}

template <typename T>
T get_le(std::istream& in) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) {
      fail(ErrorKind::Format, "checkpoint truncated");
    }
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

void put_f64(std::ostream& out, double d) {
  put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d));
}

double get_f64(std::istream& in) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in));
}

}  // namespace

CheckpointBundle CheckpointBundle::capture(std::string kind,
                                           const ad::ParameterStore& store) {
  CheckpointBundle b;
  b.kind = std::move(kind);
  for (std::size_t i = 0; i < store.size(); ++i) {
    b.parameters.push_back({store[i].name, store[i].value});
  }
  return b;
}

void CheckpointBundle::restore(ad::ParameterStore& store) const {
  for (const auto& nt : parameters) {
    if (!store.contains(nt.name)) {
      fail(ErrorKind::Format, "checkpoint parameter not in model: " + nt.name);
    }
    auto& p = store.get(nt.name);
    if (p.value.shape != nt.value.shape) {
      fail(ErrorKind::Dimension, "checkpoint parameter " + nt.name +
                                     " has shape " +
                                     shape_string(nt.value.shape) +
                                     ", model expects " +
                                     shape_string(p.value.shape));
    }
    p.value = nt.value;
  }
  if (parameters.size() != store.size()) {
    fail(ErrorKind::Format, "checkpoint holds " +
                                std::to_string(parameters.size()) +
                                " parameters, model has " +
                                std::to_string(store.size()));
  }
}

void write_parameters(std::ostream& out,
                      const std::vector<NamedTensor>& params) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape) put_le<std::uint64_t>(out, d);
    for (double v : p.value.data) put_f64(out, v);
  }
}

std::vector<NamedTensor> read_parameters(std::istream& in) {
  const auto count = get_le<std::uint32_t>(in);
  std::vector<NamedTensor> params;
  params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    const auto len = get_le<std::uint32_t>(in);
    nt.name.resize(len);
    in.read(nt.name.data(), len);
    const auto rank = get_le<std::uint32_t>(in);
    if (rank > 2) fail(ErrorKind::Format, "checkpoint tensor rank > 2");
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint64_t>(in);
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) v = get_f64(in);
    if (!in) fail(ErrorKind::Format, "checkpoint truncated in " + nt.name);
    nt.value = Tensor(std::move(shape), std::move(data));
    params.push_back(std::move(nt));
  }
  return params;
}

void save_bundle(const std::filesystem::path& path,
                 const CheckpointBundle& bundle) {
  nlohmann::json manifest;
  manifest["kind"] = bundle.kind;
  manifest["config"] = bundle.config;
  manifest["vocab_fingerprint"] = bundle.vocab_fingerprint;
  manifest["dev_metric"] = bundle.dev_metric;
  auto& list = manifest["parameters"] = nlohmann::json::array();
  for (const auto& p : bundle.parameters) {
    list.push_back({{"name", p.name}, {"shape", p.value.shape}});
  }
  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_parameters(out, bundle.parameters);
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

CheckpointBundle load_bundle(const std::filesystem::path& path,
                             const std::optional<std::string>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    fail(ErrorKind::Format, path.string() + " is not a checkpoint bundle");
  }
  const auto len = get_le<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) fail(ErrorKind::Format, "checkpoint manifest truncated");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("checkpoint manifest: ") + e.what());
  }
  CheckpointBundle b;
  b.kind = manifest.at("kind").get<std::string>();
  b.config = manifest.at("config");
  b.vocab_fingerprint = manifest.at("vocab_fingerprint").get<std::string>();
  b.dev_metric = manifest.at("dev_metric").get<double>();
  if (expected && *expected != b.vocab_fingerprint) {
    fail(ErrorKind::Fingerprint, "checkpoint " + path.string() +
                                     " was built for vocabulary " +
                                     b.vocab_fingerprint + ", not " + *expected);
  }
  b.parameters = read_parameters(in);
  return b;
}

std::string parameter_hash(const ad::ParameterStore& store) {
  Fnv1a h;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    h.update(p.name);
    for (auto d : p.value.shape) h.update(&d, sizeof d);
    h.update(p.value.data.data(), p.value.data.size() * sizeof(double));
  }
  return h.hex();
}

}  // namespace commx
