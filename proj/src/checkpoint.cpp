#include "tconv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "tconv/errors.hpp"

namespace tconv {
namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& out, const std::string& s) {
  put_le(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof bytes)) throw SchemaError("checkpoint: unexpected end of file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

std::string get_string(std::istream& in, std::size_t max_len = 1u << 24) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > max_len) throw SchemaError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw SchemaError("checkpoint: unexpected end of file");
  return s;
}

}  // namespace

Checkpoint snapshot(const Model& model, const KeyValues& metadata) {
  Checkpoint c{model.config(), metadata, model.clusters(), {}};
  const auto names = model.parameter_names();
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) c.tensors.push_back({names[i], *params[i]});
  return c;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_le(out, kCheckpointVersion);
  put_string(out, ckpt.config.to_kv().str());
  put_string(out, ckpt.metadata.str());
  put_le(out, static_cast<std::uint64_t>(ckpt.clusters.centers.size()));
  put_f64(out, ckpt.clusters.bandwidth_m);
  put_le(out, static_cast<std::uint64_t>(ckpt.clusters.source_count));
  for (const GeoPoint& c : ckpt.clusters.centers) {
    put_f64(out, c.lon);
    put_f64(out, c.lat);
  }
  put_le(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_string(out, name);
    put_le(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_le(out, static_cast<std::uint64_t>(e));
    for (double v : t.values()) put_f64(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw SchemaError("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw SchemaError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint c;
  try {
    c.config = ModelConfig::from_kv(KeyValues::parse(get_string(in)));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("checkpoint: bad model config: ") + e.what());
  }
  c.metadata = KeyValues::parse(get_string(in));
  const auto k = get_le<std::uint64_t>(in);
  if (k == 0 || k > (1u << 24)) throw SchemaError("checkpoint: implausible center count");
  c.clusters.bandwidth_m = get_f64(in);
  c.clusters.source_count = static_cast<std::size_t>(get_le<std::uint64_t>(in));
  for (std::uint64_t i = 0; i < k; ++i) {
    GeoPoint p;
    p.lon = get_f64(in);
    p.lat = get_f64(in);
    c.clusters.centers.push_back(p);
  }
  const auto count = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = get_string(in, 4096);
    const auto rank = get_le<std::uint32_t>(in);
    if (rank > 8) throw SchemaError("checkpoint: implausible tensor rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(get_le<std::uint64_t>(in)));
    if (element_count(shape) > (std::size_t{1} << 32)) throw SchemaError("checkpoint: implausible tensor size");
    std::vector<double> values(element_count(shape));
    for (double& v : values) v = get_f64(in);
    nt.tensor = Tensor(std::move(shape), std::move(values));
    c.tensors.push_back(std::move(nt));
  }
  return c;
}

Model model_from(const Checkpoint& ckpt) {
  Model m(ckpt.config, ckpt.clusters, 0);
  const auto names = m.parameter_names();
  if (names.size() != ckpt.tensors.size())
    throw SchemaError("checkpoint: tensor count does not match the model configuration");
  std::vector<Tensor> values;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] != ckpt.tensors[i].name)
      throw SchemaError("checkpoint: expected tensor '" + names[i] + "', found '" + ckpt.tensors[i].name + "'");
    values.push_back(ckpt.tensors[i].tensor);
  }
  try {
    m.load_parameters(values);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
  return m;
}

void save_model(const std::string& path, const Model& model, const KeyValues& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, snapshot(model, metadata));
}

Model load_model(const std::string& path, KeyValues* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  Checkpoint c = read_checkpoint(in);
  if (metadata) *metadata = c.metadata;
  return model_from(c);
}

}  // namespace tconv
