#include "intentr/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

#include "intentr/error.hpp"

namespace intentr {
namespace {

constexpr std::array<char, 8> kMagic{'I', 'N', 'T', 'R', 'C', 'K', 'P', 'T'};

template <typename UInt>
void put_le(std::ostream& out, UInt value) {
  std::array<char, sizeof(UInt)> bytes;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt get_le(std::istream& in) {
  std::array<unsigned char, sizeof(UInt)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw IoError("checkpoint truncated");
  }
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
  return value;
}

void put_i32(std::ostream& out, std::int32_t v) { put_le(out, static_cast<std::uint32_t>(v)); }
std::int32_t get_i32(std::istream& in) { return static_cast<std::int32_t>(get_le<std::uint32_t>(in)); }

void put_floats(std::ostream& out, const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(data[i])));
  }
}

void get_floats(std::istream& in, double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in)));
  }
}

void for_each_array(ModelParams& params,
                    const std::function<void(double*, std::size_t)>& fn) {
  for (auto& table : params.embeddings) {
    fn(table.weights.data(), static_cast<std::size_t>(table.weights.size()));
  }
  for (auto& cell : params.cells) {
    cell.for_each_array([&](std::string_view, double* data, std::size_t n) { fn(data, n); });
  }
  fn(params.head_w.data(), static_cast<std::size_t>(params.head_w.size()));
  fn(params.head_b.data(), static_cast<std::size_t>(params.head_b.size()));
}

}  // namespace

std::vector<std::uint64_t> vocab_digests(const FeatureSpace& space) {
  std::vector<std::uint64_t> out;
  for (Field f : space.config().active_fields()) out.push_back(space.vocab(f).digest());
  return out;
}

void write_checkpoint(std::ostream& out, const Model& model,
                      const std::vector<std::uint64_t>& digests) {
  const ModelConfig& c = model.config;
  if (digests.size() != model.params.embeddings.size()) {
    throw ShapeError("one vocabulary digest per embedding table expected");
  }
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(c.cell));
  put_i32(out, c.num_layers);
  put_i32(out, c.hidden_size);
  put_le<std::uint8_t>(out, c.skip_connections);
  put_le<std::uint8_t>(out, c.share_hidden_state);
  put_le<std::uint8_t>(out, c.tie_layer_weights);
  put_le<std::uint8_t>(out, c.embeddings_trainable);
  put_le<std::uint8_t>(out, c.fields.use_price_variance);
  for (int w : c.fields.widths) put_i32(out, w);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.embeddings.size()));
  for (std::size_t i = 0; i < model.params.embeddings.size(); ++i) {
    const auto& table = model.params.embeddings[i];
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(table.field));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(table.weights.rows()));
    put_i32(out, table.width());
    put_le<std::uint64_t>(out, digests[i]);
  }
  ModelParams& params = const_cast<ModelParams&>(model.params);
  for_each_array(params, [&](double* data, std::size_t n) { put_floats(out, data, n); });
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const std::string& path, const Model& model, const FeatureSpace& space) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    write_checkpoint(out, model, vocab_digests(space));
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot rename " + tmp);
}

Model read_checkpoint(std::istream& in, const FeatureSpace* space, CheckpointHeader* header) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("not an intentr checkpoint");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Model model;
  ModelConfig& c = model.config;
  const auto cell = get_le<std::uint8_t>(in);
  if (cell > 2) throw IoError("checkpoint: bad cell type");
  c.cell = static_cast<CellType>(cell);
  c.num_layers = get_i32(in);
  c.hidden_size = get_i32(in);
  c.skip_connections = get_le<std::uint8_t>(in) != 0;
  c.share_hidden_state = get_le<std::uint8_t>(in) != 0;
  c.tie_layer_weights = get_le<std::uint8_t>(in) != 0;
  c.embeddings_trainable = get_le<std::uint8_t>(in) != 0;
  c.fields.use_price_variance = get_le<std::uint8_t>(in) != 0;
  for (int& w : c.fields.widths) w = get_i32(in);
  c.validate();

  CheckpointHeader local;
  local.config = c;
  const auto tables = get_le<std::uint32_t>(in);
  const auto fields = c.fields.active_fields();
  if (tables != fields.size()) throw IoError("checkpoint: table count does not match config");
  for (std::uint32_t i = 0; i < tables; ++i) {
    const auto field = get_le<std::uint8_t>(in);
    const auto rows = get_le<std::uint64_t>(in);
    const auto width = get_i32(in);
    const auto digest = get_le<std::uint64_t>(in);
    if (field != static_cast<std::uint8_t>(fields[i]) || width != c.fields.width(fields[i])) {
      throw IoError("checkpoint: table layout does not match config");
    }
    local.rows.push_back(static_cast<std::size_t>(rows));
    local.vocab_digests.push_back(digest);
  }
  if (space != nullptr) {
    const auto expected = vocab_digests(*space);
    for (std::size_t i = 0; i < expected.size() && i < local.vocab_digests.size(); ++i) {
      if (expected[i] != local.vocab_digests[i]) {
        throw IoError("checkpoint vocabulary mismatch for field " +
                      std::string(field_name(fields[i])));
      }
    }
    if (expected.size() != local.vocab_digests.size()) {
      throw IoError("checkpoint vocabulary count mismatch");
    }
  }
  model.params = zero_params(c, local.rows);
  for_each_array(model.params, [&](double* data, std::size_t n) { get_floats(in, data, n); });
  if (header) *header = std::move(local);
  return model;
}

Model load_checkpoint(const std::string& path, const FeatureSpace* space) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return read_checkpoint(in, space);
}

}  // namespace intentr
