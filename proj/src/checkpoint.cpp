// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "atgat/format.hpp"
#include "atgat/models.hpp"

namespace atgat {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kMagic = "atgat-checkpoint";

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("checkpoint: bad value for " + key + ": '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("checkpoint: bad value for " + key + ": '" + s + "'");
  return v;
}

void write_le(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double read_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const ModelConfig& c = ck.config;
  check_params(ck.params, c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "variant " << c.spec.name() << '\n';
  out << "input_dim " << c.input_dim << '\n';
  out << "hidden_dim " << c.hidden_dim << '\n';
  out << "layers " << c.layers << '\n';
  out << "heads " << c.heads << '\n';
  out << "head_dim " << c.head_dim << '\n';
  out << "fusion_hidden " << c.fusion_hidden << '\n';
  out << "leaky_slope " << format_double(c.leaky_slope) << '\n';
  out << "attention_dropout " << format_double(c.attention_dropout) << '\n';
  out << "d_t " << c.temporal.d_t << '\n';
  out << "d_pos " << c.temporal.d_pos << '\n';
  out << "temporal_dropout " << format_double(c.temporal.dropout) << '\n';
  out << "share_temporal_embedding " << (c.share_temporal_embedding ? 1 : 0) << '\n';
  if (c.forced_fusion) {
    const auto& f = *c.forced_fusion;
    out << "forced_fusion " << format_double(f[0]) << ',' << format_double(f[1]) << ','
        << format_double(f[2]) << '\n';
  }
  out << "seed " << ck.seed << '\n';
  std::size_t count = 0;
  ck.params.visit([&](const std::string&, const Matrix&) { ++count; });
  out << "blocks " << count << '\n';
  ck.params.visit([&](const std::string& name, const Matrix& m) {
    out << "block " << name << ' ' << m.rows << ' ' << m.cols << '\n';
    for (double v : m.data) write_le(out, v);
    out << '\n';
  });
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != std::string(kMagic) + " " + std::to_string(kFormatVersion))
    throw std::runtime_error("checkpoint: " + path.string() + " is not a version " +
                             std::to_string(kFormatVersion) + " checkpoint");

  std::map<std::string, std::string> header;
  std::size_t blocks = 0;
  while (true) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated header");
    const auto space = line.find(' ');
    if (space == std::string::npos) throw std::runtime_error("checkpoint: malformed header line '" + line + "'");
    const std::string key = line.substr(0, space), value = line.substr(space + 1);
    if (key == "blocks") {
      blocks = parse_uint(value, key);
      break;
    }
    header[key] = value;
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) throw std::runtime_error("checkpoint: missing header key " + key);
    return it->second;
  };

  Checkpoint ck;
  ModelConfig& c = ck.config;
  c.spec = ModelSpec::parse(get("variant"));
  c.input_dim = parse_uint(get("input_dim"), "input_dim");
  c.hidden_dim = parse_uint(get("hidden_dim"), "hidden_dim");
  c.layers = parse_uint(get("layers"), "layers");
  c.heads = parse_uint(get("heads"), "heads");
  c.head_dim = parse_uint(get("head_dim"), "head_dim");
  c.fusion_hidden = parse_uint(get("fusion_hidden"), "fusion_hidden");
  c.leaky_slope = parse_double(get("leaky_slope"), "leaky_slope");
  c.attention_dropout = parse_double(get("attention_dropout"), "attention_dropout");
  c.temporal.d_t = parse_uint(get("d_t"), "d_t");
  c.temporal.d_pos = parse_uint(get("d_pos"), "d_pos");
  c.temporal.dropout = parse_double(get("temporal_dropout"), "temporal_dropout");
  c.share_temporal_embedding = parse_uint(get("share_temporal_embedding"), "share_temporal_embedding") != 0;
  if (auto it = header.find("forced_fusion"); it != header.end()) {
    std::array<double, 3> f{};
    std::stringstream ss(it->second);
    std::string part;
    for (int i = 0; i < 3; ++i) {
      if (!std::getline(ss, part, ',')) throw std::runtime_error("checkpoint: forced_fusion needs 3 values");
      f[i] = parse_double(part, "forced_fusion");
    }
    c.forced_fusion = f;
  }
  ck.seed = parse_uint(get("seed"), "seed");

  ck.params = make_model_weights(c);
  std::size_t expected = 0;
  ck.params.visit([&](const std::string&, const Matrix&) { ++expected; });
  if (expected != blocks)
    throw std::runtime_error("checkpoint: " + std::to_string(blocks) + " blocks, configuration needs " +
                             std::to_string(expected));
  std::vector<unsigned char> buffer;
  ck.params.visit([&](const std::string& name, Matrix& m) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing block " + name);
    std::istringstream ls(line);
    std::string tag, got;
    std::size_t rows = 0, cols = 0;
    ls >> tag >> got >> rows >> cols;
    if (tag != "block" || got != name || rows != m.rows || cols != m.cols)
      throw std::runtime_error("checkpoint: expected block " + name + " " + m.shape_string() +
                               ", found '" + line + "'");
    buffer.resize(8 * m.data.size());
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    if (in.gcount() != static_cast<std::streamsize>(buffer.size()))
      throw std::runtime_error("checkpoint: truncated block " + name);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = read_le(buffer.data() + 8 * i);
    if (in.get() != '\n') throw std::runtime_error("checkpoint: missing terminator after block " + name);
  });
  return ck;
}

}  // namespace atgat
