#include "votepose/weights_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace votepose {
namespace detail {

namespace {

constexpr char kMagic[4] = {'A', 'P', 'W', '1'};

template <typename U>
void write_le(std::ostream& out, U value) {
  uint8_t buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i)
    buf[i] = uint8_t((uint64_t(value) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
bool read_le(std::istream& in, U& value) {
  uint8_t buf[sizeof(U)];
  in.read(reinterpret_cast<char*>(buf), sizeof(U));
  if (std::size_t(in.gcount()) != sizeof(U)) return false;
  uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= uint64_t(buf[i]) << (8 * i);
  value = U(v);
  return true;
}

void write_f32(std::ostream& out, const std::vector<float>& data) {
  for (float f : data) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_le(out, bits);
  }
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  if (text == "none") return out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

void write_weights_file(const std::filesystem::path& path, const std::string& kv,
                        const std::vector<TensorRecord>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  write_le(out, uint32_t(kv.size()));
  out.write(kv.data(), std::streamsize(kv.size()));
  for (const TensorRecord& rec : tensors) {
    write_le(out, uint32_t(rec.name.size()));
    out.write(rec.name.data(), std::streamsize(rec.name.size()));
    write_le(out, uint32_t(rec.dims.size()));
    uint64_t count = 1;
    for (uint64_t d : rec.dims) {
      write_le(out, d);
      count *= d;
    }
    if (count != rec.data.size())
      throw InternalError("tensor data does not match dims: " + rec.name);
    write_f32(out, rec.data);
  }
  if (!out) throw DataError("short write: " + path.string());
}

std::pair<std::string, std::vector<TensorRecord>> read_weights_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("not a weights file (bad magic): " + path.string());
  uint32_t kv_len = 0;
  if (!read_le(in, kv_len))
    throw DataError("truncated weights file header: " + path.string());
  std::string kv(kv_len, '\0');
  in.read(kv.data(), std::streamsize(kv_len));
  if (std::size_t(in.gcount()) != kv_len)
    throw DataError("truncated weights file header: " + path.string());

  std::vector<TensorRecord> tensors;
  while (true) {
    int peek = in.peek();
    if (peek == EOF) break;
    TensorRecord rec;
    uint32_t name_len = 0;
    if (!read_le(in, name_len))
      throw DataError("truncated or trailing bytes in weights file: " +
                      path.string());
    rec.name.resize(name_len);
    in.read(rec.name.data(), std::streamsize(name_len));
    if (std::size_t(in.gcount()) != name_len)
      throw DataError("truncated or trailing bytes in weights file: " +
                      path.string());
    uint32_t rank = 0;
    if (!read_le(in, rank) || rank > 8)
      throw DataError("truncated or trailing bytes in weights file: " +
                      path.string());
    uint64_t count = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      uint64_t dim = 0;
      if (!read_le(in, dim) || dim == 0 || count > (1ull << 32) / std::max<uint64_t>(dim, 1))
        throw DataError("truncated or trailing bytes in weights file: " +
                        path.string());
      rec.dims.push_back(dim);
      count *= dim;
    }
    rec.data.resize(count);
    for (uint64_t i = 0; i < count; ++i) {
      uint32_t bits = 0;
      if (!read_le(in, bits))
        throw DataError("truncated or trailing bytes in weights file: " +
                        path.string());
      float f;
      std::memcpy(&f, &bits, 4);
      rec.data[i] = f;
    }
    tensors.push_back(std::move(rec));
  }
  return {std::move(kv), std::move(tensors)};
}

std::string encode_config(const NetworkConfig& config) {
  std::ostringstream out;
  out << "format edgeconv\n";
  out << "scalar float32\n";
  out << "n_classes " << config.n_classes << "\n";
  auto list = [&](const char* key, const std::vector<int>& values) {
    out << key << " ";
    if (values.empty()) out << "none";
    for (std::size_t i = 0; i < values.size(); ++i)
      out << (i ? "," : "") << values[i];
    out << "\n";
  };
  list("conv_widths", config.conv_widths);
  list("head_hidden", config.head_hidden);
  return out.str();
}

NetworkConfig decode_config(const std::string& kv,
                            const std::filesystem::path& origin) {
  NetworkConfig config;
  bool have_classes = false, have_convs = false, have_hidden = false;
  std::istringstream in(kv);
  std::string line;
  try {
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string key, value;
      if (!(ls >> key >> value)) continue;
      if (key == "n_classes") {
        config.n_classes = std::stoi(value);
        have_classes = true;
      } else if (key == "conv_widths") {
        config.conv_widths = parse_int_list(value);
        have_convs = true;
      } else if (key == "head_hidden") {
        config.head_hidden = parse_int_list(value);
        have_hidden = true;
      }
    }
  } catch (const std::exception&) {
    throw DataError("malformed architecture block in weights file: " +
                    origin.string());
  }
  if (!have_classes || !have_convs || !have_hidden)
    throw DataError("weights file missing architecture keys: " + origin.string());
  return config;
}

}  // namespace detail
}  // namespace votepose
