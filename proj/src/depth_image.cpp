#include "votepose/depth_image.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "votepose/common.hpp"

namespace votepose {

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines. The
// delimiter after the token stays in the stream so the caller can consume
// the single header/payload separator byte itself.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.peek()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  while ((c = in.peek()) != EOF && !std::isspace(c)) tok.push_back(char(in.get()));
  return tok;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<uint16_t>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "P5\n" << width << " " << height << "\n65535\n";
  std::vector<uint8_t> buf(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    buf[2 * i] = uint8_t(values[i] >> 8);  // MSB first
    buf[2 * i + 1] = uint8_t(values[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!out) throw DataError("short write: " + path.string());
}

std::vector<uint16_t> read_pgm(const std::filesystem::path& path, int* width,
                               int* height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string magic = next_token(in);
  if (magic != "P5") throw DataError("not a binary PGM (magic != P5): " + path.string());
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw DataError("malformed PGM header: " + path.string());
  }
  if (w <= 0 || h <= 0) throw DataError("bad PGM dimensions: " + path.string());
  if (maxval != 65535)
    throw DataError("expected 16-bit PGM (maxval 65535): " + path.string());
  // Exactly one whitespace byte separates the header from the samples.
  in.get();
  std::vector<uint8_t> buf(std::size_t(w) * h * 2);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (std::size_t(in.gcount()) != buf.size())
    throw DataError("truncated PGM payload: " + path.string());
  std::vector<uint16_t> values(std::size_t(w) * h);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = uint16_t((uint16_t(buf[2 * i]) << 8) | buf[2 * i + 1]);
  *width = w;
  *height = h;
  return values;
}

}  // namespace

void save_pgm16(const std::filesystem::path& path, const DepthImage& img) {
  write_pgm(path, img.width, img.height, img.values);
}

DepthImage load_pgm16(const std::filesystem::path& path, double depth_scale) {
  DepthImage img;
  img.values = read_pgm(path, &img.width, &img.height);
  img.depth_scale = depth_scale;
  return img;
}

void save_pgm16_raw(const std::filesystem::path& path, int width, int height,
                    const std::vector<uint16_t>& values) {
  write_pgm(path, width, height, values);
}

std::vector<uint16_t> load_pgm16_raw(const std::filesystem::path& path, int* width,
                                     int* height) {
  return read_pgm(path, width, height);
}

void save_camera_config(const std::filesystem::path& path, const CameraConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.precision(17);
  out << "fx " << cfg.cam.fx << "\n";
  out << "fy " << cfg.cam.fy << "\n";
  out << "cx " << cfg.cam.cx << "\n";
  out << "cy " << cfg.cam.cy << "\n";
  out << "depth_scale " << cfg.depth_scale << "\n";
  out << "width " << cfg.width << "\n";
  out << "height " << cfg.height << "\n";
}

CameraConfig load_camera_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::map<std::string, double> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& c : line)
      if (c == '=' || c == ':') c = ' ';
    std::istringstream ls(line);
    std::string key;
    double value;
    if (ls >> key >> value) kv[key] = value;
  }
  for (const char* key : {"fx", "fy", "cx", "cy", "depth_scale", "width", "height"})
    if (!kv.count(key))
      throw DataError("camera config missing key '" + std::string(key) +
                      "': " + path.string());
  CameraConfig cfg;
  cfg.cam.fx = kv["fx"];
  cfg.cam.fy = kv["fy"];
  cfg.cam.cx = kv["cx"];
  cfg.cam.cy = kv["cy"];
  cfg.depth_scale = kv["depth_scale"];
  cfg.width = int(kv["width"]);
  cfg.height = int(kv["height"]);
  if (cfg.cam.fx <= 0 || cfg.cam.fy <= 0)
    throw DataError("camera config requires fx > 0 and fy > 0: " + path.string());
  return cfg;
}

}  // namespace votepose
