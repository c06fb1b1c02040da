#include "ipc/image_io.hpp"

#include <fstream>

namespace ipc {

namespace {

long at_chw(const Shape& s, int c, int i, int j) {
  return (long(c) * s[s.size() - 2] + i) * s[s.size() - 1] + j;
}

// single whitespace-delimited token, honoring '#' comments per the pixmap spec
std::string next_token(const std::vector<uint8_t>& b, size_t& pos) {
  auto is_space = [](uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (pos < b.size()) {
    if (is_space(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  size_t start = pos;
  while (pos < b.size() && !is_space(b[pos]) && b[pos] != '#') ++pos;
  if (start == pos) throw std::runtime_error("ppm: truncated header");
  return std::string(b.begin() + start, b.begin() + pos);
}

int parse_dim(const std::string& tok, const char* what) {
  size_t used = 0;
  int v;
  try {
    v = std::stoi(tok, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("ppm: bad ") + what + " '" + tok + "'");
  }
  if (used != tok.size() || v <= 0)
    throw std::runtime_error(std::string("ppm: bad ") + what + " '" + tok + "'");
  return v;
}

}  // namespace

Tensor<float> decode_ppm(const std::vector<uint8_t>& bytes) {
  size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw std::runtime_error("ppm: not a P6 pixmap");
  int w = parse_dim(next_token(bytes, pos), "width");
  int h = parse_dim(next_token(bytes, pos), "height");
  int maxval = parse_dim(next_token(bytes, pos), "maxval");
  if (maxval != 255) throw std::runtime_error("ppm: only 8-bit depth supported (maxval 255)");
  // exactly one whitespace byte separates the header from the raster
  if (pos >= bytes.size()) throw std::runtime_error("ppm: truncated header");
  ++pos;
  if (bytes.size() - pos < size_t(3) * w * h) throw std::runtime_error("ppm: truncated raster");
  Tensor<float> img({3, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c)
        img[at_chw(img.shape, c, i, j)] = float(bytes[pos + (size_t(i) * w + j) * 3 + c]) / 255.0f;
  return img;
}

std::vector<uint8_t> encode_ppm(const Tensor<float>& img) {
  const Shape& s = img.shape;
  if (s.size() != 3 || s[0] != 3)
    throw std::runtime_error("ppm: expected [3,H,W] tensor, got " + shape_str(s));
  int h = s[1], w = s[2];
  std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + size_t(3) * h * w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c) {
        float v = img[at_chw(s, c, i, j)];
        int k = (int)std::lround(std::min(1.0f, std::max(0.0f, v)) * 255.0f);
        out.push_back((uint8_t)k);
      }
  return out;
}

Tensor<float> load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open image: " + path);
  auto n = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> b((size_t)n);
  f.read((char*)b.data(), n);
  if (!f) throw std::runtime_error("read failed: " + path);
  return decode_ppm(b);
}

void save_ppm(const std::string& path, const Tensor<float>& img) {
  auto bytes = encode_ppm(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write((const char*)bytes.data(), (long)bytes.size());
  if (!f) throw std::runtime_error("write failed: " + path);
}

Tensor<float> pad_to_multiple(const Tensor<float>& img, int m) {
  const Shape& s = img.shape;
  if (s.size() != 3) throw std::runtime_error("pad: expected [C,H,W], got " + shape_str(s));
  int C = s[0], H = s[1], W = s[2];
  int ph = (H + m - 1) / m * m, pw = (W + m - 1) / m * m;
  if (ph == H && pw == W) return img;
  Tensor<float> out({C, ph, pw});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < ph; ++i)
      for (int j = 0; j < pw; ++j)
        out[at_chw(out.shape, c, i, j)] =
            img[at_chw(s, c, std::min(i, H - 1), std::min(j, W - 1))];
  return out;
}

Tensor<float> crop_to(const Tensor<float>& img, int h, int w) {
  const Shape& s = img.shape;
  if (s.size() != 3 || h > s[1] || w > s[2])
    throw std::runtime_error("crop: " + std::to_string(h) + "x" + std::to_string(w) +
                             " exceeds " + shape_str(s));
  if (h == s[1] && w == s[2]) return img;
  Tensor<float> out({s[0], h, w});
  for (int c = 0; c < s[0]; ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) out[at_chw(out.shape, c, i, j)] = img[at_chw(s, c, i, j)];
  return out;
}

}  // namespace ipc
