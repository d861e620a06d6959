#include "segattr/netpbm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace segattr {

namespace {

struct Header {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

// Skips whitespace and '#' comments between header tokens.
void skip_separators(std::istream& in) {
  while (in) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (ch != EOF && std::isspace(ch)) {
      in.get();
    } else {
      return;
    }
  }
}

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  skip_separators(in);
  int value = -1;
  if (!(in >> value) || value < 0) throw NetpbmError("malformed header in " + path.string());
  return value;
}

Header read_header(std::istream& in, const std::filesystem::path& path, const char* expected) {
  Header h;
  char magic[2] = {0, 0};
  in.read(magic, 2);
  h.magic.assign(magic, 2);
  if (!in || h.magic != expected)
    throw NetpbmError(path.string() + ": expected " + expected + " netpbm file, found '" + h.magic + "'");
  h.width = read_header_int(in, path);
  h.height = read_header_int(in, path);
  h.maxval = read_header_int(in, path);
  if (h.width < 1 || h.height < 1) throw NetpbmError(path.string() + ": empty image");
  if (h.maxval < 1 || h.maxval > 65535) throw NetpbmError(path.string() + ": maxval out of range");
  const int sep = in.get();
  if (!std::isspace(sep)) throw NetpbmError(path.string() + ": missing separator before raster");
  return h;
}

std::vector<int> read_samples(std::istream& in, const Header& h, std::size_t count, const std::filesystem::path& path) {
  const std::size_t bytes_per = h.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(count * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw NetpbmError(path.string() + ": truncated raster");
  std::vector<int> samples(count);
  for (std::size_t i = 0; i < count; ++i) {
    samples[i] = bytes_per == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    if (samples[i] > h.maxval) throw NetpbmError(path.string() + ": sample exceeds maxval");
  }
  return samples;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NetpbmError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NetpbmError("cannot write " + path.string());
  return out;
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const Header h = read_header(in, path, "P6");
  const auto pixels = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
  const std::vector<int> samples = read_samples(in, h, 3 * pixels, path);
  Image img(3, h.height, h.width);
  for (std::size_t p = 0; p < pixels; ++p)
    for (int c = 0; c < 3; ++c)
      img.data(c, static_cast<Eigen::Index>(p)) = static_cast<double>(samples[3 * p + static_cast<std::size_t>(c)]) / h.maxval;
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  check_image(image);
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.pixels()) * 3);
  for (Eigen::Index p = 0; p < image.pixels(); ++p)
    for (int c = 0; c < 3; ++c) raw[static_cast<std::size_t>(p) * 3 + static_cast<std::size_t>(c)] = to_byte(image.data(c, p));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

LabelMask read_pgm_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  const Header h = read_header(in, path, "P5");
  const std::vector<int> samples =
      read_samples(in, h, static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height), path);
  LabelMask labels(h.height, h.width);
  for (Eigen::Index i = 0; i < labels.size(); ++i) labels(i) = samples[static_cast<std::size_t>(i)];
  return labels;
}

void write_pgm_labels(const std::filesystem::path& path, const LabelMask& labels) {
  if (labels.size() > 0 && (labels.minCoeff() < 0 || labels.maxCoeff() > 255))
    throw NetpbmError("labels must fit in 8 bits for " + path.string());
  auto out = open_out(path);
  out << "P5\n" << labels.cols() << ' ' << labels.rows() << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(labels.size()));
  for (Eigen::Index i = 0; i < labels.size(); ++i) raw[static_cast<std::size_t>(i)] = static_cast<unsigned char>(labels(i));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& heatmap) {
  auto out = open_out(path);
  out << "P5\n" << heatmap.width() << ' ' << heatmap.height() << "\n255\n";
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(heatmap.values().size()));
  for (int r = 0; r < heatmap.height(); ++r)
    for (int c = 0; c < heatmap.width(); ++c) raw.push_back(to_byte(heatmap(r, c)));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace segattr
