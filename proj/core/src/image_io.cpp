#include "iconpeft/image_io.hpp"

#include <cstdio>
#include <fstream>

#include "iconpeft/errors.hpp"

namespace iconpeft {

namespace {

// Skips whitespace and '#' comments between PNM header tokens.
int64_t read_header_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) {
    throw DataError(path + ": malformed PNM header");
  }
  int64_t value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

PnmImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path);
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw DataError(path + " is not a binary PGM (P5) or PPM (P6) file");
  }
  PnmImage img;
  img.channels = magic[1] == '5' ? 1 : 3;
  img.width = read_header_int(in, path);
  img.height = read_header_int(in, path);
  const int64_t maxval = read_header_int(in, path);
  if (maxval <= 0 || maxval > 255) {
    throw DataError(path + ": only 8-bit PNM images are supported");
  }
  img.pixels.resize(static_cast<size_t>(img.width * img.height * img.channels));
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw DataError(path + ": truncated pixel data");
  return img;
}

void write_pgm(const std::string& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& pixels) {
  if (static_cast<int64_t>(pixels.size()) != width * height) {
    throw DataError("write_pgm: pixel buffer does not match " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw DataError("short write to " + path);
}

void write_csv_matrix(const std::string& path, int64_t rows, int64_t cols,
                      const std::vector<double>& values) {
  if (static_cast<int64_t>(values.size()) != rows * cols) {
    throw DataError("write_csv_matrix: value count does not match dimensions");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  char buf[64];
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", values[static_cast<size_t>(r * cols + c)]);
      out << buf;
      if (c + 1 < cols) out << ",";
    }
    out << "\n";
  }
}

}  // namespace iconpeft
