#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iconpeft {

struct PnmImage {
  int64_t width = 0;
  int64_t height = 0;
  int64_t channels = 0;           // 1 (PGM) or 3 (PPM)
  std::vector<uint8_t> pixels;    // row-major, interleaved channels
};

// Binary PGM (P5) / PPM (P6), 8-bit only.
PnmImage read_pnm(const std::string& path);

void write_pgm(const std::string& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& pixels);

// Plain-text CSV, one row per line, fixed formatting.
void write_csv_matrix(const std::string& path, int64_t rows, int64_t cols,
                      const std::vector<double>& values);

}  // namespace iconpeft
