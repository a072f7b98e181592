#include "trec/image_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "trec/error.hpp"

namespace trec {

namespace {

int read_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments between header tokens.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) fail(ErrorCode::kIoError, "truncated PNM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

}  // namespace

Raster8 read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  char magic[2];
  in.read(magic, 2);
  int channels;
  if (magic[0] == 'P' && magic[1] == '6') {
    channels = 3;
  } else if (magic[0] == 'P' && magic[1] == '5') {
    channels = 1;
  } else {
    fail(ErrorCode::kIoError, path.string() + ": not a binary PNM file");
  }
  const int width = read_pnm_token(in);
  const int height = read_pnm_token(in);
  const int maxval = read_pnm_token(in);
  if (width <= 0 || height <= 0 || maxval != 255)
    fail(ErrorCode::kIoError, path.string() + ": unsupported PNM dimensions");
  Raster8 img(width, height, channels);
  in.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size()));
  if (!in) fail(ErrorCode::kIoError, path.string() + ": truncated PNM data");
  return img;
}

void write_pnm(const std::filesystem::path& path, const Raster8& img) {
  if (img.channels() != 1 && img.channels() != 3)
    fail(ErrorCode::kInvalidArgument, "PNM requires 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << (img.channels() == 3 ? "P6" : "P5") << "\n"
      << img.width() << " " << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()),
            static_cast<std::streamsize>(img.size()));
  if (!out) fail(ErrorCode::kIoError, "short write to " + path.string());
}

RasterF read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::string magic;
  int width = 0, height = 0;
  double scale = 0;
  in >> magic >> width >> height >> scale;
  in.get();  // single whitespace before data
  int channels;
  if (magic == "Pf") {
    channels = 1;
  } else if (magic == "PF") {
    channels = 3;
  } else {
    fail(ErrorCode::kIoError, path.string() + ": not a PFM file");
  }
  if (width <= 0 || height <= 0 || scale >= 0)
    fail(ErrorCode::kIoError, path.string() + ": unsupported PFM header");
  Raster f(width, height, channels, 0.0f);
  const size_t row_bytes = static_cast<size_t>(width) * channels * sizeof(float);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(f.row(y)), static_cast<std::streamsize>(row_bytes));
  }
  if (!in) fail(ErrorCode::kIoError, path.string() + ": truncated PFM data");
  return f;
}

void write_pfm(const std::filesystem::path& path, const RasterF& img) {
  if (img.channels() != 1 && img.channels() != 3)
    fail(ErrorCode::kInvalidArgument, "PFM requires 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << (img.channels() == 3 ? "PF" : "Pf") << "\n"
      << img.width() << " " << img.height() << "\n-1.0\n";
  const size_t row_bytes = static_cast<size_t>(img.width()) * img.channels() * sizeof(float);
  for (int y = img.height() - 1; y >= 0; --y) {
    out.write(reinterpret_cast<const char*>(img.row(y)),
              static_cast<std::streamsize>(row_bytes));
  }
  if (!out) fail(ErrorCode::kIoError, "short write to " + path.string());
}

}  // namespace trec
