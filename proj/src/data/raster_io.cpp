#include "flowsr/data/raster_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "flowsr/core/errors.hpp"

namespace flowsr::data {

unsigned char quantize8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  // nearbyint under the default rounding mode rounds half to even
  return static_cast<unsigned char>(std::nearbyint(c * 255.0f));
}

std::filesystem::path write_raster(const ImageF& img, const std::filesystem::path& path) {
  const int h = img.height(), w = img.width(), c = img.channels();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("write_raster: cannot open " + path.string());
  os << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) row[static_cast<std::size_t>(x) * c + ch] = quantize8(img.at(ch, y, x));
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw InputError("write_raster: short write to " + path.string());
  return path;
}

namespace {

int read_pnm_int(std::istream& is) {
  // skips whitespace and '#' comments per the PNM grammar
  int ch = is.get();
  while (ch == '#' || std::isspace(ch)) {
    if (ch == '#') {
      while (ch != '\n' && ch != EOF) ch = is.get();
    }
    ch = is.get();
  }
  int value = 0;
  bool any = false;
  while (std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    any = true;
    ch = is.get();
  }
  if (!any) throw InputError("read_raster: malformed PNM header");
  return value;
}

}  // namespace

ImageF read_raster(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("read_raster: cannot open " + path.string());
  char p = 0, kind = 0;
  is.get(p);
  is.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6')) {
    throw InputError("read_raster: unsupported magic in " + path.string());
  }
  const int c = (kind == '5') ? 1 : 3;
  const int w = read_pnm_int(is);
  const int h = read_pnm_int(is);
  const int maxval = read_pnm_int(is);
  if (maxval != 255) throw InputError("read_raster: expected maxval 255 in " + path.string());

  ImageF img(h, w, c);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * c);
  for (int y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!is) throw InputError("read_raster: truncated data in " + path.string());
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        img.at(ch, y, x) = static_cast<float>(row[static_cast<std::size_t>(x) * c + ch]) / 255.0f;
      }
    }
  }
  return img;
}

}  // namespace flowsr::data
