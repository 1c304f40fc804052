#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "flowsr/core/errors.hpp"

namespace flowsr {

// Dense H x W x C raster of intensities, stored as channel planes
// (plane-major: data[(c*H + y)*W + x]). Shape is fixed at construction.
// Values are unclamped floats; clamping to [0,1] happens only at explicit
// encode/export boundaries, never inside training math.
template <typename T>
class Image {
 public:
  Image() = default;

  Image(int height, int width, int channels, T fill = T(0))
      : h_(height), w_(width), c_(channels) {
    if (height <= 0 || width <= 0 || (channels != 1 && channels != 3)) {
      std::ostringstream os;
      os << "Image: bad shape " << height << "x" << width << "x" << channels;
      throw InputError(os.str());
    }
    data_.assign(static_cast<std::size_t>(h_) * w_ * c_, fill);
  }

  static Image zeros_like(const Image& other) {
    return Image(other.h_, other.w_, other.c_);
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T* plane(int c) { return data_.data() + static_cast<std::size_t>(c) * plane_size(); }
  const T* plane(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * plane_size();
  }

  T& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
  }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
  }

  bool same_shape(const Image& other) const {
    return h_ == other.h_ && w_ == other.w_ && c_ == other.c_;
  }

  template <typename U>
  Image<U> cast() const {
    Image<U> out(h_, w_, c_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<float>;
using ImageD = Image<double>;

template <typename T>
void require_same_shape(const Image<T>& a, const Image<T>& b, const char* ctx) {
  if (!a.same_shape(b)) {
    std::ostringstream os;
    os << ctx << ": shape mismatch " << a.height() << "x" << a.width() << "x" << a.channels()
       << " vs " << b.height() << "x" << b.width() << "x" << b.channels();
    throw InputError(os.str());
  }
}

template <typename T>
bool all_finite(const Image<T>& img) {
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (!std::isfinite(static_cast<double>(img.data()[i]))) return false;
  }
  return true;
}

template <typename T>
double mean_value(const Image<T>& img) {
  double s = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) s += static_cast<double>(img.data()[i]);
  return img.size() ? s / static_cast<double>(img.size()) : 0.0;
}

template <typename T>
double intensity_std(const Image<T>& img) {
  const double m = mean_value(img);
  double s = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double d = static_cast<double>(img.data()[i]) - m;
    s += d * d;
  }
  return img.size() ? std::sqrt(s / static_cast<double>(img.size())) : 0.0;
}

template <typename T>
double mean_abs_diff(const Image<T>& a, const Image<T>& b) {
  require_same_shape(a, b, "mean_abs_diff");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]));
  }
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

// Export-boundary clamp. The only place intensities are forced into [0,1].
template <typename T>
Image<T> clamped01(const Image<T>& img) {
  Image<T> out = img;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::clamp(out.data()[i], T(0), T(1));
  }
  return out;
}

}  // namespace flowsr
