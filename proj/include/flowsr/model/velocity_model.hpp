#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flowsr/core/errors.hpp"
#include "flowsr/core/image.hpp"
#include "flowsr/core/rng.hpp"
#include "flowsr/kernels/kernels.hpp"

namespace flowsr::model {

// Conditional velocity predictor: a small residual conv net in pixel space
// with a data-prediction head.
//
//   input  = concat(x_t, lr_up, prompt_embed[prompt_id], time_feats(t))
//   h      = softsign(conv_in(input))
//   h      = h + softsign(conv_b(h))          for each residual block
//   r      = conv_out(h)
//   x_hat  = (1 - t) * x_t + t * lr_up + r    data prediction, analytic skip
//   v      = (x_t - x_hat) / max(t, t_floor)
//         = (t * (x_t - lr_up) - r) / max(t, t_floor)
//
// The skip blends from the noisy state (t = 0) to the upsampled LR input
// (t = 1), so the network only regresses the enhancement residual on top of
// a bicubic anchor; the residual target carries at most a t(1-t) <= 1/4
// share of the noise, which keeps it inside the bounded activations' useful
// range. The closing division builds the transport field's 1/t gain in
// analytically; t_floor clamps that gain near t = 0. With the
// zero-initialized head the fresh model contracts samples toward lr_up while
// retaining an e^-1 share of the initial noise, so an untrained policy stays
// strongly stochastic. The prompt embedding and the time features are
// broadcast spatially as constant channels. Everything is computed
// sequentially with the kernels module, so a fixed-seed single-threaded run
// is bitwise reproducible.

struct ArchConfig {
  int channels = 3;      // image channels (1 or 3)
  int width = 24;        // hidden conv width
  int depth = 3;         // residual blocks
  int prompt_vocab = 4;  // prompt category count
  int prompt_dim = 8;    // learned embedding channels
  int time_dim = 8;      // sinusoidal feature channels (even)
  double t_floor = 0.05; // gain clamp of the data-prediction head

  int in_channels() const { return 2 * channels + prompt_dim + time_dim; }

  bool operator==(const ArchConfig&) const = default;

  std::string signature() const {
    return "c" + std::to_string(channels) + "_w" + std::to_string(width) + "_d" +
           std::to_string(depth) + "_pv" + std::to_string(prompt_vocab) + "_pd" +
           std::to_string(prompt_dim) + "_td" + std::to_string(time_dim) + "_tf" +
           std::to_string(t_floor);
  }
};

template <typename T>
struct ConditionTag {
  Image<T> lr_image;  // LR input upsampled to the model output resolution
  int prompt_id = 0;
};

template <typename T>
struct ConvLayer {
  int in_c = 0, out_c = 0;
  std::vector<T> w;  // [out_c][in_c][3][3]
  std::vector<T> b;  // [out_c]

  void init_shape(int in_channels, int out_channels) {
    in_c = in_channels;
    out_c = out_channels;
    w.assign(static_cast<std::size_t>(out_c) * in_c * 9, T(0));
    b.assign(static_cast<std::size_t>(out_c), T(0));
  }
};

template <typename T>
struct VelocityModel {
  ArchConfig arch;
  ConvLayer<T> conv_in;
  std::vector<ConvLayer<T>> blocks;
  ConvLayer<T> conv_out;
  std::vector<T> prompt_embed;  // [prompt_vocab][prompt_dim]

  static VelocityModel create(const ArchConfig& arch, std::uint64_t seed) {
    VelocityModel m;
    m.arch = arch;
    m.conv_in.init_shape(arch.in_channels(), arch.width);
    m.blocks.resize(static_cast<std::size_t>(arch.depth));
    for (auto& b : m.blocks) b.init_shape(arch.width, arch.width);
    m.conv_out.init_shape(arch.width, arch.channels);
    m.prompt_embed.assign(static_cast<std::size_t>(arch.prompt_vocab) * arch.prompt_dim, T(0));

    Pcg32 rng(derive_seed(seed, 0x6d0de1ull));
    auto he_init = [&rng](ConvLayer<T>& layer) {
      const double std_dev = std::sqrt(2.0 / (static_cast<double>(layer.in_c) * 9.0));
      for (auto& v : layer.w) v = static_cast<T>(std_dev * rng.normal());
    };
    he_init(m.conv_in);
    for (auto& b : m.blocks) he_init(b);
    // conv_out stays zero so a fresh model predicts zero velocity
    for (auto& v : m.prompt_embed) v = static_cast<T>(0.2 * rng.normal());
    return m;
  }
};

// Flat view over the trainable blocks, in a stable order. d_out/d_in describe
// the matrix shape for blocks that can carry a low-rank adapter.
template <typename T>
struct BlockRef {
  std::string name;
  T* data = nullptr;
  std::size_t size = 0;
  int d_out = 0, d_in = 0;
  bool adaptable = false;
};

template <typename T>
std::vector<BlockRef<T>> param_blocks(VelocityModel<T>& m) {
  std::vector<BlockRef<T>> out;
  auto add_conv = [&out](const std::string& name, ConvLayer<T>& l) {
    out.push_back({name + ".w", l.w.data(), l.w.size(), l.out_c, l.in_c * 9, true});
    out.push_back({name + ".b", l.b.data(), l.b.size(), 0, 0, false});
  };
  add_conv("conv_in", m.conv_in);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) add_conv("block" + std::to_string(i), m.blocks[i]);
  add_conv("conv_out", m.conv_out);
  out.push_back({"prompt_embed", m.prompt_embed.data(), m.prompt_embed.size(), m.arch.prompt_vocab,
                 m.arch.prompt_dim, true});
  return out;
}

template <typename T>
std::vector<BlockRef<const T>> param_blocks(const VelocityModel<T>& m) {
  auto blocks = param_blocks(const_cast<VelocityModel<T>&>(m));
  std::vector<BlockRef<const T>> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back({b.name, b.data, b.size, b.d_out, b.d_in, b.adaptable});
  return out;
}

template <typename T>
std::size_t count_params(const VelocityModel<T>& m) {
  std::size_t n = 0;
  for (const auto& b : param_blocks(m)) n += b.size;
  return n;
}

// ---------------------------------------------------------------------------
// Low-rank adapter: additive per-matrix delta (alpha / rank) * B * A with B
// zero-initialized. The requested rank is clamped per layer to
// min(d_out, d_in) - 1; layers whose min dimension is 1 are skipped
// (rank 0 entry, no parameters).
// ---------------------------------------------------------------------------

template <typename T>
struct LowRankAdapter {
  struct Layer {
    std::string block_name;
    int d_out = 0, d_in = 0, rank = 0;
    std::vector<T> a;  // [rank][d_in]
    std::vector<T> b;  // [d_out][rank]
  };

  int nominal_rank = 0;
  T alpha = T(0);
  std::vector<Layer> layers;  // aligned with the adaptable blocks of the model

  bool is_zero() const {
    for (const auto& l : layers) {
      for (const T v : l.b) {
        if (v != T(0)) return false;
      }
    }
    return true;
  }
};

template <typename T>
LowRankAdapter<T> make_adapter(const VelocityModel<T>& m, int rank, T alpha, std::uint64_t seed) {
  if (rank < 1) throw InputError("make_adapter: rank must be >= 1");
  if (!(alpha >= T(0))) throw InputError("make_adapter: alpha must be >= 0");
  LowRankAdapter<T> ad;
  ad.nominal_rank = rank;
  ad.alpha = alpha;
  Pcg32 rng(derive_seed(seed, 0xada47e6ull));
  for (const auto& blk : param_blocks(m)) {
    if (!blk.adaptable) continue;
    typename LowRankAdapter<T>::Layer l;
    l.block_name = blk.name;
    l.d_out = blk.d_out;
    l.d_in = blk.d_in;
    const int max_rank = std::min(blk.d_out, blk.d_in) - 1;
    l.rank = std::min(rank, max_rank);  // 0 when the block cannot take a delta
    if (l.rank > 0) {
      l.a.assign(static_cast<std::size_t>(l.rank) * l.d_in, T(0));
      l.b.assign(static_cast<std::size_t>(l.d_out) * l.rank, T(0));
      const double std_dev = 1.0 / std::sqrt(static_cast<double>(l.d_in));
      for (auto& v : l.a) v = static_cast<T>(std_dev * rng.normal());
      // b stays zero: a fresh adapter is a no-op
    }
    ad.layers.push_back(std::move(l));
  }
  return ad;
}

template <typename T>
std::size_t count_params(const LowRankAdapter<T>& ad) {
  std::size_t n = 0;
  for (const auto& l : ad.layers) n += l.a.size() + l.b.size();
  return n;
}

template <typename T>
double adapter_norm(const LowRankAdapter<T>& ad) {
  double s = 0.0;
  for (const auto& l : ad.layers) {
    s += kernels::sum_sq(l.a.size(), l.a.data());
    s += kernels::sum_sq(l.b.size(), l.b.data());
  }
  return std::sqrt(s);
}

// delta = (alpha / rank) * B * A, written into out[d_out * d_in]
template <typename T>
void adapter_delta(const LowRankAdapter<T>& ad, const typename LowRankAdapter<T>::Layer& l,
                   T* out) {
  const std::size_t n = static_cast<std::size_t>(l.d_out) * l.d_in;
  std::fill(out, out + n, T(0));
  if (l.rank == 0) return;
  const T scale = ad.alpha / static_cast<T>(l.rank);
  for (int o = 0; o < l.d_out; ++o) {
    for (int r = 0; r < l.rank; ++r) {
      const T borr = scale * l.b[static_cast<std::size_t>(o) * l.rank + r];
      if (borr == T(0)) continue;
      kernels::scale_add(static_cast<std::size_t>(l.d_in), borr,
                         l.a.data() + static_cast<std::size_t>(r) * l.d_in,
                         out + static_cast<std::size_t>(o) * l.d_in);
    }
  }
}

template <typename T>
void check_adapter_compatible(const VelocityModel<T>& m, const LowRankAdapter<T>& ad,
                              const char* ctx) {
  std::size_t idx = 0;
  for (const auto& blk : param_blocks(m)) {
    if (!blk.adaptable) continue;
    if (idx >= ad.layers.size()) throw InputError(std::string(ctx) + ": adapter has too few layers");
    const auto& l = ad.layers[idx];
    if (l.d_out != blk.d_out || l.d_in != blk.d_in) {
      throw InputError(std::string(ctx) + ": adapter shape mismatch at " + blk.name);
    }
    ++idx;
  }
  if (idx != ad.layers.size()) throw InputError(std::string(ctx) + ": adapter has extra layers");
}

// W' = W + scale * (alpha/rank) * B * A for every adaptable block.
// scale is the merge-scale knob and defaults to plain additive merging.
template <typename T>
VelocityModel<T> merge_adapter(const VelocityModel<T>& base, const LowRankAdapter<T>& adapter,
                               T scale = T(1)) {
  check_adapter_compatible(base, adapter, "merge_adapter");
  VelocityModel<T> merged = base;
  auto blocks = param_blocks(merged);
  std::size_t idx = 0;
  std::vector<T> delta;
  for (auto& blk : blocks) {
    if (!blk.adaptable) continue;
    const auto& l = adapter.layers[idx++];
    if (l.rank > 0) {
      delta.assign(blk.size, T(0));
      adapter_delta(adapter, l, delta.data());
      kernels::scale_add(blk.size, scale, delta.data(), blk.data);
    }
  }
  return merged;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace detail {

// Multichannel activation buffer (unconstrained channel count).
template <typename T>
struct Planes {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  Planes() = default;
  Planes(int c_, int h_, int w_) : c(c_), h(h_), w(w_) {
    v.assign(static_cast<std::size_t>(c) * h * w, T(0));
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
  T* plane(int i) { return v.data() + static_cast<std::size_t>(i) * plane_size(); }
  const T* plane(int i) const { return v.data() + static_cast<std::size_t>(i) * plane_size(); }
};

template <typename T>
void pad_plane(const T* src, int h, int w, T* dst) {
  // dst is (h+2) x (w+2), zero border
  const int sw = w + 2;
  std::fill(dst, dst + sw, T(0));
  for (int y = 0; y < h; ++y) {
    T* drow = dst + static_cast<std::size_t>(y + 1) * sw;
    drow[0] = T(0);
    std::copy(src + static_cast<std::size_t>(y) * w, src + static_cast<std::size_t>(y + 1) * w,
              drow + 1);
    drow[w + 1] = T(0);
  }
  std::fill(dst + static_cast<std::size_t>(h + 1) * sw, dst + static_cast<std::size_t>(h + 2) * sw,
            T(0));
}

template <typename T>
Planes<T> pad_all(const Planes<T>& in) {
  Planes<T> out(in.c, in.h + 2, in.w + 2);
  for (int ch = 0; ch < in.c; ++ch) pad_plane(in.plane(ch), in.h, in.w, out.plane(ch));
  return out;
}

// out[oc] = bias[oc] + sum_ic conv(in[ic], w[oc][ic]); padded holds the
// zero-padded input planes.
template <typename T>
void conv_forward(const T* w, const T* bias, int in_c, int out_c, const Planes<T>& padded,
                  Planes<T>& out) {
  const int h = out.h, wd = out.w;
  const std::size_t stride = static_cast<std::size_t>(wd) + 2;
  for (int oc = 0; oc < out_c; ++oc) {
    T* dst = out.plane(oc);
    std::fill(dst, dst + out.plane_size(), bias[oc]);
    for (int ic = 0; ic < in_c; ++ic) {
      const T* k9 = w + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
      kernels::conv3x3_acc(h, wd, padded.plane(ic), stride, k9, dst);
    }
  }
}

// gin[ic] += sum_oc conv(padded gout[oc], flip(w[oc][ic])), restricted to
// input channels [ic_begin, ic_end).
template <typename T>
void conv_backward_input(const T* w, int in_c, int out_c, const Planes<T>& gout_padded,
                         Planes<T>& gin, int ic_begin, int ic_end) {
  const int h = gin.h, wd = gin.w;
  const std::size_t stride = static_cast<std::size_t>(wd) + 2;
  for (int ic = ic_begin; ic < ic_end; ++ic) {
    T* dst = gin.plane(ic);
    for (int oc = 0; oc < out_c; ++oc) {
      const T* k9 = w + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
      T flipped[9];
      for (int i = 0; i < 9; ++i) flipped[i] = k9[8 - i];
      kernels::conv3x3_acc(h, wd, gout_padded.plane(oc), stride, flipped, dst);
    }
  }
}

// wgrad[oc][ic] += correlation(padded input[ic], gout[oc]); bgrad[oc] += sum(gout[oc])
template <typename T>
void conv_backward_params(int in_c, int out_c, const Planes<T>& in_padded, const Planes<T>& gout,
                          T* wgrad, T* bgrad) {
  const int h = gout.h, wd = gout.w;
  const std::size_t stride = static_cast<std::size_t>(wd) + 2;
  for (int oc = 0; oc < out_c; ++oc) {
    bgrad[oc] += static_cast<T>(kernels::sum(gout.plane_size(), gout.plane(oc)));
    for (int ic = 0; ic < in_c; ++ic) {
      kernels::conv3x3_wgrad(h, wd, in_padded.plane(ic), stride, gout.plane(oc),
                             wgrad + (static_cast<std::size_t>(oc) * in_c + ic) * 9);
    }
  }
}

template <typename T>
void time_features(double t, int dim, T* out) {
  for (int k = 0; k < dim / 2; ++k) {
    const double omega = 3.14159265358979323846 * std::pow(2.0, k);
    out[2 * k] = static_cast<T>(std::sin(omega * t));
    out[2 * k + 1] = static_cast<T>(std::cos(omega * t));
  }
}

}  // namespace detail

template <typename T>
struct ForwardCache {
  detail::Planes<T> input;         // concatenated conditioning stack
  detail::Planes<T> input_padded;
  detail::Planes<T> z_in;          // conv_in pre-activation
  std::vector<detail::Planes<T>> h;        // h[0] after conv_in act, h[i+1] after block i
  std::vector<detail::Planes<T>> h_padded; // padded h for the consuming layer
  std::vector<detail::Planes<T>> z_blocks; // per-block pre-activations
  // Effective conv weights when an adapter is applied (empty otherwise);
  // order: conv_in, block0..blockN-1, conv_out. Embedding delta applied to
  // the selected row during input assembly.
  std::vector<std::vector<T>> eff_w;
  std::vector<T> eff_embed_row;
  int prompt_id = 0;
  double inv_t_eff = 1.0;  // gain of the data-prediction head at this t
};

namespace detail {

template <typename T>
void validate_inputs(const VelocityModel<T>& m, const LowRankAdapter<T>* adapter,
                     const Image<T>& x_t, double t, const ConditionTag<T>& cond) {
  if (x_t.channels() != m.arch.channels) {
    throw InputError("predict_velocity: x_t channel count does not match model");
  }
  if (!x_t.same_shape(cond.lr_image)) {
    throw InputError("predict_velocity: cond.lr_image shape does not match x_t");
  }
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("predict_velocity: t outside [0,1]");
  if (cond.prompt_id < 0 || cond.prompt_id >= m.arch.prompt_vocab) {
    throw InputError("predict_velocity: prompt_id outside vocab");
  }
  if (adapter) check_adapter_compatible(m, *adapter, "predict_velocity");
}

// Effective weight tables. Adapter layer order matches the adaptable blocks:
// conv_in.w, block*.w, conv_out.w, prompt_embed.
template <typename T>
void materialize_effective(const VelocityModel<T>& m, const LowRankAdapter<T>* adapter,
                           int prompt_id, ForwardCache<T>& cache) {
  const int n_conv = 2 + m.arch.depth;
  cache.eff_w.clear();
  cache.eff_embed_row.assign(static_cast<std::size_t>(m.arch.prompt_dim), T(0));
  const T* embed_row =
      m.prompt_embed.data() + static_cast<std::size_t>(prompt_id) * m.arch.prompt_dim;
  std::copy(embed_row, embed_row + m.arch.prompt_dim, cache.eff_embed_row.begin());
  if (!adapter) return;

  cache.eff_w.resize(static_cast<std::size_t>(n_conv));
  auto apply = [&](const ConvLayer<T>& layer, std::size_t adapter_idx, std::vector<T>& out) {
    out.assign(layer.w.begin(), layer.w.end());
    const auto& l = adapter->layers[adapter_idx];
    if (l.rank > 0) {
      std::vector<T> delta(out.size());
      adapter_delta(*adapter, l, delta.data());
      kernels::scale_add(out.size(), T(1), delta.data(), out.data());
    }
  };
  apply(m.conv_in, 0, cache.eff_w[0]);
  for (int i = 0; i < m.arch.depth; ++i) {
    apply(m.blocks[static_cast<std::size_t>(i)], static_cast<std::size_t>(1 + i),
          cache.eff_w[static_cast<std::size_t>(1 + i)]);
  }
  apply(m.conv_out, static_cast<std::size_t>(1 + m.arch.depth),
        cache.eff_w[static_cast<std::size_t>(n_conv - 1)]);

  // embedding delta for the selected row: (alpha/rank) * B[pid,:] * A
  const auto& le = adapter->layers.back();
  if (le.rank > 0) {
    const T scale = adapter->alpha / static_cast<T>(le.rank);
    for (int r = 0; r < le.rank; ++r) {
      const T brr = scale * le.b[static_cast<std::size_t>(prompt_id) * le.rank + r];
      if (brr == T(0)) continue;
      kernels::scale_add(static_cast<std::size_t>(le.d_in), brr,
                         le.a.data() + static_cast<std::size_t>(r) * le.d_in,
                         cache.eff_embed_row.data());
    }
  }
}

template <typename T>
const T* layer_w(const VelocityModel<T>& m, const ForwardCache<T>& cache, int conv_index) {
  if (!cache.eff_w.empty()) return cache.eff_w[static_cast<std::size_t>(conv_index)].data();
  if (conv_index == 0) return m.conv_in.w.data();
  if (conv_index <= m.arch.depth) return m.blocks[static_cast<std::size_t>(conv_index - 1)].w.data();
  return m.conv_out.w.data();
}

}  // namespace detail

template <typename T>
Image<T> forward_cached(const VelocityModel<T>& m, const LowRankAdapter<T>* adapter,
                        const Image<T>& x_t, double t, const ConditionTag<T>& cond,
                        ForwardCache<T>& cache) {
  detail::validate_inputs(m, adapter, x_t, t, cond);
  const int h = x_t.height(), w = x_t.width(), c = m.arch.channels;
  const int in_c = m.arch.in_channels();

  detail::materialize_effective(m, adapter, cond.prompt_id, cache);
  cache.prompt_id = cond.prompt_id;

  // conditioning stack: x_t | lr_up | embed (broadcast) | time (broadcast)
  cache.input = detail::Planes<T>(in_c, h, w);
  for (int ch = 0; ch < c; ++ch) {
    std::copy(x_t.plane(ch), x_t.plane(ch) + x_t.plane_size(), cache.input.plane(ch));
    std::copy(cond.lr_image.plane(ch), cond.lr_image.plane(ch) + x_t.plane_size(),
              cache.input.plane(c + ch));
  }
  for (int j = 0; j < m.arch.prompt_dim; ++j) {
    T* plane = cache.input.plane(2 * c + j);
    std::fill(plane, plane + cache.input.plane_size(), cache.eff_embed_row[static_cast<std::size_t>(j)]);
  }
  std::vector<T> tf(static_cast<std::size_t>(m.arch.time_dim));
  detail::time_features(t, m.arch.time_dim, tf.data());
  for (int j = 0; j < m.arch.time_dim; ++j) {
    T* plane = cache.input.plane(2 * c + m.arch.prompt_dim + j);
    std::fill(plane, plane + cache.input.plane_size(), tf[static_cast<std::size_t>(j)]);
  }

  cache.input_padded = detail::pad_all(cache.input);
  cache.z_in = detail::Planes<T>(m.arch.width, h, w);
  detail::conv_forward(detail::layer_w(m, cache, 0), m.conv_in.b.data(), in_c, m.arch.width,
                       cache.input_padded, cache.z_in);

  cache.h.assign(static_cast<std::size_t>(m.arch.depth) + 1, detail::Planes<T>());
  cache.h_padded.assign(static_cast<std::size_t>(m.arch.depth) + 1, detail::Planes<T>());
  cache.z_blocks.assign(static_cast<std::size_t>(m.arch.depth), detail::Planes<T>());

  cache.h[0] = detail::Planes<T>(m.arch.width, h, w);
  kernels::softsign(cache.z_in.v.size(), cache.z_in.v.data(), cache.h[0].v.data());

  for (int bi = 0; bi < m.arch.depth; ++bi) {
    cache.h_padded[static_cast<std::size_t>(bi)] = detail::pad_all(cache.h[static_cast<std::size_t>(bi)]);
    auto& z = cache.z_blocks[static_cast<std::size_t>(bi)];
    z = detail::Planes<T>(m.arch.width, h, w);
    detail::conv_forward(detail::layer_w(m, cache, 1 + bi),
                         m.blocks[static_cast<std::size_t>(bi)].b.data(), m.arch.width,
                         m.arch.width, cache.h_padded[static_cast<std::size_t>(bi)], z);
    auto& hn = cache.h[static_cast<std::size_t>(bi) + 1];
    hn = detail::Planes<T>(m.arch.width, h, w);
    kernels::softsign(z.v.size(), z.v.data(), hn.v.data());
    kernels::scale_add(hn.v.size(), T(1), cache.h[static_cast<std::size_t>(bi)].v.data(),
                       hn.v.data());
  }

  cache.h_padded[static_cast<std::size_t>(m.arch.depth)] =
      detail::pad_all(cache.h[static_cast<std::size_t>(m.arch.depth)]);
  detail::Planes<T> residual(c, h, w);
  detail::conv_forward(detail::layer_w(m, cache, 1 + m.arch.depth), m.conv_out.b.data(),
                       m.arch.width, c, cache.h_padded[static_cast<std::size_t>(m.arch.depth)],
                       residual);

  // v = (t * (x_t - lr_up) - residual) / max(t, t_floor)
  cache.inv_t_eff = 1.0 / std::max(t, m.arch.t_floor);
  const T skip_gain = static_cast<T>(t * cache.inv_t_eff);
  const T r_gain = static_cast<T>(-cache.inv_t_eff);
  Image<T> v(h, w, c);
  kernels::axpby(v.size(), skip_gain, x_t.data(), r_gain, residual.v.data(), v.data());
  kernels::scale_add(v.size(), -skip_gain, cond.lr_image.data(), v.data());
  return v;
}

// v_theta(x_t, t | cond) with optional on-the-fly adapter application.
template <typename T>
Image<T> predict_velocity(const VelocityModel<T>& m, const LowRankAdapter<T>* adapter,
                          const Image<T>& x_t, double t, const ConditionTag<T>& cond) {
  ForwardCache<T> cache;
  return forward_cached(m, adapter, x_t, t, cond, cache);
}

template <typename T>
struct ParamGrads {
  std::vector<std::vector<T>> blocks;  // aligned with param_blocks order

  static ParamGrads zeros_like(const VelocityModel<T>& m) {
    ParamGrads g;
    for (const auto& b : param_blocks(m)) g.blocks.emplace_back(b.size, T(0));
    return g;
  }

  void add_scaled(const ParamGrads& other, T scale) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      kernels::scale_add(blocks[i].size(), scale, other.blocks[i].data(), blocks[i].data());
    }
  }
};

template <typename T>
struct AdapterGrads {
  std::vector<std::vector<T>> a, b;  // aligned with adapter layers

  static AdapterGrads zeros_like(const LowRankAdapter<T>& ad) {
    AdapterGrads g;
    for (const auto& l : ad.layers) {
      g.a.emplace_back(l.a.size(), T(0));
      g.b.emplace_back(l.b.size(), T(0));
    }
    return g;
  }
};

namespace detail {

// Project an effective-weight gradient onto the adapter factors:
//   gA += (alpha/rank) * B^T * G,  gB += (alpha/rank) * G * A^T
template <typename T>
void project_adapter_grad(const LowRankAdapter<T>& ad, const typename LowRankAdapter<T>::Layer& l,
                          const T* g_eff, T* ga, T* gb) {
  if (l.rank == 0) return;
  const T scale = ad.alpha / static_cast<T>(l.rank);
  for (int r = 0; r < l.rank; ++r) {
    for (int o = 0; o < l.d_out; ++o) {
      const T b_or = l.b[static_cast<std::size_t>(o) * l.rank + r];
      const T* g_row = g_eff + static_cast<std::size_t>(o) * l.d_in;
      if (b_or != T(0)) {
        kernels::scale_add(static_cast<std::size_t>(l.d_in), scale * b_or, g_row,
                           ga + static_cast<std::size_t>(r) * l.d_in);
      }
      // gB[o][r] += scale * dot(G[o,:], A[r,:])
      const T* a_row = l.a.data() + static_cast<std::size_t>(r) * l.d_in;
      double dot = 0.0;
      for (int i = 0; i < l.d_in; ++i) {
        dot += static_cast<double>(g_row[i]) * static_cast<double>(a_row[i]);
      }
      gb[static_cast<std::size_t>(o) * l.rank + r] += static_cast<T>(scale * dot);
    }
  }
}

}  // namespace detail

// Backpropagates dL/d-velocity through the cached forward pass. Fills
// base_grads (all trainable blocks, gradients w.r.t. effective weights) and,
// when an adapter was applied, adapter_grads (projected factors). Either
// output may be null.
template <typename T>
void backward(const VelocityModel<T>& m, const LowRankAdapter<T>* adapter,
              const ForwardCache<T>& cache, const Image<T>& gout, ParamGrads<T>* base_grads,
              AdapterGrads<T>* adapter_grads) {
  if (adapter_grads && !adapter) {
    throw InputError("backward: adapter gradients requested without an adapter");
  }
  const int hgt = gout.height(), wdt = gout.width(), c = m.arch.channels;
  const int width = m.arch.width;
  const int depth = m.arch.depth;
  const int in_c = m.arch.in_channels();

  // Gradient scratch in param_blocks order: conv layers then embedding.
  ParamGrads<T> local = ParamGrads<T>::zeros_like(m);
  // block indices in param_blocks order: conv_in(w=0,b=1), block_i(w=2+2i,b=3+2i),
  // conv_out(w,b), prompt_embed last
  const std::size_t conv_out_w = static_cast<std::size_t>(2 + 2 * depth);
  const std::size_t embed_idx = conv_out_w + 2;

  // velocity head: v = -residual * inv_t_eff, so dL/dresidual = -inv_t_eff * dL/dv
  detail::Planes<T> gv(c, hgt, wdt);
  {
    const T neg_gain = static_cast<T>(-cache.inv_t_eff);
    for (std::size_t i = 0; i < gv.v.size(); ++i) gv.v[i] = neg_gain * gout.data()[i];
  }

  // conv_out
  detail::conv_backward_params(width, c, cache.h_padded[static_cast<std::size_t>(depth)], gv,
                               local.blocks[conv_out_w].data(), local.blocks[conv_out_w + 1].data());
  detail::Planes<T> gh(width, hgt, wdt);
  {
    const detail::Planes<T> gv_padded = detail::pad_all(gv);
    detail::conv_backward_input(detail::layer_w(m, cache, 1 + depth), width, c, gv_padded, gh, 0,
                                width);
  }

  // residual blocks, last to first
  for (int bi = depth - 1; bi >= 0; --bi) {
    const auto& z = cache.z_blocks[static_cast<std::size_t>(bi)];
    detail::Planes<T> gz(width, hgt, wdt);
    kernels::softsign_grad(z.v.size(), z.v.data(), gh.v.data(), gz.v.data());
    detail::conv_backward_params(width, width, cache.h_padded[static_cast<std::size_t>(bi)], gz,
                                 local.blocks[static_cast<std::size_t>(2 + 2 * bi)].data(),
                                 local.blocks[static_cast<std::size_t>(3 + 2 * bi)].data());
    const detail::Planes<T> gz_padded = detail::pad_all(gz);
    // identity path keeps gh; conv path adds on top
    detail::conv_backward_input(detail::layer_w(m, cache, 1 + bi), width, width, gz_padded, gh, 0,
                                width);
  }

  // conv_in
  detail::Planes<T> gz0(width, hgt, wdt);
  kernels::softsign_grad(cache.z_in.v.size(), cache.z_in.v.data(), gh.v.data(), gz0.v.data());
  detail::conv_backward_params(in_c, width, cache.input_padded, gz0, local.blocks[0].data(),
                               local.blocks[1].data());

  // embedding rows enter as broadcast input channels; their gradient is the
  // spatial sum of the conv_in input gradient over that channel slice
  {
    detail::Planes<T> gin(in_c, hgt, wdt);
    const detail::Planes<T> gz0_padded = detail::pad_all(gz0);
    detail::conv_backward_input(detail::layer_w(m, cache, 0), in_c, width, gz0_padded, gin, 2 * c,
                                2 * c + m.arch.prompt_dim);
    T* embed_grad = local.blocks[embed_idx].data() +
                    static_cast<std::size_t>(cache.prompt_id) * m.arch.prompt_dim;
    for (int j = 0; j < m.arch.prompt_dim; ++j) {
      embed_grad[j] += static_cast<T>(kernels::sum(gin.plane_size(), gin.plane(2 * c + j)));
    }
  }

  if (adapter_grads) {
    // adaptable block order: conv_in.w, block*.w, conv_out.w, prompt_embed
    std::size_t ai = 0;
    detail::project_adapter_grad(*adapter, adapter->layers[ai], local.blocks[0].data(),
                                 adapter_grads->a[ai].data(), adapter_grads->b[ai].data());
    ++ai;
    for (int bi = 0; bi < depth; ++bi, ++ai) {
      detail::project_adapter_grad(*adapter, adapter->layers[ai],
                                   local.blocks[static_cast<std::size_t>(2 + 2 * bi)].data(),
                                   adapter_grads->a[ai].data(), adapter_grads->b[ai].data());
    }
    detail::project_adapter_grad(*adapter, adapter->layers[ai], local.blocks[conv_out_w].data(),
                                 adapter_grads->a[ai].data(), adapter_grads->b[ai].data());
    ++ai;
    detail::project_adapter_grad(*adapter, adapter->layers[ai], local.blocks[embed_idx].data(),
                                 adapter_grads->a[ai].data(), adapter_grads->b[ai].data());
  }

  if (base_grads) {
    for (std::size_t i = 0; i < local.blocks.size(); ++i) {
      kernels::scale_add(local.blocks[i].size(), T(1), local.blocks[i].data(),
                         base_grads->blocks[i].data());
    }
  }
}

}  // namespace flowsr::model
