#include "kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "dendroweb/errors.hpp"

namespace dendroweb::onnx::kernels {
namespace {

using Shape = std::vector<std::int64_t>;

[[noreturn]] void fail(const std::string& msg) { throw BackendError(msg); }

std::int64_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

Shape strides_of(const Shape& s) {
  Shape st(s.size(), 1);
  for (std::size_t k = s.size(); k-- > 1;) st[k - 1] = st[k] * s[k];
  return st;
}

std::int64_t attr_i(const Attributes& a, const std::string& key, std::int64_t def) {
  auto it = a.find(key);
  return it != a.end() && it->second.i ? *it->second.i : def;
}

float attr_f(const Attributes& a, const std::string& key, float def) {
  auto it = a.find(key);
  return it != a.end() && it->second.f ? *it->second.f : def;
}

std::string attr_s(const Attributes& a, const std::string& key, const std::string& def) {
  auto it = a.find(key);
  return it != a.end() && it->second.s ? *it->second.s : def;
}

Shape attr_ints(const Attributes& a, const std::string& key, Shape def = {}) {
  auto it = a.find(key);
  return it != a.end() && !it->second.ints.empty() ? it->second.ints : def;
}

const Tensor& input(const Inputs& in, std::size_t k, const char* op) {
  if (k >= in.size() || in[k] == nullptr) {
    fail(std::string(op) + ": missing input " + std::to_string(k));
  }
  return *in[k];
}

const Tensor* optional_input(const Inputs& in, std::size_t k) {
  if (k >= in.size() || in[k] == nullptr) return nullptr;
  if (in[k]->shape.size() == 1 && in[k]->shape[0] == 0) return nullptr;  // empty placeholder
  return in[k];
}

const Tensor& float_input(const Inputs& in, std::size_t k, const char* op) {
  const Tensor& t = input(in, k, op);
  if (t.dtype != DType::f32) fail(std::string(op) + ": input " + std::to_string(k) + " must be float");
  return t;
}

std::vector<std::int64_t> int_values(const Tensor& t) {
  if (t.dtype == DType::i64) return t.i;
  std::vector<std::int64_t> out;
  for (float v : t.f) out.push_back(static_cast<std::int64_t>(v));
  return out;
}

std::vector<float> float_values(const Tensor& t) {
  if (t.dtype == DType::f32) return t.f;
  return {t.i.begin(), t.i.end()};
}

std::int64_t normalize_axis(std::int64_t axis, std::size_t rank, const char* op) {
  const auto r = static_cast<std::int64_t>(rank);
  if (axis < -r || axis >= r) fail(std::string(op) + ": axis " + std::to_string(axis) + " out of range");
  return axis < 0 ? axis + r : axis;
}

template <class F>
decltype(auto) visit(Tensor& t, F&& f) {
  return t.dtype == DType::f32 ? f(t.f) : f(t.i);
}

template <class F>
decltype(auto) visit(const Tensor& t, F&& f) {
  return t.dtype == DType::f32 ? f(t.f) : f(t.i);
}

Tensor like(const Tensor& t, Shape shape) {
  Tensor out;
  out.shape = std::move(shape);
  out.dtype = t.dtype;
  const auto n = static_cast<std::size_t>(numel(out.shape));
  if (t.dtype == DType::f32) out.f.assign(n, 0.0f);
  else out.i.assign(n, 0);
  return out;
}

inline const std::vector<float>& same_storage(const std::vector<float>&, const Tensor& t) { return t.f; }
inline const std::vector<std::int64_t>& same_storage(const std::vector<std::int64_t>&, const Tensor& t) {
  return t.i;
}

// ---- elementwise ---------------------------------------------------------

template <class F>
std::vector<Tensor> unary(const Inputs& in, const char* op, F f) {
  Tensor out = float_input(in, 0, op);
  for (float& v : out.f) v = f(v);
  return {std::move(out)};
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t k = 0; k < r; ++k) {
    const std::int64_t da = k + a.size() >= r ? a[k + a.size() - r] : 1;
    const std::int64_t db = k + b.size() >= r ? b[k + b.size() - r] : 1;
    if (da != db && da != 1 && db != 1) fail(std::string(op) + ": shapes do not broadcast");
    out[k] = da == 1 ? db : da;
  }
  return out;
}

Shape broadcast_strides(const Shape& s, const Shape& out) {
  Shape st(out.size(), 0);
  const Shape own = strides_of(s);
  const std::size_t off = out.size() - s.size();
  for (std::size_t k = 0; k < s.size(); ++k) st[k + off] = s[k] == 1 ? 0 : own[k];
  return st;
}

template <class T, class F>
void broadcast_apply(const std::vector<T>& a, const Shape& sa, const std::vector<T>& b, const Shape& sb,
                     const Shape& so, std::vector<T>& out, F f) {
  const std::size_t n = static_cast<std::size_t>(numel(so));
  out.resize(n);
  if (sa == sb) {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(a[k], b[k]);
    return;
  }
  if (so.empty()) {
    out[0] = f(a[0], b[0]);
    return;
  }
  const Shape ta = broadcast_strides(sa, so);
  const Shape tb = broadcast_strides(sb, so);
  const std::size_t r = so.size();
  const std::int64_t inner = so[r - 1];
  const std::int64_t ia = ta[r - 1], ib = tb[r - 1];
  Shape idx(r, 0);
  std::size_t o = 0;
  while (o < n) {
    std::int64_t pa = 0, pb = 0;
    for (std::size_t k = 0; k + 1 < r; ++k) {
      pa += idx[k] * ta[k];
      pb += idx[k] * tb[k];
    }
    for (std::int64_t x = 0; x < inner; ++x) out[o++] = f(a[pa + x * ia], b[pb + x * ib]);
    for (std::size_t k = r - 1; k-- > 0;) {
      if (++idx[k] < so[k]) break;
      idx[k] = 0;
    }
  }
}

template <class F>
std::vector<Tensor> binary(const Inputs& in, const char* op, F f) {
  const Tensor& a = input(in, 0, op);
  const Tensor& b = input(in, 1, op);
  if (a.dtype != b.dtype) fail(std::string(op) + ": operand types differ");
  const Shape so = broadcast_shape(a.shape, b.shape, op);
  Tensor out;
  out.shape = so;
  out.dtype = a.dtype;
  if (a.dtype == DType::f32) {
    broadcast_apply(a.f, a.shape, b.f, b.shape, so, out.f, [&](float x, float y) { return f(x, y); });
  } else {
    broadcast_apply(a.i, a.shape, b.i, b.shape, so, out.i, [&](std::int64_t x, std::int64_t y) {
      return static_cast<std::int64_t>(f(x, y));
    });
  }
  return {std::move(out)};
}

// ---- convolution ---------------------------------------------------------

struct Window {
  std::int64_t k = 1, s = 1, d = 1, pad_begin = 0, pad_end = 0;
  std::int64_t extent() const { return (k - 1) * d + 1; }
};

// Per-spatial-axis window geometry for Conv and pooling (2-D only).
std::vector<Window> windows(const Attributes& a, const Shape& in_spatial, const Shape& kernel, const char* op) {
  if (kernel.size() != 2) fail(std::string(op) + ": only 2-D kernels are supported");
  const Shape strides = attr_ints(a, "strides", {1, 1});
  const Shape dil = attr_ints(a, "dilations", {1, 1});
  const Shape pads = attr_ints(a, "pads", {0, 0, 0, 0});
  if (strides.size() != 2 || dil.size() != 2 || pads.size() != 4) {
    fail(std::string(op) + ": strides, dilations and pads must match a 2-D kernel");
  }
  const std::string auto_pad = attr_s(a, "auto_pad", "NOTSET");
  std::vector<Window> w(2);
  for (std::size_t k = 0; k < 2; ++k) {
    w[k].k = kernel[k];
    w[k].s = strides[k];
    w[k].d = dil[k];
    if (w[k].k <= 0 || w[k].s <= 0 || w[k].d <= 0) fail(std::string(op) + ": non-positive window parameter");
    if (auto_pad == "NOTSET") {
      w[k].pad_begin = pads[k];
      w[k].pad_end = pads[k + 2];
    } else if (auto_pad == "VALID") {
      // no padding
    } else if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") {
      const std::int64_t out = (in_spatial[k] + w[k].s - 1) / w[k].s;
      const std::int64_t total = std::max<std::int64_t>(0, (out - 1) * w[k].s + w[k].extent() - in_spatial[k]);
      const std::int64_t small = total / 2;
      w[k].pad_begin = auto_pad == "SAME_UPPER" ? small : total - small;
      w[k].pad_end = total - w[k].pad_begin;
    } else {
      fail(std::string(op) + ": unknown auto_pad '" + auto_pad + "'");
    }
  }
  return w;
}

std::int64_t conv_out(std::int64_t in, const Window& w) {
  return (in + w.pad_begin + w.pad_end - w.extent()) / w.s + 1;
}

void sgemm(bool ta, bool tb, int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a,
              lda, b, ldb, 0.0f, c, ldc);
}

std::vector<Tensor> conv(const Inputs& in, const Attributes& a, const Context&) {
  const Tensor& x = float_input(in, 0, "Conv");
  const Tensor& w = float_input(in, 1, "Conv");
  const Tensor* bias = optional_input(in, 2);
  if (x.rank() != 4 || w.rank() != 4) fail("Conv: only 4-D input and weight are supported");
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const std::int64_t m = w.shape[0], cg = w.shape[1];
  const std::int64_t groups = attr_i(a, "group", 1);
  if (groups <= 0 || c != cg * groups || m % groups != 0) fail("Conv: channel count does not match weight and group");
  const Shape kernel = attr_ints(a, "kernel_shape", {w.shape[2], w.shape[3]});
  if (kernel[0] != w.shape[2] || kernel[1] != w.shape[3]) fail("Conv: kernel_shape disagrees with weight");
  const auto win = windows(a, {h, wd}, kernel, "Conv");
  const std::int64_t oh = conv_out(h, win[0]), ow = conv_out(wd, win[1]);
  if (oh <= 0 || ow <= 0) fail("Conv: empty output");
  if (bias && bias->size() != static_cast<std::size_t>(m)) fail("Conv: bias length must equal output channels");

  Tensor out = Tensor::zeros({n, m, oh, ow});
  const std::int64_t mg = m / groups;
  const std::int64_t kk = cg * kernel[0] * kernel[1];
  const std::int64_t p = oh * ow;
  const bool pointwise = kernel[0] == 1 && kernel[1] == 1 && win[0].s == 1 && win[1].s == 1 &&
                         win[0].pad_begin == 0 && win[0].pad_end == 0 && win[1].pad_begin == 0 &&
                         win[1].pad_end == 0;
  std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kk * p));
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const float* src = x.f.data() + ((b * c) + g * cg) * h * wd;
      const float* colp = src;
      if (!pointwise) {
        std::size_t r = 0;
        for (std::int64_t ch = 0; ch < cg; ++ch) {
          const float* plane = src + ch * h * wd;
          for (std::int64_t ki = 0; ki < kernel[0]; ++ki) {
            for (std::int64_t kj = 0; kj < kernel[1]; ++kj, ++r) {
              float* row = col.data() + r * p;
              for (std::int64_t y = 0; y < oh; ++y) {
                const std::int64_t iy = y * win[0].s - win[0].pad_begin + ki * win[0].d;
                for (std::int64_t xo = 0; xo < ow; ++xo) {
                  const std::int64_t ix = xo * win[1].s - win[1].pad_begin + kj * win[1].d;
                  row[y * ow + xo] = (iy >= 0 && iy < h && ix >= 0 && ix < wd) ? plane[iy * wd + ix] : 0.0f;
                }
              }
            }
          }
        }
        colp = col.data();
      }
      float* dst = out.f.data() + ((b * m) + g * mg) * p;
      sgemm(false, false, static_cast<int>(mg), static_cast<int>(p), static_cast<int>(kk),
            w.f.data() + g * mg * kk, static_cast<int>(kk), colp, static_cast<int>(p), dst, static_cast<int>(p));
    }
    if (bias) {
      for (std::int64_t o = 0; o < m; ++o) {
        float* dst = out.f.data() + (b * m + o) * p;
        const float bv = bias->f[o];
        for (std::int64_t q = 0; q < p; ++q) dst[q] += bv;
      }
    }
  }
  return {std::move(out)};
}

std::vector<Tensor> conv_transpose(const Inputs& in, const Attributes& a, const Context&) {
  const Tensor& x = float_input(in, 0, "ConvTranspose");
  const Tensor& w = float_input(in, 1, "ConvTranspose");
  const Tensor* bias = optional_input(in, 2);
  if (x.rank() != 4 || w.rank() != 4) fail("ConvTranspose: only 4-D input and weight are supported");
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const std::int64_t groups = attr_i(a, "group", 1);
  if (groups <= 0 || w.shape[0] != c || c % groups != 0) fail("ConvTranspose: channel count does not match weight");
  const std::int64_t cg = c / groups, mg = w.shape[1], m = mg * groups;
  const Shape kernel = attr_ints(a, "kernel_shape", {w.shape[2], w.shape[3]});
  if (kernel.size() != 2 || kernel[0] != w.shape[2] || kernel[1] != w.shape[3]) {
    fail("ConvTranspose: kernel_shape disagrees with weight");
  }
  const Shape strides = attr_ints(a, "strides", {1, 1});
  const Shape dil = attr_ints(a, "dilations", {1, 1});
  Shape pads = attr_ints(a, "pads", {0, 0, 0, 0});
  const Shape out_pad = attr_ints(a, "output_padding", {0, 0});
  const Shape out_shape = attr_ints(a, "output_shape");
  const std::string auto_pad = attr_s(a, "auto_pad", "NOTSET");
  if (strides.size() != 2 || dil.size() != 2 || pads.size() != 4 || out_pad.size() != 2) {
    fail("ConvTranspose: attributes must match a 2-D kernel");
  }
  const Shape in_sp{h, wd};
  Shape osz(2);
  for (std::size_t k = 0; k < 2; ++k) {
    const std::int64_t ext = (kernel[k] - 1) * dil[k] + 1;
    const std::int64_t full = strides[k] * (in_sp[k] - 1) + out_pad[k] + ext;
    std::int64_t target = -1;
    if (!out_shape.empty()) target = out_shape[out_shape.size() - 2 + k];
    else if (auto_pad == "SAME_UPPER" || auto_pad == "SAME_LOWER") target = in_sp[k] * strides[k];
    if (target >= 0) {
      const std::int64_t total = full - target;
      if (auto_pad == "SAME_LOWER") {
        pads[k] = total - total / 2;
        pads[k + 2] = total / 2;
      } else {
        pads[k] = total / 2;
        pads[k + 2] = total - total / 2;
      }
    } else if (auto_pad == "VALID") {
      pads = {0, 0, 0, 0};
    }
    osz[k] = full - pads[k] - pads[k + 2];
    if (osz[k] <= 0) fail("ConvTranspose: empty output");
  }
  if (bias && bias->size() != static_cast<std::size_t>(m)) fail("ConvTranspose: bias length must equal output channels");

  Tensor out = Tensor::zeros({n, m, osz[0], osz[1]});
  const std::int64_t hw = h * wd;
  const std::int64_t rows = mg * kernel[0] * kernel[1];
  std::vector<float> col(static_cast<std::size_t>(rows * hw));
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const float* xs = x.f.data() + (b * c + g * cg) * hw;
      const float* wg = w.f.data() + g * cg * rows;
      sgemm(true, false, static_cast<int>(rows), static_cast<int>(hw), static_cast<int>(cg), wg,
            static_cast<int>(rows), xs, static_cast<int>(hw), col.data(), static_cast<int>(hw));
      std::size_t r = 0;
      for (std::int64_t o = 0; o < mg; ++o) {
        float* plane = out.f.data() + (b * m + g * mg + o) * osz[0] * osz[1];
        for (std::int64_t ki = 0; ki < kernel[0]; ++ki) {
          for (std::int64_t kj = 0; kj < kernel[1]; ++kj, ++r) {
            const float* row = col.data() + r * hw;
            for (std::int64_t iy = 0; iy < h; ++iy) {
              const std::int64_t oy = iy * strides[0] - pads[0] + ki * dil[0];
              if (oy < 0 || oy >= osz[0]) continue;
              for (std::int64_t ix = 0; ix < wd; ++ix) {
                const std::int64_t ox = ix * strides[1] - pads[1] + kj * dil[1];
                if (ox < 0 || ox >= osz[1]) continue;
                plane[oy * osz[1] + ox] += row[iy * wd + ix];
              }
            }
          }
        }
      }
    }
    if (bias) {
      for (std::int64_t o = 0; o < m; ++o) {
        float* dst = out.f.data() + (b * m + o) * osz[0] * osz[1];
        for (std::int64_t q = 0; q < osz[0] * osz[1]; ++q) dst[q] += bias->f[o];
      }
    }
  }
  return {std::move(out)};
}

std::vector<Tensor> batch_norm(const Inputs& in, const Attributes& a, const Context&) {
  const Tensor& x = float_input(in, 0, "BatchNormalization");
  const Tensor& scale = float_input(in, 1, "BatchNormalization");
  const Tensor& shift = float_input(in, 2, "BatchNormalization");
  const Tensor& mean = float_input(in, 3, "BatchNormalization");
  const Tensor& var = float_input(in, 4, "BatchNormalization");
  if (x.rank() < 2) fail("BatchNormalization: input rank must be at least 2");
  const std::int64_t n = x.shape[0], c = x.shape[1];
  const std::int64_t inner = numel(x.shape) / std::max<std::int64_t>(1, n * c);
  for (const Tensor* t : {&scale, &shift, &mean, &var}) {
    if (t->size() != static_cast<std::size_t>(c)) fail("BatchNormalization: parameter length must equal channels");
  }
  const float eps = attr_f(a, "epsilon", 1e-5f);
  Tensor out = x;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const float k = scale.f[ch] / std::sqrt(var.f[ch] + eps);
      const float off = shift.f[ch] - mean.f[ch] * k;
      float* p = out.f.data() + (b * c + ch) * inner;
      for (std::int64_t q = 0; q < inner; ++q) p[q] = p[q] * k + off;
    }
  }
  return {std::move(out)};
}

// ---- pooling -------------------------------------------------------------

std::vector<Tensor> pool(const Inputs& in, const Attributes& a, bool is_max) {
  const char* op = is_max ? "MaxPool" : "AveragePool";
  const Tensor& x = float_input(in, 0, op);
  if (x.rank() != 4) fail(std::string(op) + ": only 4-D input is supported");
  const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const Shape kernel = attr_ints(a, "kernel_shape");
  auto win = windows(a, {h, wd}, kernel, op);
  const bool ceil_mode = attr_i(a, "ceil_mode", 0) != 0;
  const bool include_pad = attr_i(a, "count_include_pad", 0) != 0;
  Shape osz(2);
  const Shape in_sp{h, wd};
  for (std::size_t k = 0; k < 2; ++k) {
    const std::int64_t span = in_sp[k] + win[k].pad_begin + win[k].pad_end - win[k].extent();
    if (span < 0) fail(std::string(op) + ": window larger than padded input");
    std::int64_t o = span / win[k].s + 1;
    if (ceil_mode && span % win[k].s != 0) {
      ++o;
      if ((o - 1) * win[k].s >= in_sp[k] + win[k].pad_begin) --o;
    }
    osz[k] = o;
  }
  Tensor out = Tensor::zeros({n, c, osz[0], osz[1]});
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const float* src = x.f.data() + plane * h * wd;
    float* dst = out.f.data() + plane * osz[0] * osz[1];
    for (std::int64_t oy = 0; oy < osz[0]; ++oy) {
      const std::int64_t y0 = oy * win[0].s - win[0].pad_begin;
      for (std::int64_t ox = 0; ox < osz[1]; ++ox) {
        const std::int64_t x0 = ox * win[1].s - win[1].pad_begin;
        float best = -std::numeric_limits<float>::infinity();
        double sum = 0.0;
        std::int64_t count = 0, padded_count = 0;
        for (std::int64_t ki = 0; ki < win[0].k; ++ki) {
          const std::int64_t iy = y0 + ki * win[0].d;
          const bool in_pad_y = iy >= -win[0].pad_begin && iy < h + win[0].pad_end;
          for (std::int64_t kj = 0; kj < win[1].k; ++kj) {
            const std::int64_t ix = x0 + kj * win[1].d;
            if (in_pad_y && ix >= -win[1].pad_begin && ix < wd + win[1].pad_end) ++padded_count;
            if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
            const float v = src[iy * wd + ix];
            best = std::max(best, v);
            sum += v;
            ++count;
          }
        }
        if (is_max) dst[oy * osz[1] + ox] = best;
        else {
          const std::int64_t denom = include_pad ? padded_count : count;
          dst[oy * osz[1] + ox] = denom > 0 ? static_cast<float>(sum / denom) : 0.0f;
        }
      }
    }
  }
  return {std::move(out)};
}

std::vector<Tensor> global_pool(const Inputs& in, bool is_max) {
  const char* op = is_max ? "GlobalMaxPool" : "GlobalAveragePool";
  const Tensor& x = float_input(in, 0, op);
  if (x.rank() < 3) fail(std::string(op) + ": input rank must be at least 3");
  const std::int64_t n = x.shape[0], c = x.shape[1];
  const std::int64_t inner = numel(x.shape) / (n * c);
  Shape shape{n, c};
  for (std::size_t k = 2; k < x.rank(); ++k) shape.push_back(1);
  Tensor out = Tensor::zeros(shape);
  for (std::int64_t p = 0; p < n * c; ++p) {
    const float* src = x.f.data() + p * inner;
    if (is_max) out.f[p] = *std::max_element(src, src + inner);
    else {
      double s = 0.0;
      for (std::int64_t q = 0; q < inner; ++q) s += src[q];
      out.f[p] = static_cast<float>(s / inner);
    }
  }
  return {std::move(out)};
}

// ---- resampling ----------------------------------------------------------

struct ResizeMode {
  std::string mode = "nearest";
  std::string coords = "half_pixel";
  std::string nearest = "round_prefer_floor";
  bool legacy = false;  // Upsample and opset-10 Resize
};

double source_coord(double x, double scale, std::int64_t in, std::int64_t out, const std::string& coords) {
  if (coords == "half_pixel") return (x + 0.5) / scale - 0.5;
  if (coords == "pytorch_half_pixel") return out > 1 ? (x + 0.5) / scale - 0.5 : 0.0;
  if (coords == "align_corners") return out == 1 ? 0.0 : x * static_cast<double>(in - 1) / static_cast<double>(out - 1);
  if (coords == "asymmetric") return x / scale;
  if (coords == "tf_half_pixel_for_nn") return (x + 0.5) / scale;
  fail("Resize: unsupported coordinate_transformation_mode '" + coords + "'");
}

std::int64_t nearest_index(double v, double scale, const ResizeMode& m) {
  if (m.legacy) return static_cast<std::int64_t>(scale < 1.0 ? std::ceil(v) : std::floor(v));
  if (m.nearest == "floor") return static_cast<std::int64_t>(std::floor(v));
  if (m.nearest == "ceil") return static_cast<std::int64_t>(std::ceil(v));
  const double fl = std::floor(v);
  if (v - fl == 0.5) return static_cast<std::int64_t>(m.nearest == "round_prefer_ceil" ? fl + 1.0 : fl);
  if (m.nearest == "round_prefer_floor" || m.nearest == "round_prefer_ceil") return static_cast<std::int64_t>(std::round(v));
  fail("Resize: unsupported nearest_mode '" + m.nearest + "'");
}

struct AxisTaps {
  std::vector<std::int64_t> i0, i1;
  std::vector<float> w1;
};

AxisTaps axis_taps(std::int64_t in, std::int64_t out, double scale, const ResizeMode& m) {
  AxisTaps t;
  for (std::int64_t x = 0; x < out; ++x) {
    const double src = source_coord(static_cast<double>(x), scale, in, out, m.coords);
    if (m.mode == "nearest") {
      const std::int64_t k = std::clamp<std::int64_t>(nearest_index(src, scale, m), 0, in - 1);
      t.i0.push_back(k);
      t.i1.push_back(k);
      t.w1.push_back(0.0f);
    } else {
      const double c = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto k0 = static_cast<std::int64_t>(std::floor(c));
      t.i0.push_back(k0);
      t.i1.push_back(std::min(k0 + 1, in - 1));
      t.w1.push_back(static_cast<float>(c - k0));
    }
  }
  return t;
}

std::vector<Tensor> resample(const Tensor& x, Shape out_shape, std::vector<double> scales, const ResizeMode& m) {
  if (x.dtype != DType::f32) fail("Resize: input must be float");
  if (x.rank() != 4) fail("Resize: only 4-D input is supported");
  if (out_shape[0] != x.shape[0] || out_shape[1] != x.shape[1]) fail("Resize: batch and channel axes must not be scaled");
  if (m.mode != "nearest" && m.mode != "linear" && m.mode != "bilinear") {
    fail("Resize: unsupported mode '" + m.mode + "'");
  }
  if (out_shape[2] <= 0 || out_shape[3] <= 0) fail("Resize: empty output");
  ResizeMode mm = m;
  if (mm.mode == "bilinear") mm.mode = "linear";
  const AxisTaps ty = axis_taps(x.shape[2], out_shape[2], scales[2], mm);
  const AxisTaps tx = axis_taps(x.shape[3], out_shape[3], scales[3], mm);
  Tensor out = Tensor::zeros(out_shape);
  const std::int64_t ih = x.shape[2], iw = x.shape[3], oh = out_shape[2], ow = out_shape[3];
  for (std::int64_t p = 0; p < x.shape[0] * x.shape[1]; ++p) {
    const float* src = x.f.data() + p * ih * iw;
    float* dst = out.f.data() + p * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      const float* r0 = src + ty.i0[y] * iw;
      const float* r1 = src + ty.i1[y] * iw;
      const float wy = ty.w1[y];
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        const float wx = tx.w1[xo];
        const float top = r0[tx.i0[xo]] * (1.0f - wx) + r0[tx.i1[xo]] * wx;
        const float bot = r1[tx.i0[xo]] * (1.0f - wx) + r1[tx.i1[xo]] * wx;
        dst[y * ow + xo] = top * (1.0f - wy) + bot * wy;
      }
    }
  }
  return {std::move(out)};
}

std::vector<Tensor> resize_from_scales(const Tensor& x, const std::vector<float>& sc, const ResizeMode& m) {
  if (sc.size() != x.rank()) fail("Resize: scales length must equal input rank");
  Shape shape;
  std::vector<double> scales;
  for (std::size_t k = 0; k < sc.size(); ++k) {
    if (sc[k] <= 0.0f) fail("Resize: scales must be positive");
    shape.push_back(static_cast<std::int64_t>(std::floor(x.shape[k] * static_cast<double>(sc[k]))));
    scales.push_back(sc[k]);
  }
  return resample(x, shape, scales, m);
}

std::vector<Tensor> resize(const Inputs& in, const Attributes& a, const Context& ctx) {
  const Tensor& x = input(in, 0, "Resize");
  ResizeMode m;
  m.mode = attr_s(a, "mode", "nearest");
  if (ctx.opset < 11) {
    m.legacy = true;
    m.coords = "asymmetric";
    return resize_from_scales(x, float_values(input(in, 1, "Resize")), m);
  }
  m.coords = attr_s(a, "coordinate_transformation_mode", "half_pixel");
  m.nearest = attr_s(a, "nearest_mode", "round_prefer_floor");
  if (m.coords == "tf_crop_and_resize") fail("Resize: tf_crop_and_resize is not supported");
  if (const Tensor* sizes = optional_input(in, 3)) {
    const auto sz = int_values(*sizes);
    if (sz.size() != x.rank()) fail("Resize: sizes length must equal input rank");
    std::vector<double> scales;
    for (std::size_t k = 0; k < sz.size(); ++k) scales.push_back(static_cast<double>(sz[k]) / x.shape[k]);
    return resample(x, Shape(sz.begin(), sz.end()), scales, m);
  }
  const Tensor* scales = optional_input(in, 2);
  if (!scales) fail("Resize: either scales or sizes is required");
  return resize_from_scales(x, float_values(*scales), m);
}

std::vector<Tensor> upsample(const Inputs& in, const Attributes& a, const Context&) {
  const Tensor& x = input(in, 0, "Upsample");
  ResizeMode m;
  m.mode = attr_s(a, "mode", "nearest");
  m.legacy = true;
  m.coords = "asymmetric";
  std::vector<float> sc;
  if (const Tensor* s = optional_input(in, 1)) sc = float_values(*s);
  else if (auto it = a.find("scales"); it != a.end()) sc = it->second.floats;
  else fail("Upsample: scales are required");
  return resize_from_scales(x, sc, m);
}

// ---- shape and data movement ---------------------------------------------

std::vector<Tensor> concat(const Inputs& in, const Attributes& a, const Context&) {
  const Tensor& first = input(in, 0, "Concat");
  const std::int64_t axis = normalize_axis(attr_i(a, "axis", 0), first.rank(), "Concat");
  Shape shape = first.shape;
  shape[axis] = 0;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const Tensor& t = input(in, k, "Concat");
    if (t.rank() != first.rank() || t.dtype != first.dtype) fail("Concat: inputs differ in rank or type");
    for (std::size_t d = 0; d < t.rank(); ++d) {
      if (static_cast<std::int64_t>(d) != axis && t.shape[d] != first.shape[d]) fail("Concat: inputs differ in shape");
    }
    shape[axis] += t.shape[axis];
  }
  Tensor out = like(first, shape);
  const std::int64_t outer = numel(Shape(shape.begin(), shape.begin() + axis));
  const std::int64_t inner = numel(Shape(shape.begin() + axis + 1, shape.end()));
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const Tensor& t = *in[k];
    const std::int64_t block = t.shape[axis] * inner;
    visit(out, [&](auto& dst) {
      const auto& src = same_storage(dst, t);
      for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(src.begin() + o * block, block, dst.begin() + o * shape[axis] * inner + offset);
      }
    });
    offset += block;
  }
  return {std::move(out)};
}

std::vector<Tensor> constant(const Inputs&, const Attributes& a, const Context&) {
  auto it = a.find("value");
  if (it != a.end() && it->second.t) return {*it->second.t};
  if (auto f = a.find("value_float"); f != a.end() && f->second.f) return {Tensor::floats({}, {*f->second.f})};
  if (auto f = a.find("value_floats"); f != a.end()) {
    const auto& v = f->second.floats;
    return {Tensor::floats({static_cast<std::int64_t>(v.size())}, v)};
  }
  if (auto i = a.find("value_int"); i != a.end() && i->second.i) return {Tensor::ints({}, {*i->second.i})};
  if (auto i = a.find("value_ints"); i != a.end()) {
    const auto& v = i->second.ints;
    return {Tensor::ints({static_cast<std::int64_t>(v.size())}, v)};
  }
  fail("Constant: no supported value attribute");
}

std::vector<Tensor> shape_op(const Inputs& in, const Attributes&, const Context&) {
  const Tensor& x = input(in, 0, "Shape");
  return {Tensor::ints({static_cast<std::int64_t>(x.rank())}, x.shape)};
}

std::vector<Tensor> cast(const Inputs& in, const Attributes& a, const Context&) {
  const Tensor& x = input(in, 0, "Cast");
  const std::int64_t to = attr_i(a, "to", 1);
  Tensor out;
  out.shape = x.shape;
  if (to == 1 || to == 10 || to == 11) {
    out.dtype = DType::f32;
    out.f = float_values(x);
  } else if (to == 2 || to == 3 || to == 5 || to == 6 || to == 7 || to == 9 || to == 12 || to == 13) {
    out.dtype = DType::i64;
    out.i = int_values(x);
    if (to == 9) for (auto& v : out.i) v = v != 0;
  } else {
    fail("Cast: unsupported target type " + std::to_string(to));
  }
  return {std::move(out)};
}

Tensor reshaped(const Tensor& x, Shape shape) {
  Tensor out = x;
  out.shape = std::move(shape);
  if (numel(out.shape) != numel(x.shape)) fail("Reshape: element count changes");
  return out;
}

std::vector<Tensor> reshape(const Inputs& in, const Attributes& a, const Context& ctx) {
  const Tensor& x = input(in, 0, "Reshape");
  Shape target = ctx.opset < 5 ? attr_ints(a, "shape") : int_values(input(in, 1, "Reshape"));
  const bool allow_zero = attr_i(a, "allowzero", 0) != 0;
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] == 0 && !allow_zero) {
      if (k >= x.rank()) fail("Reshape: 0 refers to a missing input dimension");
      target[k] = x.shape[k];
    }
    if (target[k] == -1) {
      if (infer >= 0) fail("Reshape: more than one inferred dimension");
      infer = static_cast<int>(k);
    } else {
      known *= target[k];
    }
  }
  if (infer >= 0) {
    if (known == 0) fail("Reshape: cannot infer a dimension next to a zero");
    target[infer] = numel(x.shape) / known;
  }
  return {reshaped(x, std::move(target))};
}

std::vector<Tensor> flatten(const Inputs& in, const Attributes& a, const Context&) {
  const Tensor& x = input(in, 0, "Flatten");
  std::int64_t axis = attr_i(a, "axis", 1);
  if (axis < 0) axis += static_cast<std::int64_t>(x.rank());
  if (axis < 0 || axis > static_cast<std::int64_t>(x.rank())) fail("Flatten: axis out of range");
  const std::int64_t outer = numel(Shape(x.shape.begin(), x.shape.begin() + axis));
  return {reshaped(x, {outer, numel(x.shape) / std::max<std::int64_t>(outer, 1)})};
}

Shape axes_arg(const Inputs& in, const Attributes& a, const Context& ctx, int since_opset) {
  if (ctx.opset >= since_opset) {
    const Tensor* t = optional_input(in, 1);
    return t ? int_values(*t) : Shape{};
  }
  return attr_ints(a, "axes");
}

std::vector<Tensor> unsqueeze(const Inputs& in, const Attributes& a, const Context& ctx) {
  const Tensor& x = input(in, 0, "Unsqueeze");
  Shape axes = axes_arg(in, a, ctx, 13);
  const std::size_t rank = x.rank() + axes.size();
  for (auto& ax : axes) ax = normalize_axis(ax, rank, "Unsqueeze");
  std::sort(axes.begin(), axes.end());
  Shape shape;
  std::size_t src = 0;
  for (std::size_t k = 0; k < rank; ++k) {
    if (std::binary_search(axes.begin(), axes.end(), static_cast<std::int64_t>(k))) shape.push_back(1);
    else shape.push_back(x.shape[src++]);
  }
  return {reshaped(x, shape)};
}

std::vector<Tensor> squeeze(const Inputs& in, const Attributes& a, const Context& ctx) {
  const Tensor& x = input(in, 0, "Squeeze");
  Shape axes = axes_arg(in, a, ctx, 13);
  for (auto& ax : axes) ax = normalize_axis(ax, x.rank(), "Squeeze");
  Shape shape;
  for (std::size_t k = 0; k < x.rank(); ++k) {
    const bool listed = std::find(axes.begin(), axes.end(), static_cast<std::int64_t>(k)) != axes.end();
    if (listed && x.shape[k] != 1) fail("Squeeze: axis " + std::to_string(k) + " is not 1");
    if ((axes.empty() && x.shape[k] == 1) || listed) continue;
    shape.push_back(x.shape[k]);
  }
  return {reshaped(x, shape)};
}

std::vector<Tensor> gather(const Inputs& in, const Attributes& a, const Context&) {
  const Tensor& x = input(in, 0, "Gather");
  const Tensor& idx = input(in, 1, "Gather");
  if (x.rank() == 0) fail("Gather: scalar input");
  const std::int64_t axis = normalize_axis(attr_i(a, "axis", 0), x.rank(), "Gather");
  const auto indices = int_values(idx);
  Shape shape(x.shape.begin(), x.shape.begin() + axis);
  shape.insert(shape.end(), idx.shape.begin(), idx.shape.end());
  shape.insert(shape.end(), x.shape.begin() + axis + 1, x.shape.end());
  const std::int64_t outer = numel(Shape(x.shape.begin(), x.shape.begin() + axis));
  const std::int64_t inner = numel(Shape(x.shape.begin() + axis + 1, x.shape.end()));
  const std::int64_t len = x.shape[axis];
  Tensor out = like(x, shape);
  visit(out, [&](auto& dst) {
    const auto& src = same_storage(dst, x);
    std::size_t o = 0;
    for (std::int64_t a0 = 0; a0 < outer; ++a0) {
      for (std::int64_t k : indices) {
        if (k < 0) k += len;
        if (k < 0 || k >= len) fail("Gather: index out of range");
        std::copy_n(src.begin() + (a0 * len + k) * inner, inner, dst.begin() + o);
        o += inner;
      }
    }
  });
  return {std::move(out)};
}

std::vector<Tensor> slice(const Inputs& in, const Attributes& a, const Context& ctx) {
  const Tensor& x = input(in, 0, "Slice");
  Shape starts, ends, axes, steps;
  if (ctx.opset < 10) {
    starts = attr_ints(a, "starts");
    ends = attr_ints(a, "ends");
    axes = attr_ints(a, "axes");
  } else {
    starts = int_values(input(in, 1, "Slice"));
    ends = int_values(input(in, 2, "Slice"));
    if (const Tensor* t = optional_input(in, 3)) axes = int_values(*t);
    if (const Tensor* t = optional_input(in, 4)) steps = int_values(*t);
  }
  if (axes.empty()) {
    for (std::size_t k = 0; k < starts.size(); ++k) axes.push_back(static_cast<std::int64_t>(k));
  }
  if (steps.empty()) steps.assign(starts.size(), 1);
  if (ends.size() != starts.size() || axes.size() != starts.size() || steps.size() != starts.size()) {
    fail("Slice: starts, ends, axes and steps differ in length");
  }
  const std::size_t r = x.rank();
  Shape begin(r, 0), step(r, 1), shape = x.shape;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::int64_t ax = normalize_axis(axes[k], r, "Slice");
    const std::int64_t dim = x.shape[ax];
    const std::int64_t st = steps[k];
    if (st == 0) fail("Slice: zero step");
    auto clampi = [&](std::int64_t v, std::int64_t lo, std::int64_t hi) {
      if (v < 0) v += dim;
      return std::clamp(v, lo, hi);
    };
    std::int64_t s0, e0;
    if (st > 0) {
      s0 = clampi(starts[k], 0, dim);
      e0 = clampi(ends[k], 0, dim);
    } else {
      s0 = clampi(starts[k], 0, dim - 1);
      e0 = ends[k] < -dim ? -1 : clampi(ends[k], -1, dim - 1);
    }
    const std::int64_t n = st > 0 ? std::max<std::int64_t>(0, (e0 - s0 + st - 1) / st)
                                  : std::max<std::int64_t>(0, (s0 - e0 - st - 1) / -st);
    begin[ax] = s0;
    step[ax] = st;
    shape[ax] = n;
  }
  Tensor out = like(x, shape);
  const std::int64_t total = numel(shape);
  if (total == 0) return {std::move(out)};
  const Shape xs = strides_of(x.shape);
  visit(out, [&](auto& dst) {
    const auto& src = same_storage(dst, x);
    Shape idx(r, 0);
    for (std::int64_t o = 0; o < total; ++o) {
      std::int64_t p = 0;
      for (std::size_t k = 0; k < r; ++k) p += (begin[k] + idx[k] * step[k]) * xs[k];
      dst[o] = src[p];
      for (std::size_t k = r; k-- > 0;) {
        if (++idx[k] < shape[k]) break;
        idx[k] = 0;
      }
    }
  });
  return {std::move(out)};
}

std::vector<Tensor> pad(const Inputs& in, const Attributes& a, const Context& ctx) {
  const Tensor& x = float_input(in, 0, "Pad");
  const std::string mode = attr_s(a, "mode", "constant");
  if (mode != "constant") fail("Pad: mode '" + mode + "' is not supported");
  Shape pads;
  float value = 0.0f;
  if (ctx.opset < 11) {
    pads = attr_ints(a, "pads");
    value = attr_f(a, "value", 0.0f);
  } else {
    pads = int_values(input(in, 1, "Pad"));
    if (const Tensor* v = optional_input(in, 2)) value = float_values(*v).at(0);
    if (optional_input(in, 3)) fail("Pad: the axes input is not supported");
  }
  const std::size_t r = x.rank();
  if (pads.size() != 2 * r) fail("Pad: pads length must be twice the rank");
  Shape shape(r);
  for (std::size_t k = 0; k < r; ++k) {
    if (pads[k] < 0 || pads[k + r] < 0) fail("Pad: negative pads are not supported");
    shape[k] = x.shape[k] + pads[k] + pads[k + r];
  }
  Tensor out = Tensor::zeros(shape);
  std::fill(out.f.begin(), out.f.end(), value);
  const Shape os = strides_of(shape);
  Shape idx(r, 0);
  for (std::size_t q = 0; q < x.f.size(); ++q) {
    std::int64_t p = 0;
    for (std::size_t k = 0; k < r; ++k) p += (idx[k] + pads[k]) * os[k];
    out.f[p] = x.f[q];
    for (std::size_t k = r; k-- > 0;) {
      if (++idx[k] < x.shape[k]) break;
      idx[k] = 0;
    }
  }
  return {std::move(out)};
}

std::vector<Tensor> clip(const Inputs& in, const Attributes& a, const Context& ctx) {
  float lo = -std::numeric_limits<float>::infinity();
  float hi = std::numeric_limits<float>::infinity();
  if (ctx.opset < 11) {
    lo = attr_f(a, "min", lo);
    hi = attr_f(a, "max", hi);
  } else {
    if (const Tensor* t = optional_input(in, 1)) lo = float_values(*t).at(0);
    if (const Tensor* t = optional_input(in, 2)) hi = float_values(*t).at(0);
  }
  return unary(in, "Clip", [&](float v) { return std::clamp(v, lo, hi); });
}

std::vector<Tensor> identity(const Inputs& in, const Attributes&, const Context&) {
  return {input(in, 0, "Identity")};
}

}  // namespace

const std::map<std::string, Kernel>& registry() {
  static const std::map<std::string, Kernel> table = {
      {"Conv", conv},
      {"ConvTranspose", conv_transpose},
      {"BatchNormalization", batch_norm},
      {"Relu", [](const Inputs& in, const Attributes&, const Context&) {
         return unary(in, "Relu", [](float v) { return v > 0.0f ? v : 0.0f; });
       }},
      {"LeakyRelu", [](const Inputs& in, const Attributes& a, const Context&) {
         const float alpha = attr_f(a, "alpha", 0.01f);
         return unary(in, "LeakyRelu", [alpha](float v) { return v >= 0.0f ? v : alpha * v; });
       }},
      {"Sigmoid", [](const Inputs& in, const Attributes&, const Context&) {
         return unary(in, "Sigmoid", [](float v) { return 1.0f / (1.0f + std::exp(-v)); });
       }},
      {"Tanh", [](const Inputs& in, const Attributes&, const Context&) {
         return unary(in, "Tanh", [](float v) { return std::tanh(v); });
       }},
      {"Clip", clip},
      {"MaxPool", [](const Inputs& in, const Attributes& a, const Context&) { return pool(in, a, true); }},
      {"AveragePool", [](const Inputs& in, const Attributes& a, const Context&) { return pool(in, a, false); }},
      {"GlobalAveragePool", [](const Inputs& in, const Attributes&, const Context&) { return global_pool(in, false); }},
      {"GlobalMaxPool", [](const Inputs& in, const Attributes&, const Context&) { return global_pool(in, true); }},
      {"Add", [](const Inputs& in, const Attributes&, const Context&) {
         return binary(in, "Add", [](auto x, auto y) { return x + y; });
       }},
      {"Sub", [](const Inputs& in, const Attributes&, const Context&) {
         return binary(in, "Sub", [](auto x, auto y) { return x - y; });
       }},
      {"Mul", [](const Inputs& in, const Attributes&, const Context&) {
         return binary(in, "Mul", [](auto x, auto y) { return x * y; });
       }},
      {"Div", [](const Inputs& in, const Attributes&, const Context&) {
         return binary(in, "Div", [](auto x, auto y) {
           if constexpr (std::is_integral_v<decltype(y)>) {
             if (y == 0) fail("Div: integer division by zero");
           }
           return x / y;
         });
       }},
      {"Concat", concat},
      {"Resize", resize},
      {"Upsample", upsample},
      {"Identity", identity},
      {"Dropout", identity},
      {"Constant", constant},
      {"Shape", shape_op},
      {"Cast", cast},
      {"Reshape", reshape},
      {"Flatten", flatten},
      {"Unsqueeze", unsqueeze},
      {"Squeeze", squeeze},
      {"Gather", gather},
      {"Slice", slice},
      {"Pad", pad},
  };
  return table;
}

}  // namespace dendroweb::onnx::kernels
