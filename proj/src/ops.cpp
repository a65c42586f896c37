// Copyright 2026 The AFANet Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "afanet/graph.hpp"

namespace afanet {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw_shape(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                shape_str(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw_shape(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
}

struct ConvGeom {
  std::size_t cin, h, w, cout, k, oh, ow;
  int stride, pad;
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& weight, const Tensor* bias, int stride,
                       int padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (stride < 1) throw_invalid("conv2d: stride must be >= 1");
  if (padding < 0) throw_invalid("conv2d: padding must be >= 0");
  ConvGeom g{};
  g.cin = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.cin)
    throw_shape("conv2d: input has " + std::to_string(g.cin) + " channels but weight expects " +
                std::to_string(weight.dim(1)));
  if (weight.dim(3) != g.k) throw_shape("conv2d: kernel must be square");
  if (g.k % 2 == 0) throw_shape("conv2d: kernel size must be odd");
  if (bias) {
    require_rank(*bias, 1, "conv2d bias");
    if (bias->dim(0) != g.cout) throw_shape("conv2d: bias length must equal output channels");
  }
  const long span_h = static_cast<long>(g.h) + 2 * padding - static_cast<long>(g.k);
  const long span_w = static_cast<long>(g.w) + 2 * padding - static_cast<long>(g.k);
  if (span_h < 0 || span_w < 0) throw_shape("conv2d: kernel larger than padded input");
  g.oh = static_cast<std::size_t>(span_h / stride + 1);
  g.ow = static_cast<std::size_t>(span_w / stride + 1);
  return g;
}

// Valid output column range [lo, hi) for kernel column kx.
inline void col_range(const ConvGeom& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  const long off = static_cast<long>(kx) - g.pad;
  long l = 0;
  if (off < 0) l = (-off + g.stride - 1) / g.stride;
  long hmax = (static_cast<long>(g.w) - 1 - off);
  long h = hmax < 0 ? 0 : hmax / g.stride + 1;
  h = std::min<long>(h, static_cast<long>(g.ow));
  lo = static_cast<std::size_t>(std::min<long>(l, h));
  hi = static_cast<std::size_t>(h);
}

void conv_forward(const ConvGeom& g, const float* in, const float* wt, const float* bias,
                  float* out) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t co = 0; co < g.cout; ++co) {
    float* o = out + co * plane;
    std::fill(o, o + plane, bias ? bias[co] : 0.0f);
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const float* ip = in + ci * g.h * g.w;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const float wv = wt[((co * g.cin + ci) * g.k + ky) * g.k + kx];
          std::size_t lo, hi;
          col_range(g, kx, lo, hi);
          const long xoff = static_cast<long>(kx) - g.pad;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.pad;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const float* row = ip + iy * g.w;
            float* orow = o + oy * g.ow;
            if (g.stride == 1) {
              const float* src = row + xoff;
              for (std::size_t ox = lo; ox < hi; ++ox) orow[ox] += wv * src[ox];
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox)
                orow[ox] += wv * row[static_cast<long>(ox) * g.stride + xoff];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeom& g, const float* in, const float* wt, const float* dout,
                   float* din, float* dw, float* db) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t co = 0; co < g.cout; ++co) {
    const float* go = dout + co * plane;
    if (db) {
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += go[i];
      db[co] += static_cast<float>(s);
    }
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const float* ip = in + ci * g.h * g.w;
      float* dip = din ? din + ci * g.h * g.w : nullptr;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const std::size_t widx = ((co * g.cin + ci) * g.k + ky) * g.k + kx;
          const float wv = wt[widx];
          std::size_t lo, hi;
          col_range(g, kx, lo, hi);
          const long xoff = static_cast<long>(kx) - g.pad;
          float acc = 0.0f;
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            const long iy = static_cast<long>(oy) * g.stride + static_cast<long>(ky) - g.pad;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const float* grow = go + oy * g.ow;
            const float* row = ip + iy * g.w;
            if (g.stride == 1) {
              const float* src = row + xoff;
              float racc = 0.0f;
              for (std::size_t ox = lo; ox < hi; ++ox) racc += grow[ox] * src[ox];
              acc += racc;
              if (dip) {
                float* dst = dip + iy * g.w + xoff;
                for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += wv * grow[ox];
              }
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) {
                const long ix = static_cast<long>(ox) * g.stride + xoff;
                acc += grow[ox] * row[ix];
                if (dip) dip[iy * g.w + ix] += wv * grow[ox];
              }
            }
          }
          if (dw) dw[widx] += acc;
        }
      }
    }
  }
}

// Separable align-corners-false sampling table for one axis.
struct Axis {
  std::vector<std::size_t> i0, i1;
  std::vector<float> frac;
};

Axis make_axis(std::size_t in, std::size_t out) {
  Axis a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    a.i0[i] = lo;
    a.i1[i] = hi;
    a.frac[i] = static_cast<float>(src - static_cast<double>(lo));
    if (hi == lo) a.frac[i] = 0.0f;
  }
  return a;
}

}  // namespace

namespace kernels {

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias, int stride,
              int padding) {
  const ConvGeom geo = conv_geometry(input, weight, bias, stride, padding);
  Tensor out({geo.cout, geo.oh, geo.ow});
  conv_forward(geo, input.data().data(), weight.data().data(),
               bias ? bias->data().data() : nullptr, out.data().data());
  return out;
}

Tensor avg_pool2(const Tensor& input) {
  require_rank(input, 3, "avg_pool2");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 || w % 2) throw_shape("avg_pool2: spatial dims must be even, got " +
                                  shape_str(input.shape()));
  Tensor out({c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t x = 0; x < w / 2; ++x)
        out.at(ch, y, x) = 0.25f * (input.at(ch, 2 * y, 2 * x) + input.at(ch, 2 * y, 2 * x + 1) +
                                    input.at(ch, 2 * y + 1, 2 * x) +
                                    input.at(ch, 2 * y + 1, 2 * x + 1));
  return out;
}

Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_rank(input, 3, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw_shape("bilinear_resize: output dims must be >= 1");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const Axis ay = make_axis(h, out_h), ax = make_axis(w, out_w);
  Tensor out({c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < out_h; ++y) {
      const float fy = ay.frac[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const float fx = ax.frac[x];
        const float top = (1.0f - fx) * input.at(ch, ay.i0[y], ax.i0[x]) +
                          fx * input.at(ch, ay.i0[y], ax.i1[x]);
        const float bot = (1.0f - fx) * input.at(ch, ay.i1[y], ax.i0[x]) +
                          fx * input.at(ch, ay.i1[y], ax.i1[x]);
        out.at(ch, y, x) = (1.0f - fy) * top + fy * bot;
      }
    }
  return out;
}

Tensor max_normalize(const Tensor& input) {
  const float m = std::max(ops::kMaxNormalizeEps, input.max_value());
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] / m;
  return out;
}

}  // namespace kernels

namespace ops {

Var conv2d(Graph& g, Var input, Var weight, Var bias, int stride, int padding) {
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weight);
  const Tensor* b = bias.valid() ? &g.value(bias) : nullptr;
  const ConvGeom geo = conv_geometry(x, w, b, stride, padding);
  Tensor out = kernels::conv2d(x, w, b, stride, padding);
  const Var ins[] = {input, weight, bias};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const bool need_x = gr.requires_grad(input);
    const bool need_w = gr.requires_grad(weight);
    const bool need_b = bias.valid() && gr.requires_grad(bias);
    float* din = need_x ? gr.grad_buffer(input).data().data() : nullptr;
    float* dw = need_w ? gr.grad_buffer(weight).data().data() : nullptr;
    float* db = need_b ? gr.grad_buffer(bias).data().data() : nullptr;
    conv_backward(geo, gr.value(input).data().data(), gr.value(weight).data().data(),
                  dout.data().data(), din, dw, db);
  });
}

Var avg_pool2(Graph& g, Var input) {
  Tensor out = kernels::avg_pool2(g.value(input));
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    Tensor& dx = gr.grad_buffer(input);
    const std::size_t c = dout.dim(0), h = dout.dim(1), w = dout.dim(2);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const float v = 0.25f * dout.at(ch, y, x);
          dx.at(ch, 2 * y, 2 * x) += v;
          dx.at(ch, 2 * y, 2 * x + 1) += v;
          dx.at(ch, 2 * y + 1, 2 * x) += v;
          dx.at(ch, 2 * y + 1, 2 * x + 1) += v;
        }
  });
}

Var max_pool2(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  require_rank(x, 3, "max_pool2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) throw_shape("max_pool2: spatial dims must be even");
  Tensor out({c, h / 2, w / 2});
  std::vector<std::uint32_t> arg(out.numel());
  std::size_t o = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t xx = 0; xx < w / 2; ++xx, ++o) {
        std::size_t best = (ch * h + 2 * y) * w + 2 * xx;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t k : cand)
          if (x[k] > x[best]) best = k;
        out[o] = x[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=, arg = std::move(arg)](Graph& gr, Var, const Tensor& dout) {
    Tensor& dx = gr.grad_buffer(input);
    for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += dout[i];
  });
}

Var bilinear_resize(Graph& g, Var input, std::size_t out_h, std::size_t out_w) {
  const Tensor& x = g.value(input);
  Tensor out = kernels::bilinear_resize(x, out_h, out_w);
  const std::size_t h = x.dim(1), w = x.dim(2);
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const Axis ay = make_axis(h, out_h), ax = make_axis(w, out_w);
    Tensor& dx = gr.grad_buffer(input);
    const std::size_t c = dout.dim(0);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < out_h; ++y) {
        const float fy = ay.frac[y];
        for (std::size_t xx = 0; xx < out_w; ++xx) {
          const float fx = ax.frac[xx];
          const float d = dout.at(ch, y, xx);
          dx.at(ch, ay.i0[y], ax.i0[xx]) += (1.0f - fy) * (1.0f - fx) * d;
          dx.at(ch, ay.i0[y], ax.i1[xx]) += (1.0f - fy) * fx * d;
          dx.at(ch, ay.i1[y], ax.i0[xx]) += fy * (1.0f - fx) * d;
          dx.at(ch, ay.i1[y], ax.i1[xx]) += fy * fx * d;
        }
      }
  });
}

Var relu(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const Tensor& xv = gr.value(input);
    Tensor& dx = gr.grad_buffer(input);
    for (std::size_t i = 0; i < xv.numel(); ++i)
      if (xv[i] > 0.0f) dx[i] += dout[i];
  });
}

Var sigmoid(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = 1.0f / (1.0f + std::exp(-x[i]));
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var self, const Tensor& dout) {
    const Tensor& y = gr.value(self);
    Tensor& dx = gr.grad_buffer(input);
    for (std::size_t i = 0; i < y.numel(); ++i) dx[i] += dout[i] * y[i] * (1.0f - y[i]);
  });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same(av, bv, "ew_add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
  const Var ins[] = {a, b};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    gr.accumulate(a, dout);
    gr.accumulate(b, dout);
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same(av, bv, "ew_mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] * bv[i];
  const Var ins[] = {a, b};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const Tensor& x = gr.value(a);
    const Tensor& y = gr.value(b);
    if (gr.requires_grad(a)) {
      Tensor& da = gr.grad_buffer(a);
      for (std::size_t i = 0; i < x.numel(); ++i) da[i] += dout[i] * y[i];
    }
    if (gr.requires_grad(b)) {
      Tensor& db = gr.grad_buffer(b);
      for (std::size_t i = 0; i < x.numel(); ++i) db[i] += dout[i] * x[i];
    }
  });
}

Var scale(Graph& g, Var a, float factor) {
  const Tensor& av = g.value(a);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] * factor;
  const Var ins[] = {a};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    Tensor& da = gr.grad_buffer(a);
    for (std::size_t i = 0; i < dout.numel(); ++i) da[i] += dout[i] * factor;
  });
}

Var linear(Graph& g, Var input, Var weight, Var bias) {
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weight);
  require_rank(x, 1, "linear input");
  require_rank(w, 2, "linear weight");
  const std::size_t m = w.dim(0), n = w.dim(1);
  if (x.dim(0) != n)
    throw_shape("linear: input length " + std::to_string(x.dim(0)) + " vs weight " +
                shape_str(w.shape()));
  if (bias.valid()) {
    const Tensor& b = g.value(bias);
    require_rank(b, 1, "linear bias");
    if (b.dim(0) != m) throw_shape("linear: bias length must equal output length");
  }
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) {
    const float* row = w.data().data() + r * n;
    float acc = 0.0f;
    for (std::size_t c = 0; c < n; ++c) acc += row[c] * x[c];
    out[r] = acc + (bias.valid() ? g.value(bias)[r] : 0.0f);
  }
  const Var ins[] = {input, weight, bias};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const Tensor& xv = gr.value(input);
    const Tensor& wv = gr.value(weight);
    if (gr.requires_grad(weight)) {
      Tensor& dw = gr.grad_buffer(weight);
      for (std::size_t r = 0; r < m; ++r) {
        float* row = dw.data().data() + r * n;
        for (std::size_t c = 0; c < n; ++c) row[c] += dout[r] * xv[c];
      }
    }
    if (gr.requires_grad(input)) {
      Tensor& dx = gr.grad_buffer(input);
      for (std::size_t r = 0; r < m; ++r) {
        const float* row = wv.data().data() + r * n;
        for (std::size_t c = 0; c < n; ++c) dx[c] += dout[r] * row[c];
      }
    }
    if (bias.valid()) gr.accumulate(bias, dout);
  });
}

namespace {

Var concat_axis0(Graph& g, std::span<const Var> parts, std::size_t rank, const char* op) {
  if (parts.empty()) throw_invalid(std::string(op) + ": no parts");
  Shape base = g.value(parts[0]).shape();
  require_rank(g.value(parts[0]), rank, op);
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    const Tensor& t = g.value(p);
    require_rank(t, rank, op);
    for (std::size_t d = 1; d < rank; ++d)
      if (t.dim(d) != base[d])
        throw_shape(std::string(op) + ": trailing dims differ " + shape_str(t.shape()) + " vs " +
                    shape_str(base));
    offsets.push_back(total);
    total += t.dim(0);
  }
  Shape out_shape = base;
  out_shape[0] = total;
  Tensor out(out_shape);
  const std::size_t inner = out.numel() / total;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& t = g.value(parts[i]);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + offsets[i] * inner);
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    for (std::size_t i = 0; i < ins.size(); ++i) {
      if (!gr.requires_grad(ins[i])) continue;
      Tensor& d = gr.grad_buffer(ins[i]);
      const float* src = dout.data().data() + offsets[i] * inner;
      for (std::size_t j = 0; j < d.numel(); ++j) d[j] += src[j];
    }
  });
}

}  // namespace

Var concat_channels(Graph& g, std::span<const Var> parts) {
  return concat_axis0(g, parts, 3, "concat_channels");
}

Var concat_vectors(Graph& g, std::span<const Var> parts) {
  return concat_axis0(g, parts, 1, "concat_vectors");
}

Var slice_channels(Graph& g, Var input, std::size_t begin, std::size_t count) {
  const Tensor& x = g.value(input);
  require_rank(x, 3, "slice_channels");
  if (count == 0 || begin + count > x.dim(0))
    throw_shape("slice_channels: range out of bounds for " + shape_str(x.shape()));
  const std::size_t plane = x.dim(1) * x.dim(2);
  Tensor out({count, x.dim(1), x.dim(2)});
  std::copy(x.data().begin() + begin * plane, x.data().begin() + (begin + count) * plane,
            out.data().begin());
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    Tensor& dx = gr.grad_buffer(input);
    float* dst = dx.data().data() + begin * plane;
    for (std::size_t j = 0; j < dout.numel(); ++j) dst[j] += dout[j];
  });
}

Var max_normalize(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  const auto it = std::max_element(x.data().begin(), x.data().end());
  const std::size_t arg = static_cast<std::size_t>(it - x.data().begin());
  const float m = std::max(kMaxNormalizeEps, *it);
  const bool guarded = !(*it > kMaxNormalizeEps);
  Tensor out = kernels::max_normalize(x);
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var self, const Tensor& dout) {
    const Tensor& y = gr.value(self);
    Tensor& dx = gr.grad_buffer(input);
    double cross = 0.0;
    for (std::size_t i = 0; i < dout.numel(); ++i) {
      dx[i] += dout[i] / m;
      cross += static_cast<double>(dout[i]) * y[i];
    }
    // y = x / x[arg]: the denominator path only exists above the guard.
    if (!guarded) dx[arg] -= static_cast<float>(cross / m);
  });
}

Var reshape(Graph& g, Var input, Shape shape) {
  Tensor out = g.value(input).reshaped(std::move(shape));
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    Tensor& dx = gr.grad_buffer(input);
    for (std::size_t j = 0; j < dout.numel(); ++j) dx[j] += dout[j];
  });
}

Var broadcast_channels(Graph& g, Var input, std::size_t channels) {
  const Tensor& x = g.value(input);
  require_rank(x, 3, "broadcast_channels");
  if (x.dim(0) != 1) throw_shape("broadcast_channels: input must have one channel");
  if (channels == 0) throw_shape("broadcast_channels: channel count must be positive");
  const std::size_t plane = x.numel();
  Tensor out({channels, x.dim(1), x.dim(2)});
  for (std::size_t c = 0; c < channels; ++c)
    std::copy(x.data().begin(), x.data().end(), out.data().begin() + c * plane);
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    Tensor& dx = gr.grad_buffer(input);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t j = 0; j < plane; ++j) dx[j] += dout[c * plane + j];
  });
}

Var channel_weighted_sum(Graph& g, Var features, Var weights) {
  const Tensor& f = g.value(features);
  const Tensor& w = g.value(weights);
  require_rank(f, 3, "channel_weighted_sum features");
  require_rank(w, 1, "channel_weighted_sum weights");
  const std::size_t c = f.dim(0), plane = f.dim(1) * f.dim(2);
  if (w.dim(0) != c)
    throw_shape("channel_weighted_sum: " + std::to_string(w.dim(0)) + " weights for " +
                std::to_string(c) + " channels");
  Tensor out({1, f.dim(1), f.dim(2)});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float wv = w[ch];
    const float* src = f.data().data() + ch * plane;
    for (std::size_t j = 0; j < plane; ++j) out[j] += wv * src[j];
  }
  const Var ins[] = {features, weights};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const Tensor& fv = gr.value(features);
    const Tensor& wv = gr.value(weights);
    if (gr.requires_grad(features)) {
      Tensor& df = gr.grad_buffer(features);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t j = 0; j < plane; ++j) df[ch * plane + j] += wv[ch] * dout[j];
    }
    if (gr.requires_grad(weights)) {
      Tensor& dw = gr.grad_buffer(weights);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t j = 0; j < plane; ++j) s += static_cast<double>(fv[ch * plane + j]) * dout[j];
        dw[ch] += static_cast<float>(s);
      }
    }
  });
}

Var global_avg_pool(Graph& g, Var features) {
  const Tensor& f = g.value(features);
  require_rank(f, 3, "global_avg_pool");
  const std::size_t c = f.dim(0), plane = f.dim(1) * f.dim(2);
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += f[ch * plane + j];
    out[ch] = static_cast<float>(s / static_cast<double>(plane));
  }
  const Var ins[] = {features};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    Tensor& df = gr.grad_buffer(features);
    const float inv = 1.0f / static_cast<float>(plane);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < plane; ++j) df[ch * plane + j] += dout[ch] * inv;
  });
}

Var masked_avg_pool(Graph& g, Var features, Var mask) {
  const Tensor& f = g.value(features);
  const Tensor& m = g.value(mask);
  require_rank(f, 3, "masked_avg_pool features");
  require_rank(m, 3, "masked_avg_pool mask");
  if (m.dim(0) != 1 || m.dim(1) != f.dim(1) || m.dim(2) != f.dim(2))
    throw_shape("masked_avg_pool: mask " + shape_str(m.shape()) + " does not cover features " +
                shape_str(f.shape()));
  constexpr double kEps = 1e-5;
  const std::size_t c = f.dim(0), plane = f.dim(1) * f.dim(2);
  double msum = 0.0;
  for (std::size_t j = 0; j < plane; ++j) msum += m[j];
  const double denom = msum + kEps;
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += static_cast<double>(f[ch * plane + j]) * m[j];
    out[ch] = static_cast<float>(s / denom);
  }
  const Var ins[] = {features, mask};
  return g.record(std::move(out), ins, [=](Graph& gr, Var self, const Tensor& dout) {
    const Tensor& fv = gr.value(features);
    const Tensor& mv = gr.value(mask);
    const Tensor& y = gr.value(self);
    if (gr.requires_grad(features)) {
      Tensor& df = gr.grad_buffer(features);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float s = static_cast<float>(dout[ch] / denom);
        for (std::size_t j = 0; j < plane; ++j) df[ch * plane + j] += s * mv[j];
      }
    }
    if (gr.requires_grad(mask)) {
      // d y_c / d m_j = (F_cj - y_c) / denom
      Tensor& dm = gr.grad_buffer(mask);
      for (std::size_t j = 0; j < plane; ++j) {
        double s = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch)
          s += static_cast<double>(dout[ch]) * (fv[ch * plane + j] - y[ch]);
        dm[j] += static_cast<float>(s / denom);
      }
    }
  });
}

Var cosine_map(Graph& g, Var features, Var proto) {
  const Tensor& f = g.value(features);
  const Tensor& p = g.value(proto);
  require_rank(f, 3, "cosine_map features");
  require_rank(p, 1, "cosine_map prototype");
  const std::size_t c = f.dim(0), plane = f.dim(1) * f.dim(2);
  if (p.dim(0) != c) throw_shape("cosine_map: prototype length must equal channel count");
  constexpr double kEps = 1e-6;
  double pn2 = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) pn2 += static_cast<double>(p[ch]) * p[ch];
  const double pn = std::sqrt(pn2) + kEps;
  std::vector<double> fn(plane), dots(plane);
  Tensor out({1, f.dim(1), f.dim(2)});
  for (std::size_t j = 0; j < plane; ++j) {
    double n2 = 0.0, d = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = f[ch * plane + j];
      n2 += v * v;
      d += v * p[ch];
    }
    fn[j] = std::sqrt(n2) + kEps;
    dots[j] = d;
    out[j] = static_cast<float>(d / (fn[j] * pn));
  }
  const Var ins[] = {features, proto};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const Tensor& fv = gr.value(features);
    const Tensor& pv = gr.value(proto);
    const double pnorm = std::sqrt(pn2);
    std::vector<double> dp(c, 0.0);
    Tensor* df = gr.requires_grad(features) ? &gr.grad_buffer(features) : nullptr;
    for (std::size_t j = 0; j < plane; ++j) {
      const double go = dout[j];
      if (go == 0.0) continue;
      const double fnorm = fn[j] - kEps;
      const double denom = fn[j] * pn;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double fvj = fv[ch * plane + j];
        // s = d / ((|f|+e)(|p|+e))
        const double ds_df = pv[ch] / denom -
                             dots[j] / (denom * fn[j]) * (fnorm > 0 ? fvj / fnorm : 0.0);
        const double ds_dp = fvj / denom -
                             dots[j] / (denom * pn) * (pnorm > 0 ? pv[ch] / pnorm : 0.0);
        if (df) (*df)[ch * plane + j] += static_cast<float>(go * ds_df);
        dp[ch] += go * ds_dp;
      }
    }
    if (gr.requires_grad(proto)) {
      Tensor& dpr = gr.grad_buffer(proto);
      for (std::size_t ch = 0; ch < c; ++ch) dpr[ch] += static_cast<float>(dp[ch]);
    }
  });
}

Var dot(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same(av, bv, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += static_cast<double>(av[i]) * bv[i];
  Tensor out({1}, static_cast<float>(s));
  const Var ins[] = {a, b};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const Tensor& x = gr.value(a);
    const Tensor& y = gr.value(b);
    const float go = dout[0];
    if (gr.requires_grad(a)) {
      Tensor& da = gr.grad_buffer(a);
      for (std::size_t i = 0; i < x.numel(); ++i) da[i] += go * y[i];
    }
    if (gr.requires_grad(b)) {
      Tensor& db = gr.grad_buffer(b);
      for (std::size_t i = 0; i < x.numel(); ++i) db[i] += go * x[i];
    }
  });
}

Var sum(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  Tensor out({1}, static_cast<float>(x.sum()));
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    Tensor& dx = gr.grad_buffer(input);
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dout[0];
  });
}

Var mean(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  const double n = static_cast<double>(x.numel());
  Tensor out({1}, static_cast<float>(x.sum() / n));
  const Var ins[] = {input};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    Tensor& dx = gr.grad_buffer(input);
    const float s = static_cast<float>(dout[0] / n);
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += s;
  });
}

Var bce(Graph& g, Var pred, Var target) {
  const Tensor& p = g.value(pred);
  const Tensor& t = g.value(target);
  require_same(p, t, "bce");
  const double lo = kBceClamp, hi = 1.0 - static_cast<double>(kBceClamp);
  const double n = static_cast<double>(p.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double pc = std::clamp(static_cast<double>(p[i]), lo, hi);
    total -= t[i] * std::log(pc) + (1.0 - t[i]) * std::log(1.0 - pc);
  }
  Tensor out({1}, static_cast<float>(total / n));
  const Var ins[] = {pred, target};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const Tensor& pv = gr.value(pred);
    const Tensor& tv = gr.value(target);
    const double go = dout[0] / n;
    if (gr.requires_grad(pred)) {
      Tensor& dp = gr.grad_buffer(pred);
      for (std::size_t i = 0; i < pv.numel(); ++i) {
        const double raw = pv[i];
        if (raw < lo || raw > hi) continue;
        dp[i] += static_cast<float>(go * (raw - tv[i]) / (raw * (1.0 - raw)));
      }
    }
    if (gr.requires_grad(target)) {
      Tensor& dt = gr.grad_buffer(target);
      for (std::size_t i = 0; i < pv.numel(); ++i) {
        const double pc = std::clamp(static_cast<double>(pv[i]), lo, hi);
        dt[i] += static_cast<float>(-go * (std::log(pc) - std::log(1.0 - pc)));
      }
    }
  });
}

Var softmax_cross_entropy(Graph& g, Var logits, std::size_t target) {
  const Tensor& z = g.value(logits);
  require_rank(z, 1, "softmax_cross_entropy");
  if (target >= z.dim(0)) throw_invalid("softmax_cross_entropy: target index out of range");
  const double zmax = z.max_value();
  double denom = 0.0;
  for (std::size_t i = 0; i < z.numel(); ++i) denom += std::exp(z[i] - zmax);
  const double loss = -(z[target] - zmax - std::log(denom));
  Tensor out({1}, static_cast<float>(loss));
  const Var ins[] = {logits};
  return g.record(std::move(out), ins, [=](Graph& gr, Var, const Tensor& dout) {
    const Tensor& zv = gr.value(logits);
    Tensor& dz = gr.grad_buffer(logits);
    for (std::size_t i = 0; i < zv.numel(); ++i) {
      const double p = std::exp(zv[i] - zmax) / denom;
      dz[i] += static_cast<float>(dout[0] * (p - (i == target ? 1.0 : 0.0)));
    }
  });
}

}  // namespace ops
}  // namespace afanet
