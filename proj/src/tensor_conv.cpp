#include <Eigen/Dense>
#include <algorithm>
#include <cstring>

#include "tensor_internal.hpp"

namespace fedgai {

using detail::check_rank;
using detail::mark_output;
using detail::needs_grad;
using detail::prod;
using detail::should_record;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

struct ConvDims {
  int n, cin, h, w, cout, kh, kw, ho, wo;
};

ConvDims conv_dims(const char* op, const Tensor& x, const Tensor& w, int stride,
                   int pad) {
  check_rank(op, x, 4);
  check_rank(op, w, 4);
  if (x.dim(1) != w.dim(1))
    fail(std::string("[") + op + "] input channels " + shape_str(x.shape()) +
         " vs kernel " + shape_str(w.shape()));
  if (stride < 1) fail(std::string("[") + op + "] stride must be >= 1");
  ConvDims d;
  d.n = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.ho < 1 || d.wo < 1)
    fail(std::string("[") + op + "] kernel " + shape_str(w.shape()) +
         " too large for input " + shape_str(x.shape()));
  return d;
}

// Gathers the patch rows for output positions [p0, p0+t) of one sample into
// cols (cin*kh*kw, t).
void im2col_tile(const double* x, const ConvDims& d, int stride, int pad, int p0,
                 int t, double* cols) {
  for (int ci = 0; ci < d.cin; ++ci) {
    const double* xc = x + static_cast<size_t>(ci) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        double* row =
            cols + (static_cast<size_t>(ci) * d.kh * d.kw + ky * d.kw + kx) * t;
        for (int p = 0; p < t; ++p) {
          const int oh = (p0 + p) / d.wo, ow = (p0 + p) % d.wo;
          const int ih = oh * stride - pad + ky, iw = ow * stride - pad + kx;
          row[p] = (ih >= 0 && ih < d.h && iw >= 0 && iw < d.w)
                       ? xc[static_cast<size_t>(ih) * d.w + iw]
                       : 0.0;
        }
      }
  }
}

void col2im_tile(const double* cols, const ConvDims& d, int stride, int pad,
                 int p0, int t, double* gx) {
  for (int ci = 0; ci < d.cin; ++ci) {
    double* gc = gx + static_cast<size_t>(ci) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky)
      for (int kx = 0; kx < d.kw; ++kx) {
        const double* row =
            cols + (static_cast<size_t>(ci) * d.kh * d.kw + ky * d.kw + kx) * t;
        for (int p = 0; p < t; ++p) {
          const int oh = (p0 + p) / d.wo, ow = (p0 + p) % d.wo;
          const int ih = oh * stride - pad + ky, iw = ow * stride - pad + kx;
          if (ih >= 0 && ih < d.h && iw >= 0 && iw < d.w)
            gc[static_cast<size_t>(ih) * d.w + iw] += row[p];
        }
      }
  }
}

int tile_width(const ConvDims& d) {
  const int patch = d.cin * d.kh * d.kw;
  const int64_t budget = 1 << 21;  // ~16 MB of scratch doubles
  int t = static_cast<int>(std::max<int64_t>(int64_t{1}, budget / patch));
  return std::min(t, d.ho * d.wo);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
  const ConvDims d = conv_dims("conv2d", x, w, stride, pad);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != d.cout))
    fail("[conv2d] bias shape " + shape_str(b.shape()) + " vs out channels " +
         std::to_string(d.cout));
  Tensor out = Tensor::zeros({d.n, d.cout, d.ho, d.wo});
  const int patch = d.cin * d.kh * d.kw;
  const int hwo = d.ho * d.wo;
  const int t_max = tile_width(d);
  std::vector<double> cols(static_cast<size_t>(patch) * t_max);
  CMatMap W(w.values().data(), d.cout, patch);
  for (int s = 0; s < d.n; ++s) {
    MatMap O(out.values().data() + static_cast<size_t>(s) * d.cout * hwo, d.cout,
             hwo);
    for (int p0 = 0; p0 < hwo; p0 += t_max) {
      const int t = std::min(t_max, hwo - p0);
      im2col_tile(x.values().data() + static_cast<size_t>(s) * d.cin * d.h * d.w,
                  d, stride, pad, p0, t, cols.data());
      O.middleCols(p0, t).noalias() = W * CMatMap(cols.data(), patch, t);
    }
  }
  if (b.defined()) {
    auto& ov = out.values();
    const auto& bv = b.values();
    for (int s = 0; s < d.n; ++s)
      for (int co = 0; co < d.cout; ++co) {
        double bias = bv[co];
        double* row = ov.data() + (static_cast<size_t>(s) * d.cout + co) * hwo;
        for (int p = 0; p < hwo; ++p) row[p] += bias;
      }
  }
  MacCounter::add(static_cast<uint64_t>(d.n) * d.cout * d.cin * d.kh * d.kw *
                  hwo);

  if (should_record({&x, &w, &b})) {
    mark_output(out);
    auto xi = x.impl_ptr(), wi = w.impl_ptr(), oi = out.impl_ptr();
    auto bi = b.defined() ? b.impl_ptr() : nullptr;
    Tape::current()->push([xi, wi, bi, oi, d, stride, pad](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      const int patch = d.cin * d.kh * d.kw;
      const int hwo = d.ho * d.wo;
      const int t_max = tile_width(d);
      std::vector<double> cols(static_cast<size_t>(patch) * t_max);
      CMatMap W(wi->values.data(), d.cout, patch);
      std::vector<double>* gw = needs_grad(wi.get()) ? &gm.accum(wi.get()) : nullptr;
      std::vector<double>* gx = needs_grad(xi.get()) ? &gm.accum(xi.get()) : nullptr;
      for (int s = 0; s < d.n; ++s) {
        CMatMap G(g->data() + static_cast<size_t>(s) * d.cout * hwo, d.cout, hwo);
        for (int p0 = 0; p0 < hwo; p0 += t_max) {
          const int t = std::min(t_max, hwo - p0);
          if (gw) {
            im2col_tile(
                xi->values.data() + static_cast<size_t>(s) * d.cin * d.h * d.w, d,
                stride, pad, p0, t, cols.data());
            MatMap GW(gw->data(), d.cout, patch);
            GW.noalias() += G.middleCols(p0, t) * CMatMap(cols.data(), patch, t).transpose();
          }
          if (gx) {
            MatMap DC(cols.data(), patch, t);
            DC.noalias() = W.transpose() * G.middleCols(p0, t);
            col2im_tile(cols.data(), d, stride, pad, p0, t,
                        gx->data() + static_cast<size_t>(s) * d.cin * d.h * d.w);
          }
        }
      }
      if (bi && needs_grad(bi.get())) {
        auto& gb = gm.accum(bi.get());
        for (int s = 0; s < d.n; ++s)
          for (int co = 0; co < d.cout; ++co) {
            const double* row = g->data() + (static_cast<size_t>(s) * d.cout + co) * hwo;
            double acc = 0.0;
            for (int p = 0; p < hwo; ++p) acc += row[p];
            gb[co] += acc;
          }
      }
    });
  }
  return out;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_rank("depthwise_conv2d", x, 4);
  check_rank("depthwise_conv2d", w, 3);
  if (x.dim(1) != w.dim(0))
    fail("[depthwise_conv2d] channels " + shape_str(x.shape()) + " vs kernel " +
         shape_str(w.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wdt = x.dim(3);
  const int kh = w.dim(1), kw = w.dim(2);
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wdt + 2 * pad - kw) / stride + 1;
  if (ho < 1 || wo < 1)
    fail("[depthwise_conv2d] kernel too large for input " + shape_str(x.shape()));
  Tensor out = Tensor::zeros({n, c, ho, wo});
  const auto& xv = x.values();
  const auto& wv = w.values();
  auto& ov = out.values();
  for (int s = 0; s < n; ++s)
    for (int ci = 0; ci < c; ++ci) {
      const double* xc = xv.data() + (static_cast<size_t>(s) * c + ci) * h * wdt;
      const double* wc = wv.data() + static_cast<size_t>(ci) * kh * kw;
      double* oc = ov.data() + (static_cast<size_t>(s) * c + ci) * ho * wo;
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          double acc = 0.0;
          for (int ky = 0; ky < kh; ++ky) {
            const int ih = oh * stride - pad + ky;
            if (ih < 0 || ih >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int iw = ow * stride - pad + kx;
              if (iw < 0 || iw >= wdt) continue;
              acc += wc[ky * kw + kx] * xc[static_cast<size_t>(ih) * wdt + iw];
            }
          }
          oc[static_cast<size_t>(oh) * wo + ow] = acc;
        }
    }
  MacCounter::add(static_cast<uint64_t>(n) * c * kh * kw * ho * wo);

  if (should_record({&x, &w})) {
    mark_output(out);
    auto xi = x.impl_ptr(), wi = w.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, wi, oi, n, c, h, wdt, kh, kw, ho, wo, stride,
                           pad](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      std::vector<double>* gw = needs_grad(wi.get()) ? &gm.accum(wi.get()) : nullptr;
      std::vector<double>* gx = needs_grad(xi.get()) ? &gm.accum(xi.get()) : nullptr;
      if (!gw && !gx) return;
      for (int s = 0; s < n; ++s)
        for (int ci = 0; ci < c; ++ci) {
          const double* xc =
              xi->values.data() + (static_cast<size_t>(s) * c + ci) * h * wdt;
          const double* wc = wi->values.data() + static_cast<size_t>(ci) * kh * kw;
          const double* gc = g->data() + (static_cast<size_t>(s) * c + ci) * ho * wo;
          double* gwc = gw ? gw->data() + static_cast<size_t>(ci) * kh * kw : nullptr;
          double* gxc =
              gx ? gx->data() + (static_cast<size_t>(s) * c + ci) * h * wdt : nullptr;
          for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow) {
              const double go = gc[static_cast<size_t>(oh) * wo + ow];
              if (go == 0.0) continue;
              for (int ky = 0; ky < kh; ++ky) {
                const int ih = oh * stride - pad + ky;
                if (ih < 0 || ih >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int iw = ow * stride - pad + kx;
                  if (iw < 0 || iw >= wdt) continue;
                  if (gwc) gwc[ky * kw + kx] += go * xc[static_cast<size_t>(ih) * wdt + iw];
                  if (gxc) gxc[static_cast<size_t>(ih) * wdt + iw] += go * wc[ky * kw + kx];
                }
              }
            }
        }
    });
  }
  return out;
}

Tensor depthwise_separable_conv2d(const Tensor& x, const Tensor& w_dw,
                                  const Tensor& w_pw, const Tensor& b,
                                  int stride, int pad) {
  Tensor mid = depthwise_conv2d(x, w_dw, stride, pad);
  return conv2d(mid, w_pw, b, 1, 0);
}

Tensor nearest_upsample2x(const Tensor& x) {
  check_rank("nearest_upsample2x", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out = Tensor::zeros({n, c, 2 * h, 2 * w});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int s = 0; s < n * c; ++s) {
    const double* xc = xv.data() + static_cast<size_t>(s) * h * w;
    double* oc = ov.data() + static_cast<size_t>(s) * 4 * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double v = xc[static_cast<size_t>(i) * w + j];
        double* o = oc + (static_cast<size_t>(2 * i) * 2 * w + 2 * j);
        o[0] = v;
        o[1] = v;
        o[2 * w] = v;
        o[2 * w + 1] = v;
      }
  }
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi, n, c, h, w](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (int s = 0; s < n * c; ++s) {
        double* gc = gx.data() + static_cast<size_t>(s) * h * w;
        const double* go = g->data() + static_cast<size_t>(s) * 4 * h * w;
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) {
            const double* o = go + (static_cast<size_t>(2 * i) * 2 * w + 2 * j);
            gc[static_cast<size_t>(i) * w + j] +=
                o[0] + o[1] + o[2 * w] + o[2 * w + 1];
          }
      }
    });
  }
  return out;
}

Tensor maxpool2x2(const Tensor& x) {
  check_rank("maxpool2x2", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2)
    fail("[maxpool2x2] spatial dims must be even, got " + shape_str(x.shape()));
  const int ho = h / 2, wo = w / 2;
  Tensor out = Tensor::zeros({n, c, ho, wo});
  // Argmax positions saved for routing gradients; first-of-ties wins.
  auto argmax = std::make_shared<std::vector<int32_t>>(out.values().size());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int s = 0; s < n * c; ++s) {
    const double* xc = xv.data() + static_cast<size_t>(s) * h * w;
    double* oc = ov.data() + static_cast<size_t>(s) * ho * wo;
    int32_t* am = argmax->data() + static_cast<size_t>(s) * ho * wo;
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        const int base = 2 * i * w + 2 * j;
        const int cand[4] = {base, base + 1, base + w, base + w + 1};
        int best = cand[0];
        for (int k = 1; k < 4; ++k)
          if (xc[cand[k]] > xc[best]) best = cand[k];
        oc[static_cast<size_t>(i) * wo + j] = xc[best];
        am[static_cast<size_t>(i) * wo + j] = best;
      }
  }
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi, argmax, n, c, h, w, ho, wo](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (int s = 0; s < n * c; ++s) {
        double* gc = gx.data() + static_cast<size_t>(s) * h * w;
        const double* go = g->data() + static_cast<size_t>(s) * ho * wo;
        const int32_t* am = argmax->data() + static_cast<size_t>(s) * ho * wo;
        for (int p = 0; p < ho * wo; ++p) gc[am[p]] += go[p];
      }
    });
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("[concat_channels] no inputs");
  for (const Tensor& p : parts) check_rank("concat_channels", p, 4);
  const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int ctot = 0;
  for (const Tensor& p : parts) {
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w)
      fail("[concat_channels] incompatible shapes " + shape_str(parts[0].shape()) +
           " vs " + shape_str(p.shape()));
    ctot += p.dim(1);
  }
  Tensor out = Tensor::zeros({n, ctot, h, w});
  auto& ov = out.values();
  const size_t hw = static_cast<size_t>(h) * w;
  for (int s = 0; s < n; ++s) {
    size_t coff = 0;
    for (const Tensor& p : parts) {
      const size_t pc = static_cast<size_t>(p.dim(1));
      std::memcpy(ov.data() + (static_cast<size_t>(s) * ctot + coff) * hw,
                  p.values().data() + static_cast<size_t>(s) * pc * hw,
                  pc * hw * sizeof(double));
      coff += pc;
    }
  }
  bool rec = false;
  for (const Tensor& p : parts)
    if (should_record({&p})) rec = true;
  if (rec) {
    mark_output(out);
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(parts.size());
    for (const Tensor& p : parts) impls.push_back(p.impl_ptr());
    auto oi = out.impl_ptr();
    Tape::current()->push([impls, oi, n, ctot, hw](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      for (int s = 0; s < n; ++s) {
        size_t coff = 0;
        for (const auto& pi : impls) {
          const size_t pc = pi->shape[1];
          if (needs_grad(pi.get())) {
            auto& gp = gm.accum(pi.get());
            const double* src = g->data() + (static_cast<size_t>(s) * ctot + coff) * hw;
            double* dst = gp.data() + static_cast<size_t>(s) * pc * hw;
            for (size_t i = 0; i < pc * hw; ++i) dst[i] += src[i];
          }
          coff += pc;
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<int> new_shape) {
  if (prod(new_shape) != x.size())
    fail("[reshape] cannot view " + shape_str(x.shape()) + " as " +
         shape_str(new_shape));
  Tensor out = Tensor::zeros(new_shape);
  out.values() = x.values();
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[i];
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  check_rank("global_avg_pool", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  Tensor out = Tensor::zeros({n, c});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int s = 0; s < n * c; ++s) {
    const double* xc = xv.data() + static_cast<size_t>(s) * h * w;
    double acc = 0.0;
    for (int p = 0; p < h * w; ++p) acc += xc[p];
    ov[s] = acc * inv;
  }
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi, n, c, h, w, inv](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (int s = 0; s < n * c; ++s) {
        const double go = (*g)[s] * inv;
        double* gc = gx.data() + static_cast<size_t>(s) * h * w;
        for (int p = 0; p < h * w; ++p) gc[p] += go;
      }
    });
  }
  return out;
}

}  // namespace fedgai
