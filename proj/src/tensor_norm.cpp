#include <cmath>

#include "tensor_internal.hpp"

namespace fedgai {

using detail::check_rank;
using detail::mark_output;
using detail::needs_grad;
using detail::should_record;

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor running_mean, Tensor running_var, double momentum,
                    double eps, BnMode mode) {
  check_rank("batch_norm2d", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  for (const Tensor* p :
       std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean,
                                            &running_var})
    if (p->rank() != 1 || p->dim(0) != c)
      fail("[batch_norm2d] per-channel param shape " + shape_str(p->shape()) +
           " vs channels " + std::to_string(c));
  const int m = n * h * w;  // population size per channel
  const size_t hw = static_cast<size_t>(h) * w;

  std::vector<double> mean(c), var(c);
  if (mode == BnMode::kEval) {
    mean = running_mean.values();
    var = running_var.values();
  } else {
    const auto& xv = x.values();
    for (int ci = 0; ci < c; ++ci) {
      double s = 0.0;
      for (int s0 = 0; s0 < n; ++s0) {
        const double* xc = xv.data() + (static_cast<size_t>(s0) * c + ci) * hw;
        for (size_t p = 0; p < hw; ++p) s += xc[p];
      }
      mean[ci] = s / m;
      double v = 0.0;
      for (int s0 = 0; s0 < n; ++s0) {
        const double* xc = xv.data() + (static_cast<size_t>(s0) * c + ci) * hw;
        for (size_t p = 0; p < hw; ++p) {
          const double d = xc[p] - mean[ci];
          v += d * d;
        }
      }
      var[ci] = v / m;
    }
    if (mode == BnMode::kTrain) {
      auto& rm = running_mean.values();
      auto& rv = running_var.values();
      for (int ci = 0; ci < c; ++ci) {
        rm[ci] = (1.0 - momentum) * rm[ci] + momentum * mean[ci];
        rv[ci] = (1.0 - momentum) * rv[ci] + momentum * var[ci];
      }
    }
  }

  std::vector<double> invstd(c);
  for (int ci = 0; ci < c; ++ci) invstd[ci] = 1.0 / std::sqrt(var[ci] + eps);

  Tensor out = Tensor::zeros(x.shape());
  {
    const auto& xv = x.values();
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    auto& ov = out.values();
    for (int s0 = 0; s0 < n; ++s0)
      for (int ci = 0; ci < c; ++ci) {
        const double* xc = xv.data() + (static_cast<size_t>(s0) * c + ci) * hw;
        double* oc = ov.data() + (static_cast<size_t>(s0) * c + ci) * hw;
        const double a = gv[ci] * invstd[ci];
        const double b = bv[ci] - a * mean[ci];
        for (size_t p = 0; p < hw; ++p) oc[p] = a * xc[p] + b;
      }
  }

  if (should_record({&x, &gamma, &beta})) {
    mark_output(out);
    auto xi = x.impl_ptr(), gi = gamma.impl_ptr(), bi = beta.impl_ptr(),
         oi = out.impl_ptr();
    const bool batch_stats = mode != BnMode::kEval;
    auto mean_s = std::make_shared<std::vector<double>>(std::move(mean));
    auto invstd_s = std::make_shared<std::vector<double>>(std::move(invstd));
    Tape::current()->push([xi, gi, bi, oi, mean_s, invstd_s, n, c, hw, m,
                           batch_stats](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      std::vector<double>* gx = needs_grad(xi.get()) ? &gm.accum(xi.get()) : nullptr;
      std::vector<double>* gg = needs_grad(gi.get()) ? &gm.accum(gi.get()) : nullptr;
      std::vector<double>* gb = needs_grad(bi.get()) ? &gm.accum(bi.get()) : nullptr;
      if (!gx && !gg && !gb) return;
      for (int ci = 0; ci < c; ++ci) {
        const double mu = (*mean_s)[ci], is = (*invstd_s)[ci];
        // Per-channel sums of dy and dy*xhat.
        double sg = 0.0, sgx = 0.0;
        for (int s0 = 0; s0 < n; ++s0) {
          const double* gc = g->data() + (static_cast<size_t>(s0) * c + ci) * hw;
          const double* xc =
              xi->values.data() + (static_cast<size_t>(s0) * c + ci) * hw;
          for (size_t p = 0; p < hw; ++p) {
            sg += gc[p];
            sgx += gc[p] * (xc[p] - mu) * is;
          }
        }
        if (gg) (*gg)[ci] += sgx;
        if (gb) (*gb)[ci] += sg;
        if (gx) {
          const double gamma_is = gi->values[ci] * is;
          const double mg = sg / m, mgx = sgx / m;
          for (int s0 = 0; s0 < n; ++s0) {
            const double* gc = g->data() + (static_cast<size_t>(s0) * c + ci) * hw;
            const double* xc =
                xi->values.data() + (static_cast<size_t>(s0) * c + ci) * hw;
            double* gxc = gx->data() + (static_cast<size_t>(s0) * c + ci) * hw;
            if (batch_stats) {
              for (size_t p = 0; p < hw; ++p) {
                const double xhat = (xc[p] - mu) * is;
                gxc[p] += gamma_is * (gc[p] - mg - xhat * mgx);
              }
            } else {
              for (size_t p = 0; p < hw; ++p) gxc[p] += gamma_is * gc[p];
            }
          }
        }
      }
    });
  }
  return out;
}

std::pair<Tensor, Tensor> channel_mean_std(const Tensor& x) {
  check_rank("channel_mean_std", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int m = n * h * w;
  const size_t hw = static_cast<size_t>(h) * w;
  Tensor mean = Tensor::zeros({c});
  Tensor sd = Tensor::zeros({c});
  const auto& xv = x.values();
  for (int ci = 0; ci < c; ++ci) {
    double s = 0.0;
    for (int s0 = 0; s0 < n; ++s0) {
      const double* xc = xv.data() + (static_cast<size_t>(s0) * c + ci) * hw;
      for (size_t p = 0; p < hw; ++p) s += xc[p];
    }
    const double mu = s / m;
    double v = 0.0;
    for (int s0 = 0; s0 < n; ++s0) {
      const double* xc = xv.data() + (static_cast<size_t>(s0) * c + ci) * hw;
      for (size_t p = 0; p < hw; ++p) {
        const double d = xc[p] - mu;
        v += d * d;
      }
    }
    mean.values()[ci] = mu;
    sd.values()[ci] = std::sqrt(v / m);
  }
  if (should_record({&x})) {
    mark_output(mean);
    mark_output(sd);
    auto xi = x.impl_ptr(), mi = mean.impl_ptr(), si = sd.impl_ptr();
    Tape::current()->push([xi, mi, si, n, c, hw, m](GradMap& gm) {
      if (!needs_grad(xi.get())) return;
      auto* gmu = gm.find(mi.get());
      auto* gsd = gm.find(si.get());
      if (!gmu && !gsd) return;
      auto& gx = gm.accum(xi.get());
      for (int ci = 0; ci < c; ++ci) {
        const double mu = mi->values[ci];
        const double sd_v = std::max(si->values[ci], 1e-12);
        const double a = gmu ? (*gmu)[ci] / m : 0.0;
        const double b = gsd ? (*gsd)[ci] / (m * sd_v) : 0.0;
        for (int s0 = 0; s0 < n; ++s0) {
          const double* xc =
              xi->values.data() + (static_cast<size_t>(s0) * c + ci) * hw;
          double* gxc = gx.data() + (static_cast<size_t>(s0) * c + ci) * hw;
          for (size_t p = 0; p < hw; ++p) gxc[p] += a + b * (xc[p] - mu);
        }
      }
    });
  }
  return {mean, sd};
}

Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  check_rank("channel_affine", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  for (const Tensor* p : {&scale, &shift})
    if (p->rank() != 1 || p->dim(0) != c)
      fail("[channel_affine] per-channel param shape " + shape_str(p->shape()) +
           " vs channels " + std::to_string(c));
  const size_t hw = static_cast<size_t>(h) * w;
  Tensor out = Tensor::zeros(x.shape());
  {
    const auto& xv = x.values();
    const auto& sv = scale.values();
    const auto& tv = shift.values();
    auto& ov = out.values();
    for (int s0 = 0; s0 < n; ++s0)
      for (int ci = 0; ci < c; ++ci) {
        const double* xc = xv.data() + (static_cast<size_t>(s0) * c + ci) * hw;
        double* oc = ov.data() + (static_cast<size_t>(s0) * c + ci) * hw;
        for (size_t p = 0; p < hw; ++p) oc[p] = sv[ci] * xc[p] + tv[ci];
      }
  }
  if (should_record({&x, &scale, &shift})) {
    mark_output(out);
    auto xi = x.impl_ptr(), si = scale.impl_ptr(), ti = shift.impl_ptr(),
         oi = out.impl_ptr();
    Tape::current()->push([xi, si, ti, oi, n, c, hw](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      std::vector<double>* gx = needs_grad(xi.get()) ? &gm.accum(xi.get()) : nullptr;
      std::vector<double>* gs = needs_grad(si.get()) ? &gm.accum(si.get()) : nullptr;
      std::vector<double>* gt = needs_grad(ti.get()) ? &gm.accum(ti.get()) : nullptr;
      for (int s0 = 0; s0 < n; ++s0)
        for (int ci = 0; ci < c; ++ci) {
          const double* gc = g->data() + (static_cast<size_t>(s0) * c + ci) * hw;
          const double* xc =
              xi->values.data() + (static_cast<size_t>(s0) * c + ci) * hw;
          if (gx) {
            double* gxc = gx->data() + (static_cast<size_t>(s0) * c + ci) * hw;
            const double sc = si->values[ci];
            for (size_t p = 0; p < hw; ++p) gxc[p] += gc[p] * sc;
          }
          if (gs) {
            double acc = 0.0;
            for (size_t p = 0; p < hw; ++p) acc += gc[p] * xc[p];
            (*gs)[ci] += acc;
          }
          if (gt) {
            double acc = 0.0;
            for (size_t p = 0; p < hw; ++p) acc += gc[p];
            (*gt)[ci] += acc;
          }
        }
    });
  }
  return out;
}

}  // namespace fedgai
