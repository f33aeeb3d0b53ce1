#include <Eigen/Dense>
#include <cmath>

#include "tensor_internal.hpp"

namespace fedgai {

using detail::check_rank;
using detail::mark_output;
using detail::needs_grad;
using detail::should_record;

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank("matmul", a, 2);
  check_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0))
    fail("[matmul] inner dimensions " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  {
    CMatMap A(a.values().data(), m, k), B(b.values().data(), k, n);
    MatMap O(out.values().data(), m, n);
    O.noalias() = A * B;
  }
  MacCounter::add(static_cast<uint64_t>(m) * k * n);
  if (should_record({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, bi, oi, m, k, n](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      CMatMap G(g->data(), m, n);
      if (needs_grad(ai.get())) {
        CMatMap B(bi->values.data(), k, n);
        MatMap GA(gm.accum(ai.get()).data(), m, k);
        GA.noalias() += G * B.transpose();
      }
      if (needs_grad(bi.get())) {
        CMatMap A(ai->values.data(), m, k);
        MatMap GB(gm.accum(bi.get()).data(), k, n);
        GB.noalias() += A.transpose() * G;
      }
    });
  }
  return out;
}

Tensor transpose2d(const Tensor& a) {
  check_rank("transpose2d", a, 2);
  const int m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n, m});
  {
    CMatMap A(a.values().data(), m, n);
    MatMap O(out.values().data(), n, m);
    O = A.transpose();
  }
  if (should_record({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, oi, m, n](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(ai.get())) return;
      CMatMap G(g->data(), n, m);
      MatMap GA(gm.accum(ai.get()).data(), m, n);
      GA.noalias() += G.transpose();
    });
  }
  return out;
}

Tensor bias_add_rows(const Tensor& x, const Tensor& b) {
  check_rank("bias_add_rows", x, 2);
  check_rank("bias_add_rows", b, 1);
  if (x.dim(1) != b.dim(0))
    fail("[bias_add_rows] feature dim " + shape_str(x.shape()) + " vs " +
         shape_str(b.shape()));
  const int n = x.dim(0), f = x.dim(1);
  Tensor out = Tensor::zeros({n, f});
  const auto& xv = x.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < f; ++j)
      ov[static_cast<size_t>(r) * f + j] = xv[static_cast<size_t>(r) * f + j] + bv[j];
  if (should_record({&x, &b})) {
    mark_output(out);
    auto xi = x.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, bi, oi, n, f](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      if (needs_grad(xi.get())) {
        auto& gx = gm.accum(xi.get());
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[i];
      }
      if (needs_grad(bi.get())) {
        auto& gb = gm.accum(bi.get());
        for (int r = 0; r < n; ++r)
          for (int j = 0; j < f; ++j) gb[j] += (*g)[static_cast<size_t>(r) * f + j];
      }
    });
  }
  return out;
}

Tensor gram_matrix(const Tensor& x) {
  check_rank("gram_matrix", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int hw = h * w;
  const double inv = 1.0 / (static_cast<double>(c) * h * w);
  Tensor out = Tensor::zeros({n, c, c});
  for (int s = 0; s < n; ++s) {
    CMatMap F(x.values().data() + static_cast<size_t>(s) * c * hw, c, hw);
    MatMap G(out.values().data() + static_cast<size_t>(s) * c * c, c, c);
    G.noalias() = F * F.transpose() * inv;
  }
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi, n, c, hw, inv](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (int s = 0; s < n; ++s) {
        CMatMap G(g->data() + static_cast<size_t>(s) * c * c, c, c);
        CMatMap F(xi->values.data() + static_cast<size_t>(s) * c * hw, c, hw);
        MatMap GX(gx.data() + static_cast<size_t>(s) * c * hw, c, hw);
        GX.noalias() += (G + G.transpose()) * F * inv;
      }
    });
  }
  return out;
}

Tensor spectral_normalize(const Tensor& w, Tensor& u_state) {
  if (w.rank() < 2)
    fail("[spectral_normalize] weight rank must be >= 2, got " +
         shape_str(w.shape()));
  const int rows = w.dim(0);
  const int cols = static_cast<int>(w.size() / rows);
  if (u_state.rank() != 1 || u_state.dim(0) != rows)
    fail("[spectral_normalize] u_state shape " + shape_str(u_state.shape()) +
         " does not match weight rows " + std::to_string(rows));
  constexpr double kSigmaFloor = 1e-12;

  CMatMap W(w.values().data(), rows, cols);
  Eigen::Map<Eigen::VectorXd> u(u_state.values().data(), rows);
  Eigen::VectorXd v = W.transpose() * u;
  double vn = v.norm();
  if (vn > kSigmaFloor) v /= vn;
  Eigen::VectorXd wv = W * v;
  double sigma = wv.norm();
  // Advance the power iteration only on recorded (training) forwards, so
  // no-grad evaluation passes leave model state bit-identical. sigma itself is
  // computed from the pre-update u either way.
  if (sigma > kSigmaFloor && grad_recording_enabled()) u = wv / sigma;
  const double sigma_f = std::max(sigma, kSigmaFloor);

  Tensor out = Tensor::zeros(w.shape());
  const auto& wvv = w.values();
  auto& ov = out.values();
  const double inv = 1.0 / sigma_f;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = wvv[i] * inv;

  if (should_record({&w})) {
    mark_output(out);
    auto wi = w.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([wi, oi, inv](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(wi.get())) return;
      auto& gw = gm.accum(wi.get());
      for (size_t i = 0; i < gw.size(); ++i) gw[i] += (*g)[i] * inv;
    });
  }
  return out;
}

}  // namespace fedgai
