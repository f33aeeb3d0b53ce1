#include "fedgai/tensor.hpp"

#include <atomic>
#include <cmath>

#include "tensor_internal.hpp"

namespace fedgai {

using detail::check_rank;
using detail::check_same_shape;
using detail::mark_output;
using detail::needs_grad;
using detail::prod;
using detail::should_record;

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values.assign(static_cast<size_t>(prod(impl->shape)), 0.0);
  impl->requires_grad = requires_grad;
  const_cast<std::shared_ptr<TensorImpl>&>(t.impl_ptr()) = impl;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.values()) x = v;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> vals,
                    bool requires_grad) {
  if (prod(shape) != static_cast<int64_t>(vals.size()))
    fail("[tensor] value count " + std::to_string(vals.size()) +
         " does not match shape " + shape_str(shape));
  Tensor t = zeros(std::move(shape), requires_grad);
  t.values() = std::move(vals);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) fail("[tensor] item() on non-scalar " + shape_str(shape()));
  return values()[0];
}

const std::vector<double>& Tensor::grad() const {
  static const std::vector<double> kEmpty;
  return impl_ && !impl_->grad.empty() ? impl_->grad : kEmpty;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor t = zeros(shape());
  t.values() = values();
  return t;
}

// ---------------------------------------------------------------------------
// Tape / GradMap / guards
// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_current_tape = nullptr;
thread_local int g_no_grad_depth = 0;
std::atomic<uint64_t> g_tape_counter{0};

thread_local bool g_mac_on = false;
thread_local uint64_t g_mac_count = 0;
}  // namespace

std::vector<double>* GradMap::find(const TensorImpl* t) {
  auto it = map_.find(t);
  return it == map_.end() ? nullptr : &it->second;
}

std::vector<double>& GradMap::accum(const TensorImpl* t) {
  auto it = map_.find(t);
  if (it == map_.end())
    it = map_.emplace(t, std::vector<double>(t->values.size(), 0.0)).first;
  return it->second;
}

void GradMap::seed(const TensorImpl* t, std::vector<double> g) {
  map_[t] = std::move(g);
}

Tape::Tape() : id_(++g_tape_counter), prev_(g_current_tape) {
  g_current_tape = this;
}

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::push(std::function<void(GradMap&)> fn) {
  records_.push_back({std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    fail("[backward] loss must be a scalar, got " +
         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  GradMap gm;
  gm.seed(loss.impl(), {1.0});
  for (auto it = records_.rbegin(); it != records_.rend(); ++it)
    it->backward(gm);
  for (const auto& [impl, buf] : gm.entries()) {
    auto* t = const_cast<TensorImpl*>(impl);
    if (!t->requires_grad || t->tape_id == id_) continue;  // interior node
    if (t->grad.empty()) t->grad.assign(t->values.size(), 0.0);
    for (size_t i = 0; i < buf.size(); ++i) t->grad[i] += buf[i];
  }
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_recording_enabled() { return g_no_grad_depth == 0; }

void MacCounter::enable() {
  g_mac_on = true;
  g_mac_count = 0;
}

uint64_t MacCounter::disable() {
  g_mac_on = false;
  return g_mac_count;
}

void MacCounter::add(uint64_t n) {
  if (g_mac_on) g_mac_count += n;
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (should_record({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, bi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      if (needs_grad(ai.get())) {
        auto& ga = gm.accum(ai.get());
        for (size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i];
      }
      if (needs_grad(bi.get())) {
        auto& gb = gm.accum(bi.get());
        for (size_t i = 0; i < g->size(); ++i) gb[i] += (*g)[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (should_record({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, bi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      if (needs_grad(ai.get())) {
        auto& ga = gm.accum(ai.get());
        for (size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i];
      }
      if (needs_grad(bi.get())) {
        auto& gb = gm.accum(bi.get());
        for (size_t i = 0; i < g->size(); ++i) gb[i] -= (*g)[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (should_record({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, bi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      if (needs_grad(ai.get())) {
        auto& ga = gm.accum(ai.get());
        for (size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i] * bi->values[i];
      }
      if (needs_grad(bi.get())) {
        auto& gb = gm.accum(bi.get());
        for (size_t i = 0; i < g->size(); ++i) gb[i] += (*g)[i] * ai->values[i];
      }
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / bv[i];
  if (should_record({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, bi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      if (needs_grad(ai.get())) {
        auto& ga = gm.accum(ai.get());
        for (size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i] / bi->values[i];
      }
      if (needs_grad(bi.get())) {
        auto& gb = gm.accum(bi.get());
        for (size_t i = 0; i < g->size(); ++i) {
          double bb = bi->values[i];
          gb[i] -= (*g)[i] * ai->values[i] / (bb * bb);
        }
      }
    });
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
  if (should_record({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, oi, s](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(ai.get())) return;
      auto& ga = gm.accum(ai.get());
      for (size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i] * s;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + s;
  if (should_record({&a})) {
    mark_output(out);
    auto ai = a.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(ai.get())) return;
      auto& ga = gm.accum(ai.get());
      for (size_t i = 0; i < g->size(); ++i) ga[i] += (*g)[i];
    });
  }
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i)
    ov[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi, slope](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (size_t i = 0; i < g->size(); ++i)
        gx[i] += (*g)[i] * (xi->values[i] > 0.0 ? 1.0 : slope);
    });
  }
  return out;
}

Tensor tanh_t(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (size_t i = 0; i < g->size(); ++i) {
        double y = oi->values[i];
        gx[i] += (*g)[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

Tensor sigmoid_t(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (size_t i = 0; i < g->size(); ++i) {
        double y = oi->values[i];
        gx[i] += (*g)[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor log_t(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(xv[i]);
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (size_t i = 0; i < g->size(); ++i) gx[i] += (*g)[i] / xi->values[i];
    });
  }
  return out;
}

Tensor clamp_t(const Tensor& x, double lo, double hi) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i)
    ov[i] = xv[i] < lo ? lo : (xv[i] > hi ? hi : xv[i]);
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi, lo, hi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (size_t i = 0; i < g->size(); ++i) {
        double v = xi->values[i];
        if (v > lo && v < hi) gx[i] += (*g)[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and objectives
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[0];
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s * inv);
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi, inv](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*g)[0] * inv;
    });
  }
  return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape("mse", a, b);
  const double inv = 1.0 / static_cast<double>(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    double d = av[i] - bv[i];
    s += d * d;
  }
  Tensor out = Tensor::scalar(s * inv);
  if (should_record({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, bi, oi, inv](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      const double c = 2.0 * (*g)[0] * inv;
      if (needs_grad(ai.get())) {
        auto& ga = gm.accum(ai.get());
        for (size_t i = 0; i < ga.size(); ++i)
          ga[i] += c * (ai->values[i] - bi->values[i]);
      }
      if (needs_grad(bi.get())) {
        auto& gb = gm.accum(bi.get());
        for (size_t i = 0; i < gb.size(); ++i)
          gb[i] -= c * (ai->values[i] - bi->values[i]);
      }
    });
  }
  return out;
}

Tensor frobenius_norm_sq(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  Tensor out = Tensor::scalar(s);
  if (should_record({&x})) {
    mark_output(out);
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([xi, oi](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g || !needs_grad(xi.get())) return;
      auto& gx = gm.accum(xi.get());
      for (size_t i = 0; i < gx.size(); ++i)
        gx[i] += 2.0 * (*g)[0] * xi->values[i];
    });
  }
  return out;
}

namespace {
constexpr double kCosNormFloor = 1e-12;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  check_same_shape("cosine_similarity", a, b);
  if (a.rank() != 1 && a.rank() != 2)
    fail("[cosine_similarity] expected rank 1 or 2, got " + shape_str(a.shape()));
  const int n = a.rank() == 2 ? a.dim(0) : 1;
  const int d = a.rank() == 2 ? a.dim(1) : a.dim(0);
  const auto& av = a.values();
  const auto& bv = b.values();
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int j = 0; j < d; ++j) {
      double x = av[static_cast<size_t>(r) * d + j];
      double y = bv[static_cast<size_t>(r) * d + j];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na > kCosNormFloor && nb > kCosNormFloor) acc += dot / (na * nb);
  }
  Tensor out = Tensor::scalar(acc / n);
  if (should_record({&a, &b})) {
    mark_output(out);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    Tape::current()->push([ai, bi, oi, n, d](GradMap& gm) {
      auto* g = gm.find(oi.get());
      if (!g) return;
      const double scale = (*g)[0] / n;
      std::vector<double>* ga = needs_grad(ai.get()) ? &gm.accum(ai.get()) : nullptr;
      std::vector<double>* gb = needs_grad(bi.get()) ? &gm.accum(bi.get()) : nullptr;
      if (!ga && !gb) return;
      for (int r = 0; r < n; ++r) {
        const size_t off = static_cast<size_t>(r) * d;
        double dot = 0.0, na2 = 0.0, nb2 = 0.0;
        for (int j = 0; j < d; ++j) {
          double x = ai->values[off + j], y = bi->values[off + j];
          dot += x * y;
          na2 += x * x;
          nb2 += y * y;
        }
        double na = std::sqrt(na2), nb = std::sqrt(nb2);
        if (na <= kCosNormFloor || nb <= kCosNormFloor) continue;
        double c = dot / (na * nb);
        for (int j = 0; j < d; ++j) {
          double x = ai->values[off + j], y = bi->values[off + j];
          if (ga) (*ga)[off + j] += scale * (y / (na * nb) - c * x / na2);
          if (gb) (*gb)[off + j] += scale * (x / (na * nb) - c * y / nb2);
        }
      }
    });
  }
  return out;
}

}  // namespace fedgai
