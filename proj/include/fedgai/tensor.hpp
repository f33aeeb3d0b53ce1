#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fedgai/common.hpp"

namespace fedgai {

// ---------------------------------------------------------------------------
// Reverse-mode autodiff over dense f64 tensors.
//
// Tensors are shared handles. Ops compute eagerly and, when a Tape is active
// on the current thread and any input requires gradients, push a backward
// closure onto that tape. Tape::backward walks the recorded ops in reverse,
// routing gradients through a scratch map and accumulating into the .grad
// buffer of every requires_grad leaf. A Tape and the tensors recorded on it
// are confined to one thread; distinct tapes on distinct threads are safe.
// ---------------------------------------------------------------------------

class Tape;

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // leaf accumulator; empty until first backward
  bool requires_grad = false;
  uint64_t tape_id = 0;  // nonzero when produced by an op on that tape
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> vals,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(impl_->values.size()); }

  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }
  double item() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
  const std::vector<double>& grad() const;
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  // Value copy detached from any gradient flow.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Gradient scratch storage used during one backward traversal.
class GradMap {
 public:
  std::vector<double>* find(const TensorImpl* t);
  std::vector<double>& accum(const TensorImpl* t);
  void seed(const TensorImpl* t, std::vector<double> g);
  const std::unordered_map<const TensorImpl*, std::vector<double>>& entries() const {
    return map_;
  }

 private:
  std::unordered_map<const TensorImpl*, std::vector<double>> map_;
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Reverse traversal from a scalar loss. Accumulates into leaf .grad buffers;
  // repeated calls without zero_grad add up.
  void backward(const Tensor& loss);

  size_t node_count() const { return records_.size(); }
  uint64_t id() const { return id_; }

  static Tape* current();
  void push(std::function<void(GradMap&)> fn);

 private:
  struct Record {
    std::function<void(GradMap&)> backward;
  };
  std::vector<Record> records_;
  uint64_t id_;
  Tape* prev_ = nullptr;
};

// Disables recording (and treats every tensor as constant) while alive.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
};

bool grad_recording_enabled();

// Multiply-accumulate counter incremented inside conv/dense kernels when
// enabled; used to cross-check the closed-form MAC counts.
struct MacCounter {
  static void enable();
  static uint64_t disable();  // returns count since enable()
  static void add(uint64_t n);
};

enum class BnMode {
  kTrain,          // batch statistics, update running stats
  kTrainNoUpdate,  // batch statistics, running stats untouched
  kEval,           // running statistics
};

// ---- elementwise / algebra ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor tanh_t(const Tensor& x);
Tensor sigmoid_t(const Tensor& x);
Tensor log_t(const Tensor& x);
Tensor clamp_t(const Tensor& x, double lo, double hi);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);     // (m,k)x(k,n)
Tensor transpose2d(const Tensor& a);                 // (m,n)->(n,m)
Tensor bias_add_rows(const Tensor& x, const Tensor& b);  // (n,f)+(f)

// ---- convolution / spatial ----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride, int pad);
Tensor depthwise_separable_conv2d(const Tensor& x, const Tensor& w_dw,
                                  const Tensor& w_pw, const Tensor& b,
                                  int stride, int pad);
Tensor nearest_upsample2x(const Tensor& x);
Tensor maxpool2x2(const Tensor& x);
Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, std::vector<int> new_shape);
Tensor global_avg_pool(const Tensor& x);  // (n,c,h,w)->(n,c)

// ---- normalization ----
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor running_mean, Tensor running_var, double momentum,
                    double eps, BnMode mode);
// Per-channel population mean/std over batch and spatial dims.
std::pair<Tensor, Tensor> channel_mean_std(const Tensor& x);
Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift);

// One power iteration per call; u_state updated in place unless a NoGradGuard
// is active (evaluation passes must not mutate model state). The spectral norm
// estimate is treated as a constant for gradient purposes.
Tensor spectral_normalize(const Tensor& w, Tensor& u_state);

// ---- reductions / objectives ----
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);
// Mean over rows of the per-row cosine; rows with norm below 1e-12 contribute
// zero (and zero gradient).
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
Tensor frobenius_norm_sq(const Tensor& x);

// Per-sample Gram matrices: (n,c,h,w) -> (n,c,c), normalized by c*h*w.
Tensor gram_matrix(const Tensor& x);

}  // namespace fedgai
