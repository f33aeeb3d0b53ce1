#pragma once

#include <initializer_list>
#include <numeric>

#include "fedgai/tensor.hpp"

// Shared plumbing for the op translation units.

namespace fedgai::detail {

inline int64_t prod(const std::vector<int>& s) {
  int64_t p = 1;
  for (int d : s) p *= d;
  return p;
}

inline bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!grad_recording_enabled() || Tape::current() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

inline void mark_output(Tensor& out) {
  out.impl()->requires_grad = true;
  out.impl()->tape_id = Tape::current()->id();
}

inline bool needs_grad(const TensorImpl* t) { return t && t->requires_grad; }

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    fail(std::string("[") + op + "] shape mismatch " + shape_str(a.shape()) +
         " vs " + shape_str(b.shape()));
}

inline void check_rank(const char* op, const Tensor& t, int r) {
  if (t.rank() != r)
    fail(std::string("[") + op + "] expected rank " + std::to_string(r) +
         ", got " + shape_str(t.shape()));
}

}  // namespace fedgai::detail
