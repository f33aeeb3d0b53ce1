#pragma once

#include <vector>

#include "fedgai/encoder.hpp"
#include "fedgai/models.hpp"
#include "fedgai/tensor.hpp"

namespace fedgai {

// Objective weights. gamma1/2/3 scale the style, adversarial, and semantic
// terms of the full GAN loss; beta scales the decorrelation regularizer used
// during federated rounds.
struct LossWeights {
  double gamma1 = 50.0;
  double gamma2 = 1.0;
  double gamma3 = 25.0;
  double beta = 0.1;
};

// All log arguments are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-7;

inline Tensor gram(const Tensor& f) { return gram_matrix(f); }

// Sum over the 4 levels of MSE between Gram matrices of sketch features and
// generated features.
Tensor gram_loss(const FeatureMaps& f_s, const FeatureMaps& f_g);

struct AdversarialLosses {
  Tensor d_loss;  // -E[log D(gram(real))] - E[log(1 - D(gram(fake)))]
  Tensor g_loss;  // -E[log D(gram(fake))] + sum_j MSE(f_g_j, f_m_j)
  Tensor total;   // d_loss + g_loss (reporting)
};

AdversarialLosses adversarial_losses(Discriminator& d, const FeatureMaps& f_s,
                                     const FeatureMaps& f_g,
                                     const FeatureMaps& f_m);

// (1 - cosine(pooled generated, pooled sketch)) + MSE(level-4 generated,
// level-4 reference). Zero-norm pooled rows contribute the maximal cosine
// dissimilarity of 1.
Tensor clip_loss(const Tensor& f_g_final, const Tensor& f_s_final,
                 const Tensor& f_g4, const Tensor& f_r4);

Tensor total_gan_loss(const Tensor& l_gram, const Tensor& l_adv,
                      const Tensor& l_clip, const LossWeights& w);

// Sum of MSEs between corresponding teacher and student block outputs.
Tensor distill_local(const std::vector<Tensor>& teacher_blocks,
                     const std::vector<Tensor>& student_blocks);

// Sum over the 4 levels of MSE between student-generated and sketch features.
Tensor distill_global(const FeatureMaps& f_g_student, const FeatureMaps& f_s);

// Generator-side adversarial term alone: -E[log D(gram(level-4 fake))].
// The student generator trains against this (its objective has no feature
// reconstruction term, unlike the teacher's adversarial g_loss).
Tensor generator_adv_term(Discriminator& d, const FeatureMaps& f_g);

Tensor student_disc_loss(Discriminator& d_s, const FeatureMaps& f_s,
                         const FeatureMaps& f_g_student);

Tensor kd_total(const Tensor& l_local, const Tensor& l_global, const Tensor& l_ds);

// Decorrelation regularizer over per-sample feature rows (N, d):
// z-score each column (population std, floored at 1e-8), form the correlation
// matrix CM = F^T F / N, return ||CM||_F^2 / d^2. Requires N >= 2.
Tensor feddecorr(const Tensor& features);

Tensor fed_total(const Tensor& l_kd, const Tensor& l_decorr, double beta);

}  // namespace fedgai
