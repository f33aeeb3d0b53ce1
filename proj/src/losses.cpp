#include "fedgai/losses.hpp"

namespace fedgai {

namespace {

void check_levels(const char* op, const FeatureMaps& a, const FeatureMaps& b) {
  if (a.levels.size() != kFeatureLevels || b.levels.size() != kFeatureLevels)
    fail(std::string("[") + op + "] expected 4 feature levels, got " +
         std::to_string(a.levels.size()) + " and " + std::to_string(b.levels.size()));
}

Tensor neg_mean_log(const Tensor& p) {
  return scalar_mul(mean_all(log_t(clamp_t(p, kProbClamp, 1.0 - kProbClamp))), -1.0);
}

Tensor one_minus(const Tensor& p) { return add_scalar(scalar_mul(p, -1.0), 1.0); }

}  // namespace

Tensor gram_loss(const FeatureMaps& f_s, const FeatureMaps& f_g) {
  check_levels("gram_loss", f_s, f_g);
  Tensor total = Tensor::scalar(0.0);
  for (int j = 0; j < kFeatureLevels; ++j)
    total = add(total, mse(gram_matrix(f_s.levels[static_cast<size_t>(j)]),
                           gram_matrix(f_g.levels[static_cast<size_t>(j)])));
  return total;
}

AdversarialLosses adversarial_losses(Discriminator& d, const FeatureMaps& f_s,
                                     const FeatureMaps& f_g,
                                     const FeatureMaps& f_m) {
  check_levels("adversarial_losses", f_s, f_g);
  check_levels("adversarial_losses", f_g, f_m);
  Tensor d_real = d.forward(gram_matrix(f_s.levels[3]));
  Tensor d_fake = d.forward(gram_matrix(f_g.levels[3]));
  AdversarialLosses out;
  out.d_loss = add(neg_mean_log(d_real), neg_mean_log(one_minus(d_fake)));
  Tensor recon = Tensor::scalar(0.0);
  for (int j = 0; j < kFeatureLevels; ++j)
    recon = add(recon, mse(f_g.levels[static_cast<size_t>(j)],
                           f_m.levels[static_cast<size_t>(j)]));
  out.g_loss = add(neg_mean_log(d_fake), recon);
  out.total = add(out.d_loss, out.g_loss);
  return out;
}

Tensor clip_loss(const Tensor& f_g_final, const Tensor& f_s_final,
                 const Tensor& f_g4, const Tensor& f_r4) {
  Tensor cos = cosine_similarity(f_g_final, f_s_final);
  return add(add_scalar(scalar_mul(cos, -1.0), 1.0), mse(f_g4, f_r4));
}

Tensor total_gan_loss(const Tensor& l_gram, const Tensor& l_adv,
                      const Tensor& l_clip, const LossWeights& w) {
  return add(add(scalar_mul(l_gram, w.gamma1), scalar_mul(l_adv, w.gamma2)),
             scalar_mul(l_clip, w.gamma3));
}

Tensor distill_local(const std::vector<Tensor>& teacher_blocks,
                     const std::vector<Tensor>& student_blocks) {
  if (teacher_blocks.size() != student_blocks.size())
    fail("[distill_local] block count mismatch: " +
         std::to_string(teacher_blocks.size()) + " vs " +
         std::to_string(student_blocks.size()));
  Tensor total = Tensor::scalar(0.0);
  for (size_t k = 0; k < teacher_blocks.size(); ++k) {
    if (teacher_blocks[k].shape() != student_blocks[k].shape())
      fail("[distill_local] block " + std::to_string(k + 1) + " shape " +
           shape_str(teacher_blocks[k].shape()) + " vs " +
           shape_str(student_blocks[k].shape()));
    total = add(total, mse(teacher_blocks[k], student_blocks[k]));
  }
  return total;
}

Tensor distill_global(const FeatureMaps& f_g_student, const FeatureMaps& f_s) {
  check_levels("distill_global", f_g_student, f_s);
  Tensor total = Tensor::scalar(0.0);
  for (int j = 0; j < kFeatureLevels; ++j)
    total = add(total, mse(f_g_student.levels[static_cast<size_t>(j)],
                           f_s.levels[static_cast<size_t>(j)]));
  return total;
}

Tensor generator_adv_term(Discriminator& d, const FeatureMaps& f_g) {
  return neg_mean_log(d.forward(gram_matrix(f_g.levels[3])));
}

Tensor student_disc_loss(Discriminator& d_s, const FeatureMaps& f_s,
                         const FeatureMaps& f_g_student) {
  check_levels("student_disc_loss", f_s, f_g_student);
  Tensor d_real = d_s.forward(gram_matrix(f_s.levels[3]));
  Tensor d_fake = d_s.forward(gram_matrix(f_g_student.levels[3]));
  return add(neg_mean_log(d_real), neg_mean_log(one_minus(d_fake)));
}

Tensor kd_total(const Tensor& l_local, const Tensor& l_global, const Tensor& l_ds) {
  return add(add(l_local, l_global), l_ds);
}

Tensor feddecorr(const Tensor& features) {
  if (features.rank() != 2)
    fail("[feddecorr] expected (N,d) features, got " + shape_str(features.shape()));
  const int n = features.dim(0), d = features.dim(1);
  if (n < 2) fail("[feddecorr] insufficient batch for decorrelation: N=" +
                  std::to_string(n));
  // Column z-score via the channel-stat ops on an (N, d, 1, 1) view.
  Tensor x4 = reshape(features, {n, d, 1, 1});
  auto [mu, sd] = channel_mean_std(x4);
  Tensor sd_f = clamp_t(sd, 1e-8, 1e300);
  Tensor scale = div(Tensor::full({d}, 1.0), sd_f);
  Tensor shift = scalar_mul(div(mu, sd_f), -1.0);
  Tensor z = reshape(channel_affine(x4, scale, shift), {n, d});
  Tensor cm = scalar_mul(matmul(transpose2d(z), z), 1.0 / n);
  return scalar_mul(frobenius_norm_sq(cm), 1.0 / (static_cast<double>(d) * d));
}

Tensor fed_total(const Tensor& l_kd, const Tensor& l_decorr, double beta) {
  return add(l_kd, scalar_mul(l_decorr, beta));
}

}  // namespace fedgai
