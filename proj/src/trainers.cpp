#include "fedgai/trainers.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

namespace fedgai {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0))
    fail("train config: learning_rate must be >= 0");
  if (n_iter < 0) fail("train config: n_iter must be >= 0");
  if (batch_size < 1) fail("train config: batch_size must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    fail("train config: momentum must lie in [0, 1)");
  if (fedprox_mu < 0.0) fail("train config: fedprox_mu must be >= 0");
  if (weights.gamma1 < 0.0 || weights.gamma2 < 0.0 || weights.gamma3 < 0.0 ||
      weights.beta < 0.0)
    fail("train config: loss weights must be >= 0");
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params)
    : params_(std::move(params)), velocity_(params_.size()) {}

void SgdOptimizer::zero_grads() {
  for (auto& t : params_) t.zero_grad();
}

void SgdOptimizer::step(double lr, double momentum) {
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i];
    const std::vector<double>& g = t.grad();  // empty when never touched
    std::vector<double>& vals = t.values();
    if (momentum > 0.0) {
      std::vector<double>& v = velocity_[i];
      if (v.empty()) v.assign(vals.size(), 0.0);
      for (size_t k = 0; k < vals.size(); ++k) {
        v[k] = momentum * v[k] + (k < g.size() ? g[k] : 0.0);
        double upd = lr * v[k];
        if (upd != 0.0) vals[k] -= upd;
      }
    } else {
      for (size_t k = 0; k < g.size(); ++k) {
        double upd = lr * g[k];
        if (upd != 0.0) vals[k] -= upd;
      }
    }
    t.zero_grad();
  }
}

namespace {

void ensure_optimizers(ClientState& c) {
  if (!c.gen_opt) {
    std::vector<Tensor> ps;
    for (Tensor* t : c.gen.trainable()) ps.push_back(*t);
    c.gen_opt = std::make_unique<SgdOptimizer>(std::move(ps));
  }
  if (!c.disc_opt) {
    std::vector<Tensor> ps;
    for (Tensor* t : c.disc.trainable()) ps.push_back(*t);
    c.disc_opt = std::make_unique<SgdOptimizer>(std::move(ps));
  }
}

// (mu/2) * sum ||w - w_center||^2 over center entries present by name.
Tensor prox_term(Discriminator& disc, const ParamSet& center, double mu) {
  Tensor acc = Tensor::scalar(0.0);
  for (auto& [name, t] : disc.named_trainable()) {
    const ParamEntry* e = center.find(name);
    if (!e) continue;
    Tensor anchor = Tensor::from(e->shape, e->values);
    acc = add(acc, frobenius_norm_sq(sub(*t, anchor)));
  }
  return scalar_mul(acc, mu / 2.0);
}

std::vector<std::vector<size_t>> epoch_batches(size_t n, int batch_size,
                                               uint64_t seed, uint64_t epoch) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(idx);
  std::vector<std::vector<size_t>> out;
  for (size_t at = 0; at < n; at += static_cast<size_t>(batch_size)) {
    size_t hi = std::min(n, at + static_cast<size_t>(batch_size));
    out.emplace_back(idx.begin() + static_cast<ptrdiff_t>(at),
                     idx.begin() + static_cast<ptrdiff_t>(hi));
  }
  return out;
}

}  // namespace

ClientState make_client(int client_id, const PerceptualEncoder& enc,
                        const std::vector<StylePair>& pairs,
                        uint64_t model_seed, bool student) {
  if (pairs.empty()) fail("make_client: empty dataset");
  ClientState c(
      mix_seed(model_seed, student ? kStudentGenStream : kTeacherGenStream),
      mix_seed(model_seed, kDiscStream), student);
  c.client_id = client_id;
  c.photos.reserve(pairs.size());
  c.sketches.reserve(pairs.size());
  for (const auto& p : pairs) {
    c.photos.push_back(to_model_input(p.image));
    c.sketches.push_back(to_model_input(p.sketch));
  }
  c.stats = compute_style_stats(enc, c.sketches);
  return c;
}

ClientState make_student_of(const ClientState& teacher, uint64_t model_seed) {
  ClientState s(mix_seed(model_seed, kStudentGenStream),
                mix_seed(model_seed, kDiscStream), /*student=*/true);
  s.client_id = teacher.client_id;
  s.disc.load_params(teacher.disc.export_params());
  s.stats = teacher.stats;
  s.photos = teacher.photos;  // shared handles; training never mutates data
  s.sketches = teacher.sketches;
  return s;
}

Tensor make_batch(const std::vector<Tensor>& set,
                  const std::vector<size_t>& indices) {
  if (indices.empty()) fail("make_batch: empty index set");
  const Tensor& first = set.at(indices[0]);
  if (first.rank() != 3) fail("make_batch: expected (C,H,W) entries");
  std::vector<double> vals;
  vals.reserve(indices.size() * static_cast<size_t>(first.size()));
  for (size_t i : indices) {
    const Tensor& t = set.at(i);
    if (t.shape() != first.shape()) fail("make_batch: mixed entry shapes");
    vals.insert(vals.end(), t.values().begin(), t.values().end());
  }
  return Tensor::from({static_cast<int>(indices.size()), first.dim(0),
                       first.dim(1), first.dim(2)},
                      std::move(vals));
}

double teacher_disc_step(ClientState& client, const PerceptualEncoder& enc,
                         const TrainConfig& cfg, const Tensor& photos,
                         const Tensor& sketches, const ParamSet* prox_center) {
  ensure_optimizers(client);
  FeatureMaps f_s, f_g;
  {
    NoGradGuard ng;
    FeatureMaps f_m = adain_sd(enc.encode(photos), client.stats);
    Generator::Output fake = client.gen.forward(f_m, BnMode::kTrainNoUpdate);
    f_g = enc.encode(fake.sketch);
    f_s = enc.encode(sketches);
  }
  client.disc_opt->zero_grads();
  double loss_val = 0.0;
  {
    Tape tape;
    Tensor loss = student_disc_loss(client.disc, f_s, f_g);
    loss_val = loss.item();
    if (prox_center && cfg.fedprox_mu > 0.0)
      loss = add(loss, prox_term(client.disc, *prox_center, cfg.fedprox_mu));
    tape.backward(loss);
  }
  client.disc_opt->step(cfg.learning_rate, cfg.momentum);
  return loss_val;
}

GenStepLosses teacher_gen_step(ClientState& client,
                               const PerceptualEncoder& enc,
                               const TrainConfig& cfg, const Tensor& photos,
                               const Tensor& sketches, bool with_decorr) {
  ensure_optimizers(client);
  FeatureMaps f_r, f_m, f_s;
  Tensor pooled_s;
  {
    NoGradGuard ng;
    f_r = enc.encode(photos);
    f_m = adain_sd(f_r, client.stats);
    f_s = enc.encode(sketches);
    pooled_s = enc.pooled_final(f_s);
  }
  client.gen_opt->zero_grads();
  GenStepLosses out;
  {
    Tape tape;
    Generator::Output g = client.gen.forward(f_m, BnMode::kTrain);
    FeatureMaps f_g = enc.encode(g.sketch);
    Tensor l_gram = gram_loss(f_s, f_g);
    AdversarialLosses adv = adversarial_losses(client.disc, f_s, f_g, f_m);
    Tensor pooled_g = enc.pooled_final(f_g);
    Tensor l_clip = clip_loss(pooled_g, pooled_s, f_g.levels[3], f_r.levels[3]);
    Tensor obj = total_gan_loss(l_gram, adv.g_loss, l_clip, cfg.weights);
    out.gram = l_gram.item();
    out.adv = adv.g_loss.item();
    out.clip = l_clip.item();
    // A single sample has no column statistics to decorrelate; skip the term
    // for a size-1 trailing batch.
    if (with_decorr && photos.dim(0) >= 2) {
      Tensor l_dec = feddecorr(pooled_g);
      out.decorr = l_dec.item();
      obj = add(obj, scalar_mul(l_dec, cfg.weights.beta));
    }
    out.total = obj.item();
    tape.backward(obj);
  }
  client.gen_opt->step(cfg.learning_rate, cfg.momentum);
  return out;
}

EpochLosses train_teacher_epoch(ClientState& client,
                                const PerceptualEncoder& enc,
                                const TrainConfig& cfg, bool fed_mode,
                                const ParamSet* prox_center) {
  cfg.validate();
  if (client.photos.empty()) fail("train_teacher_epoch: empty dataset");
  EpochLosses acc;
  for (const auto& chunk : epoch_batches(client.photos.size(), cfg.batch_size,
                                         cfg.seed, client.epochs_run)) {
    Tensor pb = make_batch(client.photos, chunk);
    Tensor sb = make_batch(client.sketches, chunk);
    acc.d_loss += teacher_disc_step(client, enc, cfg, pb, sb, prox_center);
    GenStepLosses g = teacher_gen_step(client, enc, cfg, pb, sb, fed_mode);
    acc.gram += g.gram;
    acc.g_adv += g.adv;
    acc.clip += g.clip;
    acc.decorr += g.decorr;
    acc.g_total += g.total;
    acc.batches += 1;
  }
  client.epochs_run += 1;
  double nb = acc.batches;
  acc.d_loss /= nb;
  acc.gram /= nb;
  acc.g_adv /= nb;
  acc.clip /= nb;
  acc.decorr /= nb;
  acc.g_total /= nb;
  return acc;
}

double student_disc_step(ClientState& student, const PerceptualEncoder& enc,
                         const TrainConfig& cfg, const Tensor& photos,
                         const Tensor& sketches, const ParamSet* prox_center) {
  // Identical shape to the teacher's discriminator update: real sketches vs
  // the client's own generator run under no-grad.
  return teacher_disc_step(student, enc, cfg, photos, sketches, prox_center);
}

DistillStepLosses student_gen_step(ClientState& teacher, ClientState& student,
                                   const PerceptualEncoder& enc,
                                   const TrainConfig& cfg,
                                   const Tensor& photos,
                                   const Tensor& sketches, bool with_decorr) {
  ensure_optimizers(student);
  FeatureMaps f_m, f_sp;
  Generator::Output t_out;
  {
    NoGradGuard ng;
    f_m = adain_sd(enc.encode(photos), student.stats);
    f_sp = enc.encode(sketches);
    // Batch statistics without touching running stats (or, under no-grad,
    // spectral state): the teacher stays frozen, and an exact-copy student
    // normalizing the same batch reproduces its blocks bit-for-bit.
    t_out = teacher.gen.forward(f_m, BnMode::kTrainNoUpdate);
  }
  student.gen_opt->zero_grads();
  DistillStepLosses out;
  {
    Tape tape;
    Generator::Output s_out = student.gen.forward(f_m, BnMode::kTrain);
    Tensor l_local = distill_local(t_out.blocks, s_out.blocks);
    FeatureMaps f_gp = enc.encode(s_out.sketch);
    Tensor l_global = distill_global(f_gp, f_sp);
    Tensor l_adv = generator_adv_term(student.disc, f_gp);
    Tensor obj = add(add(l_local, l_global), l_adv);
    out.local = l_local.item();
    out.global = l_global.item();
    out.adv = l_adv.item();
    if (with_decorr && photos.dim(0) >= 2) {
      Tensor l_dec = feddecorr(enc.pooled_final(f_gp));
      out.decorr = l_dec.item();
      obj = add(obj, scalar_mul(l_dec, cfg.weights.beta));
    }
    out.total = obj.item();
    tape.backward(obj);
  }
  student.gen_opt->step(cfg.learning_rate, cfg.momentum);
  return out;
}

DistillEpochLosses distill_epoch(ClientState& teacher, ClientState& student,
                                 const PerceptualEncoder& enc,
                                 const TrainConfig& cfg, bool fed_mode,
                                 const ParamSet* prox_center) {
  cfg.validate();
  if (student.photos.empty()) fail("distill_epoch: empty dataset");
  DistillEpochLosses acc;
  for (const auto& chunk : epoch_batches(student.photos.size(), cfg.batch_size,
                                         cfg.seed, student.epochs_run)) {
    Tensor pb = make_batch(student.photos, chunk);
    Tensor sb = make_batch(student.sketches, chunk);
    acc.d_loss += student_disc_step(student, enc, cfg, pb, sb, prox_center);
    DistillStepLosses g =
        student_gen_step(teacher, student, enc, cfg, pb, sb, fed_mode);
    acc.local += g.local;
    acc.global += g.global;
    acc.adv += g.adv;
    acc.decorr += g.decorr;
    acc.g_total += g.total;
    acc.batches += 1;
  }
  student.epochs_run += 1;
  double nb = acc.batches;
  acc.d_loss /= nb;
  acc.local /= nb;
  acc.global /= nb;
  acc.adv /= nb;
  acc.decorr /= nb;
  acc.g_total /= nb;
  return acc;
}

void distill_student(ClientState& teacher, ClientState& student,
                     const PerceptualEncoder& enc, const TrainConfig& cfg,
                     int epochs) {
  cfg.validate();
  if (epochs < 0) fail("distill_student: epochs must be >= 0");
  for (int e = 0; e < epochs; ++e) distill_epoch(teacher, student, enc, cfg);
}

EpochLosses generator_finetune_epoch(ClientState& client,
                                     const PerceptualEncoder& enc,
                                     const TrainConfig& cfg, bool fed_mode) {
  cfg.validate();
  if (client.photos.empty()) fail("generator_finetune_epoch: empty dataset");
  EpochLosses acc;
  for (const auto& chunk : epoch_batches(client.photos.size(), cfg.batch_size,
                                         cfg.seed, client.epochs_run)) {
    Tensor pb = make_batch(client.photos, chunk);
    Tensor sb = make_batch(client.sketches, chunk);
    if (client.kd_teacher) {
      DistillStepLosses g = student_gen_step(*client.kd_teacher, client, enc,
                                             cfg, pb, sb, fed_mode);
      acc.g_adv += g.adv;
      acc.decorr += g.decorr;
      acc.g_total += g.total;
    } else {
      GenStepLosses g = teacher_gen_step(client, enc, cfg, pb, sb, fed_mode);
      acc.gram += g.gram;
      acc.g_adv += g.adv;
      acc.clip += g.clip;
      acc.decorr += g.decorr;
      acc.g_total += g.total;
    }
    acc.batches += 1;
  }
  client.epochs_run += 1;
  double nb = acc.batches;
  acc.gram /= nb;
  acc.g_adv /= nb;
  acc.clip /= nb;
  acc.decorr /= nb;
  acc.g_total /= nb;
  return acc;
}

std::vector<Tensor> generate_sketches(ClientState& client,
                                      const PerceptualEncoder& enc,
                                      const std::vector<Tensor>& photos,
                                      int batch_size) {
  if (batch_size < 1) fail("generate_sketches: batch_size must be positive");
  NoGradGuard ng;
  std::vector<Tensor> out;
  out.reserve(photos.size());
  for (size_t at = 0; at < photos.size();
       at += static_cast<size_t>(batch_size)) {
    size_t hi = std::min(photos.size(), at + static_cast<size_t>(batch_size));
    std::vector<size_t> idx(hi - at);
    std::iota(idx.begin(), idx.end(), at);
    Tensor batch = make_batch(photos, idx);
    FeatureMaps f_m = adain_sd(enc.encode(batch), client.stats);
    Tensor sk = client.gen.forward(f_m, BnMode::kEval).sketch;
    int per = sk.dim(1) * sk.dim(2) * sk.dim(3);
    for (int b = 0; b < sk.dim(0); ++b) {
      std::vector<double> vals(
          sk.values().begin() + static_cast<ptrdiff_t>(b) * per,
          sk.values().begin() + static_cast<ptrdiff_t>(b + 1) * per);
      out.push_back(Tensor::from({sk.dim(1), sk.dim(2), sk.dim(3)},
                                 std::move(vals)));
    }
  }
  return out;
}

ParamSet local_round(ClientState& client, const PerceptualEncoder& enc,
                     const ParamSet& fused_disc, const TrainConfig& cfg) {
  cfg.validate();
  client.disc.load_params(fused_disc);
  const ParamSet* prox = cfg.fedprox_mu > 0.0 ? &fused_disc : nullptr;
  for (int e = 0; e < cfg.n_iter; ++e) {
    if (client.kd_teacher)
      distill_epoch(*client.kd_teacher, client, enc, cfg, /*fed_mode=*/true,
                    prox);
    else
      train_teacher_epoch(client, enc, cfg, /*fed_mode=*/true, prox);
  }
  return client.disc.export_params().without_bn();
}

}  // namespace fedgai
