#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fedgai/encoder.hpp"
#include "fedgai/losses.hpp"
#include "fedgai/models.hpp"
#include "fedgai/params.hpp"
#include "fedgai/synthdata.hpp"
#include "fedgai/tensor.hpp"

namespace fedgai {

// ---------------------------------------------------------------------------
// Local optimization loops: teacher GAN training, student distillation, and
// the per-round local update used by federation. Each client is single-thread
// confined; distinct clients share nothing mutable, so an orchestrator may run
// them on separate threads.
// ---------------------------------------------------------------------------

// Seed streams for deriving per-model init seeds from one client seed, so a
// client's generator/discriminator draws never collide.
inline constexpr uint64_t kTeacherGenStream = 0x7e4c;
inline constexpr uint64_t kStudentGenStream = 0x57f0;
inline constexpr uint64_t kDiscStream = 0xd15c;

struct TrainConfig {
  double learning_rate = 2e-4;
  int n_iter = 11;     // local epochs per round
  int batch_size = 8;
  uint64_t seed = 0;
  LossWeights weights;
  double momentum = 0.0;    // 0 = plain SGD; 0.9 available by flag
  double fedprox_mu = 0.0;  // >0 adds a proximal pull toward the fused disc

  void validate() const;  // lr/n_iter may be 0 (no-op runs); rest positive
};

// Plain SGD over a fixed parameter list, with optional momentum. Parameters
// are shared tensor handles, so stepping here updates the owning model.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(std::vector<Tensor> params);

  void zero_grads();
  // v <- momentum*v + grad; w <- w - lr*v. Grads are cleared after the step.
  void step(double lr, double momentum = 0.0);
  size_t size() const { return params_.size(); }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
};

// One designer client: models, frozen style statistics, dataset in model
// range, and lazily created optimizer state. Movable, not copyable.
struct ClientState {
  int client_id = 0;
  Generator gen;
  Discriminator disc;
  StyleStats stats;
  std::vector<Tensor> photos;    // (3, H, W) each, values in [-1, 1]
  std::vector<Tensor> sketches;  // (1, H, W) each, values in [-1, 1]
  uint64_t epochs_run = 0;       // advances the shuffle stream across epochs
  std::unique_ptr<SgdOptimizer> gen_opt;
  std::unique_ptr<SgdOptimizer> disc_opt;
  // When set, federated local rounds run distillation epochs against this
  // frozen teacher instead of plain GAN epochs. Non-owning.
  ClientState* kd_teacher = nullptr;

  ClientState(uint64_t gen_seed, uint64_t disc_seed, bool student)
      : gen(gen_seed, student), disc(disc_seed) {}
};

// Builds a client from style pairs: converts images/sketches to model range,
// seeds models from (model_seed, stream), and freezes style statistics.
ClientState make_client(int client_id, const PerceptualEncoder& enc,
                        const std::vector<StylePair>& pairs,
                        uint64_t model_seed, bool student = false);

// Student counterpart of an existing teacher client: fresh separable-block
// generator, discriminator initialized from the teacher's weights, shared
// dataset handles and style statistics.
ClientState make_student_of(const ClientState& teacher,
                            uint64_t model_seed);

// Stacks dataset entries at the given indices into one (B, C, H, W) batch.
Tensor make_batch(const std::vector<Tensor>& set,
                  const std::vector<size_t>& indices);

struct GenStepLosses {
  double gram = 0.0;
  double adv = 0.0;
  double clip = 0.0;
  double decorr = 0.0;
  double total = 0.0;
};

struct EpochLosses {
  double d_loss = 0.0;
  double gram = 0.0;
  double g_adv = 0.0;
  double clip = 0.0;
  double decorr = 0.0;
  double g_total = 0.0;
  int batches = 0;
};

// One discriminator update on a photo/sketch batch. The generator runs under
// no-grad, so only discriminator parameters move. When prox_center is given
// and cfg.fedprox_mu > 0, adds (mu/2)*sum ||w - w_center||^2 over entries
// present in prox_center. Returns the loss value (excluding the prox term).
double teacher_disc_step(ClientState& client, const PerceptualEncoder& enc,
                         const TrainConfig& cfg, const Tensor& photos,
                         const Tensor& sketches,
                         const ParamSet* prox_center = nullptr);

// One generator update minimizing gamma1*gram + gamma2*adv + gamma3*clip
// (+ beta*decorr when with_decorr and the batch has >= 2 samples — a single
// sample has no column statistics to decorrelate).
GenStepLosses teacher_gen_step(ClientState& client,
                               const PerceptualEncoder& enc,
                               const TrainConfig& cfg, const Tensor& photos,
                               const Tensor& sketches,
                               bool with_decorr = false);

// One seeded shuffle pass over the client dataset, alternating D and G steps
// per batch; the last partial batch is kept. fed_mode adds the decorrelation
// term to the G step and routes prox_center into the D step.
EpochLosses train_teacher_epoch(ClientState& client,
                                const PerceptualEncoder& enc,
                                const TrainConfig& cfg, bool fed_mode = false,
                                const ParamSet* prox_center = nullptr);

struct DistillStepLosses {
  double local = 0.0;
  double global = 0.0;
  double adv = 0.0;
  double decorr = 0.0;
  double total = 0.0;
};

struct DistillEpochLosses {
  double d_loss = 0.0;
  double local = 0.0;
  double global = 0.0;
  double adv = 0.0;
  double decorr = 0.0;
  double g_total = 0.0;
  int batches = 0;
};

// One student-discriminator update: real sketches vs the student generator's
// fakes (generator under no-grad).
double student_disc_step(ClientState& student, const PerceptualEncoder& enc,
                         const TrainConfig& cfg, const Tensor& photos,
                         const Tensor& sketches,
                         const ParamSet* prox_center = nullptr);

// One student-generator update minimizing block-feature distillation +
// encoded-output distillation + the adversarial term against the student's
// discriminator. The teacher forward runs under no-grad with batch statistics
// (running stats untouched), so an exact-copy student sees zero local loss.
DistillStepLosses student_gen_step(ClientState& teacher, ClientState& student,
                                   const PerceptualEncoder& enc,
                                   const TrainConfig& cfg,
                                   const Tensor& photos,
                                   const Tensor& sketches,
                                   bool with_decorr = false);

// One seeded shuffle pass of alternating D_S / G_S distillation steps.
DistillEpochLosses distill_epoch(ClientState& teacher, ClientState& student,
                                 const PerceptualEncoder& enc,
                                 const TrainConfig& cfg, bool fed_mode = false,
                                 const ParamSet* prox_center = nullptr);

// Runs `epochs` distillation passes. The teacher is never modified.
void distill_student(ClientState& teacher, ClientState& student,
                     const PerceptualEncoder& enc, const TrainConfig& cfg,
                     int epochs);

// Generator-only pass over one epoch's batch schedule: no discriminator
// updates, no upload. Fusion requesters that receive a fused discriminator
// without contributing style run this to adapt their generator to it. Clients
// with kd_teacher set run the distillation objective instead.
EpochLosses generator_finetune_epoch(ClientState& client,
                                     const PerceptualEncoder& enc,
                                     const TrainConfig& cfg,
                                     bool fed_mode = false);

// Evaluation pass: runs the generator over the photos in batches (running
// BatchNorm statistics, no grad recording) and returns one (1, H, W) sketch
// per photo. Leaves all model state bit-identical.
std::vector<Tensor> generate_sketches(ClientState& client,
                                      const PerceptualEncoder& enc,
                                      const std::vector<Tensor>& photos,
                                      int batch_size = 8);

// One federated local round: load the fused discriminator (BatchNorm-kind
// entries may be absent; local values are kept), run cfg.n_iter local epochs
// with the decorrelation term active (distillation epochs when kd_teacher is
// set, plain GAN epochs otherwise), and return the discriminator parameters
// excluding BatchNorm kinds.
ParamSet local_round(ClientState& client, const PerceptualEncoder& enc,
                     const ParamSet& fused_disc, const TrainConfig& cfg);

}  // namespace fedgai
