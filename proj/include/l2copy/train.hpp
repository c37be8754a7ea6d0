#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "l2copy/config.hpp"
#include "l2copy/data.hpp"
#include "l2copy/loss.hpp"
#include "l2copy/model.hpp"

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

/// d^-0.5 * min(step^-0.5, step * warmup^-1.5). Throws ContractError for step 0.
double lr_schedule(std::size_t step, std::size_t d, std::size_t warmup);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  std::size_t step = 0;
  std::map<std::string, std::vector<Real>> m;
  std::map<std::string, std::vector<Real>> v;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Parameters that never received a gradient count as zero
/// gradient. Throws NumericError naming the parameter on NaN/inf gradients.
void adam_step(ParamStore& params, AdamState& state, double rate);

/// Scales all gradients so their global L2 norm is at most max_norm and
/// returns the norm before scaling. max_norm <= 0 disables clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t examples = 0;
  double l_ape = 0;
  double l_copy = 0;
  double l_pred = 0;
  double l_all = 0;
  double pred_acc = 0;   // percent of mt tokens; 0 without the Predictor
  double token_acc = 0;  // teacher-forced percent of target tokens
  double lr = 0;
  double grad_norm = 0;

  std::string to_json() const;
};

/// Batch position that, together with the optimizer state, fully determines
/// the rest of a run.
struct TrainingState {
  AdamState adam;
  std::size_t epoch = 0;
  std::size_t batch = 0;  // next batch within the epoch
};

/// Teacher-forced batch training with per-token normalised losses.
class Trainer {
 public:
  Trainer(ApeModel& model, const Config& config, std::vector<EncodedTriplet> corpus);

  StepMetrics train_step();
  /// Runs until the optimizer reaches `until_step`; on_step sees every step.
  void train_until(std::size_t until_step, const std::function<void(const StepMetrics&)>& on_step = {});

  const TrainingState& state() const { return state_; }
  void set_state(TrainingState state);
  std::size_t step() const { return state_.adam.step; }
  const std::vector<EncodedTriplet>& corpus() const { return corpus_; }

 private:
  void ensure_batches();

  ApeModel& model_;
  Config config_;
  std::vector<EncodedTriplet> corpus_;
  TrainingState state_;
  std::vector<Batch> batches_;
  std::size_t batches_epoch_ = static_cast<std::size_t>(-1);
};

struct TeacherForcedStats {
  double token_acc = 0;  // percent
  double pred_acc = 0;   // percent; 0 without the Predictor
  double l_ape = 0;      // per target token
  double l_copy = 0;     // per mt token
  double l_pred = 0;     // per mt token
  std::size_t target_tokens = 0;
  std::size_t mt_tokens = 0;
};

TeacherForcedStats evaluate_teacher_forced(const ApeModel& model, const std::vector<EncodedTriplet>& corpus,
                                           const LossWeights& weights);

// ---------------------------------------------------------------------------
// Checkpoints: a text manifest followed by little-endian float32 payloads.

struct Checkpoint {
  Config config;
  Vocab vocab;
  std::unique_ptr<ApeModel> model;
  std::optional<TrainingState> state;
};

void save_checkpoint(const std::string& path, const Config& config, const Vocab& vocab, const ApeModel& model,
                     const TrainingState* state = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
