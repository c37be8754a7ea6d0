#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace l2copy {

/// Architecture and ablation switches.
struct ModelConfig {
  std::size_t d = 32;
  std::size_t heads = 2;
  std::size_t filter = 64;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t predictor_layers = 2;
  std::size_t vocab_size = 0;  // filled in from the vocabulary
  std::size_t max_len = 256;   // rows of the position table

  bool interactive = true;
  bool predictor = true;
  bool copynet = true;
  bool joint_training = true;

  // Which attention sublayers receive the copy-score scaling mask.
  bool mask_encoder = true;
  bool mask_decoder = true;
  bool mask_copynet = true;

  // Baseline (non-interactive) decoder: attend to mt before src.
  bool mt_first = false;

  double dropout = 0.0;
  double norm_eps = 1e-6;

  /// Throws ConfigError on contradictory or out-of-range values.
  void validate() const;
};

struct LossWeights {
  double alpha = 0.9;
  double lambda = 1.0;
  double prob_floor = 1e-9;  // floor on P(y_j) before the log
  double score_eps = 1e-7;   // clamp for s inside the predictor cross-entropy
};

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t token_budget = 1000;
  std::size_t warmup = 400;
  double lr_scale = 1.0;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  std::uint64_t seed = 1;
  std::size_t log_interval = 50;
  std::size_t checkpoint_interval = 0;  // 0 disables intermediate checkpoints
};

struct DecodeConfig {
  std::size_t beam = 4;
  double length_alpha = 1.0;
  std::size_t max_len = 0;  // 0 means 1.5*(I+K)+5
};

struct DataConfig {
  std::size_t min_count = 1;
  std::size_t bpe_merges = 0;  // 0 keeps the corpus tokens as they are
  bool union_labels = false;
};

struct Config {
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  DecodeConfig decode;
  DataConfig data;

  /// Sets one key (e.g. "model.d") from its text form. Unknown keys and
  /// unparsable values throw ConfigError.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  /// Every key in a stable order.
  static const std::vector<std::string>& keys();

  /// key=value lines; parsing the result with apply_text reproduces *this.
  std::string to_text() const;
  /// Applies key=value lines; '#' starts a comment, blank lines are skipped.
  void apply_text(std::string_view text);
  void apply_file(const std::string& path);
  /// Applies one "key=value" override.
  void apply_override(std::string_view assignment);

  void validate() const;
};

/// "test" (d=32, two layers, runs in seconds) or "paper" (d=512, six layers).
Config profile_config(std::string_view profile);

/// The seven ablation rows: interactive, predictor, copynet, joint training.
struct AblationRow {
  int id;
  bool interactive;
  bool predictor;
  bool copynet;
  bool joint_training;
};
const std::vector<AblationRow>& ablation_grid();
/// Returns the row id for a switch combination, or throws ConfigError when
/// the combination is not one of the seven rows.
int ablation_row_id(bool interactive, bool predictor, bool copynet, bool joint_training);
void apply_ablation_row(ModelConfig& model, const AblationRow& row);

}  // namespace l2copy
