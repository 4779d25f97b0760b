#ifndef DRL_RUNNER_HPP
#define DRL_RUNNER_HPP

#include "drl/config.hpp"

namespace drl {

inline constexpr const char* kToolVersion = "drl 1.0.0";
inline constexpr int kCsvSchemaVersion = 1;

struct TrainRunResult {
  ParamStore params;
  std::vector<LossReport> base_losses;
  std::vector<LossReport> finetune_losses;
  EvalReport eval;
};

/// Base stage, then fine-tune, then held-out evaluation.
TrainRunResult run_train(const TrainConfig& cfg);

/// Convenience for sweeps: full pipeline under `seed`, reduced to the two
/// reported metrics.
struct VariantOutcome {
  double query_accuracy = 0.0;
  double class_separation = 0.0;
};
VariantOutcome run_variant(const TrainConfig& cfg, std::uint64_t seed);

/// The `train` subcommand body: runs the pipeline and writes checkpoint.json,
/// manifest.json and losses.csv under out_dir. Returns the result.
struct TrainOutputs {
  std::string checkpoint_path;
  std::string manifest_path;
  std::string loss_csv_path;
  TrainRunResult result;
};
TrainOutputs run_train_command(const ConfigMap& raw_cfg, const std::string& out_dir);

/// losses.csv: schema_version,stage,episode,l_cls,l_meta,l_drl,total.
void write_loss_csv(const std::string& path,
                    const std::vector<LossReport>& base_losses,
                    const std::vector<LossReport>& finetune_losses);

/// Sweep CSV: data rows plus one mean/stddev summary row per variant, in
/// deterministic (variant, seed) order.
struct SweepRow {
  std::string variant;
  std::uint64_t seed = 0;
  VariantOutcome outcome;
};
void write_sweep_csv(const std::string& path, const std::string& variant_column,
                     const std::vector<SweepRow>& rows);

}  // namespace drl

#endif  // DRL_RUNNER_HPP
