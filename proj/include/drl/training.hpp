#ifndef DRL_TRAINING_HPP
#define DRL_TRAINING_HPP

#include "drl/relevance.hpp"

namespace drl {

/// Full experiment configuration: dataset, model, loss toggles, optimizer
/// and the two-stage episode schedule.
struct TrainConfig {
  DatasetSpec data;
  int hidden_dim = 16;
  int feat_dim = 16;
  GcnConfig gcn;
  SimilarityMetric metric;
  bool use_drl = true;
  bool use_meta = true;
  /// Replaces the dynamic GCN with the fixed replicator update when set.
  bool group_loss_arm = false;
  int group_loss_iterations = 5;

  double lr = 0.01;
  double momentum = 0.9;
  int base_episodes = 60;
  int finetune_episodes = 40;
  int eval_episodes = 20;
  int base_shots = 3;
  int finetune_shots = 3;
  int n_roi = 32;
  bool reinit_gcn_for_finetune = false;
  bool finetune_from_scratch = false;
  std::uint64_t seed = 1;

  MetaNetConfig net() const {
    MetaNetConfig cfg;
    cfg.raw_dim = data.raw_dim;
    cfg.hidden_dim = hidden_dim;
    cfg.feat_dim = feat_dim;
    cfg.total_classes = data.base_classes + data.novel_classes;
    cfg.include_background = data.include_background;
    return cfg;
  }

  void validate() const;
};

struct LossParts {
  double l_cls = 0.0;
  double l_meta = 0.0;
  double l_drl = 0.0;
};

struct LossReport {
  double l_cls = 0.0;
  double l_meta = 0.0;  // 0 when disabled; always 0 in fine_tune
  double l_drl = 0.0;
  double total = 0.0;
  Stage stage = Stage::base;
};

/// Unit-weight sum of the enabled terms; the meta loss is forcibly excluded
/// in the fine-tune stage. Throws NumericError naming any non-finite term.
LossReport compose_loss(Stage stage, const LossParts& parts, bool use_drl,
                        bool use_meta);

struct SgdState {
  std::map<std::string, Matrix> velocity;
};

/// v <- momentum*v + g; theta <- theta - lr*v, per named parameter.
void sgd_step(ParamStore& params, const std::map<std::string, Matrix>& grads,
              double lr, double momentum, SgdState& state);

/// Fresh parameter set for a config (extractor, head, meta classifier, GCN
/// stack and learned metric when selected), seeded deterministically.
ParamStore init_params(const TrainConfig& cfg);

/// One recorded forward pass of an episode; exposes the pieces train/eval need.
struct EpisodeForward {
  FeatureBundle bundle;
  std::vector<int> label_slots;
  Var total;  // valid only when losses were built
  LossReport report;
};

/// Builds the full training graph (losses included) for one episode.
EpisodeForward forward_episode(Tape& t, const TrainConfig& cfg,
                               const ParamStore& params, const Episode& episode);

struct StageResult {
  std::vector<LossReport> losses;
};

/// Episodic SGD over one stage: sample, forward, backward, step. Aborts with
/// the episode index on a non-finite loss. Deterministic given (cfg, seed).
StageResult train_stage(const EpisodeGenerator& gen, const TrainConfig& cfg,
                        Stage stage, ParamStore& params, SgdState& state);

struct EvalReport {
  double query_accuracy = 0.0;
  std::map<int, double> per_class_accuracy;  // keyed by label (0 = background)
  double class_separation = 0.0;
  int separation_warnings = 0;
  int episodes = 0;
};

/// Held-out evaluation: accuracy from argmax of the original probability
/// rows (the DRL graph is never run at inference) plus the silhouette score
/// of RoI features pooled across episodes. Read-only on params.
EvalReport evaluate(const EpisodeGenerator& gen, const TrainConfig& cfg,
                    const ParamStore& params, int episodes,
                    Stage stage = Stage::fine_tune);

}  // namespace drl

#endif  // DRL_TRAINING_HPP
