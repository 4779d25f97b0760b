#ifndef DRL_RELEVANCE_HPP
#define DRL_RELEVANCE_HPP

#include "drl/metanet.hpp"

namespace drl {

enum class SimilarityKind { pearson, cosine, euclidean, gaussian_kernel, learned_mlp };

const char* similarity_name(SimilarityKind k);
SimilarityKind similarity_from_name(const std::string& name);

struct SimilarityMetric {
  SimilarityKind kind = SimilarityKind::pearson;
  double bandwidth = 0.0;  // gaussian only; 0 means median heuristic per graph
  int mlp_hidden = 16;     // learned_mlp only
};

/// Registers the learned-metric MLP weights (no-op for fixed metrics).
void init_metric_params(const SimilarityMetric& metric, int feat_dim,
                        ParamStore& params, Rng& rng);

struct MetricVars {
  Var w1, b1, w2, b2;
};

MetricVars use_metric(Tape& t, const ParamStore& params,
                      const SimilarityMetric& metric);

/// M x M relation matrix over node feature rows. Pearson and cosine are
/// inner products of (centered and) normalized rows with an exact unit
/// diagonal; euclidean maps distance through 1/(1+d); gaussian uses
/// exp(-d^2 / 2*bw^2); learned_mlp scores sigmoid(mlp(|f_m - f_n|)), which
/// is symmetric by construction.
Var relation_matrix(Tape& t, Var node_features, const SimilarityMetric& metric,
                    const MetricVars& mlp = {});

/// Anchor nodes (support, one-hot labels) followed by drift nodes (RoIs,
/// probability rows); S is rebuilt from features every episode.
struct RelevanceGraph {
  Var node_features;      // M x feat_dim, support rows first
  Var relation;           // M x M
  Var x0;                 // M x D
  int anchor_count = 0;
  int drift_count = 0;
  Matrix anchor_onehots;  // anchor_count x D
  std::vector<int> anchor_rows;
};

RelevanceGraph build_graph(Tape& t, const FeatureBundle& bundle,
                           const Episode& episode, const MetaNetConfig& cfg,
                           const SimilarityMetric& metric,
                           const MetricVars& mlp = {});

enum class GcnStructure { normal, residual };
enum class GcnActivation { sigmoid, identity };

struct GcnConfig {
  int depth = 1;
  GcnStructure structure = GcnStructure::normal;
  GcnActivation activation = GcnActivation::sigmoid;
  /// Applies the replicator-dynamics row shift to Z before the node-wise
  /// product; config value for the group-loss equivalence oracle.
  bool replicator_shift = false;
  /// Optional 1/M scaling of S*X*W for deep-stack stability experiments.
  bool scale_by_node_count = false;
};

/// Registers gcn.w1 .. gcn.wL, each D x D.
void init_gcn_params(const GcnConfig& cfg, int width, ParamStore& params, Rng& rng);
std::vector<Var> use_gcn(Tape& t, const ParamStore& params, int depth);

struct GcnTrace {
  Var out;                 // M x D row-stochastic, anchor rows one-hot
  std::vector<Var> z;      // per-layer Z(l)
  std::vector<Var> x;      // per-layer inputs X(l) (x[0] is X(0))
};

/// Normal structure: every layer reads X(0) and only Z(L) is multiplied back
/// into X(0). Residual structure: X(l+1) = renorm(Z(l) * X(l)) with anchor
/// rows re-clamped to their labels after every layer. Node-index sums use
/// value-sorted accumulation, so the output is exactly equivariant under
/// drift-node permutation.
GcnTrace gcn_forward(Tape& t, const RelevanceGraph& graph,
                     const std::vector<Var>& weights, const GcnConfig& cfg);

/// Cross-entropy of drift-node output rows against RoI slot labels.
Var drl_loss(Tape& t, const RelevanceGraph& graph, Var gcn_out,
             const std::vector<int>& roi_label_slots);

/// Replicator-dynamics baseline: pi = S*X shifted nonnegative
/// per row, then the multiplicative update on drift rows, anchors fixed.
/// Returns the drift rows after `iterations` steps. Plain Eigen path, kept
/// independent of the tape ops it is compared against.
Matrix group_loss_iterate(const Matrix& relation, const Matrix& drift_p0,
                          const Matrix& anchor_onehots, int iterations);

/// Tape version of the same update, used by the group-loss training arm.
/// Returns full node embeddings (anchors + drifts).
Var group_loss_forward(Tape& t, const RelevanceGraph& graph, int iterations);

struct SeparationReport {
  double score = 0.0;
  int skipped_singletons = 0;
};

/// Mean silhouette coefficient over Euclidean distances; points in singleton
/// classes are excluded from the mean and counted.
SeparationReport class_separation(const Matrix& points,
                                  const std::vector<int>& labels);

/// Debug dump of S, X(0), per-layer Z(l) and G_out keyed by layer index.
void dump_graph_json(const Tape& t, const RelevanceGraph& graph,
                     const GcnTrace& trace, const std::string& path);

}  // namespace drl

#endif  // DRL_RELEVANCE_HPP
