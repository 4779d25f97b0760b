#include "drl/relevance.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace drl {

const char* similarity_name(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::pearson: return "pearson";
    case SimilarityKind::cosine: return "cosine";
    case SimilarityKind::euclidean: return "euclidean";
    case SimilarityKind::gaussian_kernel: return "gaussian";
    case SimilarityKind::learned_mlp: return "learned";
  }
  return "?";
}

SimilarityKind similarity_from_name(const std::string& name) {
  if (name == "pearson") return SimilarityKind::pearson;
  if (name == "cosine") return SimilarityKind::cosine;
  if (name == "euclidean") return SimilarityKind::euclidean;
  if (name == "gaussian") return SimilarityKind::gaussian_kernel;
  if (name == "learned") return SimilarityKind::learned_mlp;
  throw ConfigError("unknown similarity metric: " + name);
}

void init_metric_params(const SimilarityMetric& metric, int feat_dim,
                        ParamStore& params, Rng& rng) {
  if (metric.kind != SimilarityKind::learned_mlp) return;
  params.init_weight("metric.w1", feat_dim, metric.mlp_hidden, rng);
  // Small positive bias keeps the relu units off their kink for the
  // all-zero diagonal rows of the pairwise-difference input.
  params.values["metric.b1"] = Matrix::Constant(1, metric.mlp_hidden, 0.1);
  params.init_weight("metric.w2", metric.mlp_hidden, 1, rng);
  params.init_zero("metric.b2", 1, 1);
}

MetricVars use_metric(Tape& t, const ParamStore& params,
                      const SimilarityMetric& metric) {
  MetricVars v;
  if (metric.kind != SimilarityKind::learned_mlp) return v;
  v.w1 = params.use(t, "metric.w1");
  v.b1 = params.use(t, "metric.b1");
  v.w2 = params.use(t, "metric.w2");
  v.b2 = params.use(t, "metric.b2");
  return v;
}

namespace {

double median_pairwise_distance(const Matrix& d2) {
  std::vector<double> d;
  d.reserve(static_cast<size_t>(d2.rows() * (d2.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < d2.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d2.cols(); ++j)
      d.push_back(std::sqrt(d2(i, j)));
  std::sort(d.begin(), d.end());
  const double med = d.empty() ? 1.0 : d[d.size() / 2];
  return std::max(med, 1e-6);
}

}  // namespace

Var relation_matrix(Tape& t, Var node_features, const SimilarityMetric& metric,
                    const MetricVars& mlp) {
  const Matrix& f = t.value(node_features);
  const int m = static_cast<int>(f.rows());
  if (m < 2) throw ShapeError("relation_matrix: need at least 2 nodes");
  switch (metric.kind) {
    case SimilarityKind::pearson: {
      if (f.cols() < 2)
        throw ShapeError("relation_matrix: pearson needs feat_dim >= 2");
      Var n = row_normalize(t, row_center(t, node_features), "pearson");
      return set_diag_one(t, matmul_nt(t, n, n));
    }
    case SimilarityKind::cosine: {
      Var n = row_normalize(t, node_features, "cosine");
      return set_diag_one(t, matmul_nt(t, n, n));
    }
    case SimilarityKind::euclidean:
      return inv_one_plus_sqrt(t, pairwise_sqdist(t, node_features));
    case SimilarityKind::gaussian_kernel: {
      Var d2 = pairwise_sqdist(t, node_features);
      const double bw = metric.bandwidth > 0.0
                            ? metric.bandwidth
                            : median_pairwise_distance(t.value(d2));
      return exp_scale(t, d2, -1.0 / (2.0 * bw * bw));
    }
    case SimilarityKind::learned_mlp: {
      if (!mlp.w1.valid())
        throw ConfigError("relation_matrix: learned metric without parameters");
      Var diffs = pairwise_absdiff(t, node_features);
      Var h = relu(t, affine(t, diffs, mlp.w1, mlp.b1));
      Var score = affine(t, h, mlp.w2, mlp.b2);
      return sigmoid(t, reshape_rows(t, score, m, m));
    }
  }
  throw ConfigError("relation_matrix: unknown metric");
}

RelevanceGraph build_graph(Tape& t, const FeatureBundle& bundle,
                           const Episode& episode, const MetaNetConfig& cfg,
                           const SimilarityMetric& metric,
                           const MetricVars& mlp) {
  RelevanceGraph g;
  g.anchor_count = static_cast<int>(episode.support.size());
  g.drift_count = static_cast<int>(episode.queries.size());
  g.node_features = vcat(t, bundle.support_features, bundle.roi_features);
  g.relation = relation_matrix(t, g.node_features, metric, mlp);

  g.anchor_onehots = Matrix::Zero(g.anchor_count, cfg.out_width());
  for (int i = 0; i < g.anchor_count; ++i)
    g.anchor_onehots(i, cfg.slot(episode.support[static_cast<size_t>(i)].class_id)) = 1.0;
  g.anchor_rows.resize(static_cast<size_t>(g.anchor_count));
  for (int i = 0; i < g.anchor_count; ++i) g.anchor_rows[static_cast<size_t>(i)] = i;

  g.x0 = vcat(t, t.constant(g.anchor_onehots), bundle.probs);
  return g;
}

void init_gcn_params(const GcnConfig& cfg, int width, ParamStore& params,
                     Rng& rng) {
  if (cfg.depth < 1) throw ConfigError("gcn depth must be >= 1");
  for (int l = 1; l <= cfg.depth; ++l)
    params.init_weight("gcn.w" + std::to_string(l), width, width, rng);
}

std::vector<Var> use_gcn(Tape& t, const ParamStore& params, int depth) {
  std::vector<Var> w;
  w.reserve(static_cast<size_t>(depth));
  for (int l = 1; l <= depth; ++l)
    w.push_back(params.use(t, "gcn.w" + std::to_string(l)));
  return w;
}

namespace {

Var activate(Tape& t, Var v, GcnActivation act) {
  return act == GcnActivation::sigmoid ? sigmoid(t, v) : v;
}

}  // namespace

GcnTrace gcn_forward(Tape& t, const RelevanceGraph& graph,
                     const std::vector<Var>& weights, const GcnConfig& cfg) {
  if (cfg.depth < 1 || static_cast<int>(weights.size()) != cfg.depth)
    throw ConfigError("gcn_forward: expected " + std::to_string(cfg.depth) +
                      " weight matrices, got " + std::to_string(weights.size()));
  const Eigen::Index d = t.value(graph.x0).cols();
  for (const Var& w : weights)
    if (t.value(w).rows() != d || t.value(w).cols() != d)
      throw ShapeError("gcn_forward: weight " + shape_str(t.value(w)) +
                       " does not match embedding width " + std::to_string(d));
  const double node_scale =
      cfg.scale_by_node_count ? 1.0 / static_cast<double>(t.value(graph.x0).rows())
                              : 1.0;

  GcnTrace trace;
  trace.x.push_back(graph.x0);
  Var x = graph.x0;
  for (int l = 0; l < cfg.depth; ++l) {
    Var pre = matmul_sorted(
        t, graph.relation, matmul_sorted(t, x, weights[static_cast<size_t>(l)]));
    if (cfg.scale_by_node_count) pre = scale(t, pre, node_scale);
    Var z = activate(t, pre, cfg.activation);
    trace.z.push_back(z);
    if (cfg.structure == GcnStructure::residual) {
      if (cfg.replicator_shift) z = shift_rows_nonneg(t, z);
      Var next = renorm_rows(t, cwise_mul(t, z, x));
      x = overwrite_rows(t, next, graph.anchor_rows, graph.anchor_onehots);
      trace.x.push_back(x);
    }
  }
  if (cfg.structure == GcnStructure::normal) {
    Var z_last = trace.z.back();
    if (cfg.replicator_shift) z_last = shift_rows_nonneg(t, z_last);
    Var g = renorm_rows(t, cwise_mul(t, z_last, graph.x0));
    trace.out = overwrite_rows(t, g, graph.anchor_rows, graph.anchor_onehots);
  } else {
    trace.out = x;
  }
  return trace;
}

Var drl_loss(Tape& t, const RelevanceGraph& graph, Var gcn_out,
             const std::vector<int>& roi_label_slots) {
  Var drift = slice_rows(t, gcn_out, graph.anchor_count, graph.drift_count);
  return ce_from_probs(t, drift, roi_label_slots);
}

Matrix group_loss_iterate(const Matrix& relation, const Matrix& drift_p0,
                          const Matrix& anchor_onehots, int iterations) {
  if (iterations < 1)
    throw ConfigError("group_loss_iterate: iterations must be >= 1");
  const Eigen::Index a = anchor_onehots.rows();
  const Eigen::Index n = drift_p0.rows();
  if (relation.rows() != a + n || relation.cols() != a + n)
    throw ShapeError("group_loss_iterate: relation " + shape_str(relation) +
                     " for " + std::to_string(a + n) + " nodes");
  Matrix x(a + n, drift_p0.cols());
  x << anchor_onehots, drift_p0;
  for (int it = 0; it < iterations; ++it) {
    Matrix pi = relation * x;
    for (Eigen::Index i = 0; i < pi.rows(); ++i)
      pi.row(i).array() += -std::min(0.0, pi.row(i).minCoeff()) + 1e-12;
    for (Eigen::Index m = a; m < a + n; ++m) {
      Eigen::RowVectorXd r = x.row(m).cwiseProduct(pi.row(m));
      const double s = r.sum();
      if (s <= 0.0)
        throw NumericError("group_loss_iterate: degenerate update at node " +
                           std::to_string(m));
      x.row(m) = r / s;
    }
  }
  return x.bottomRows(n);
}

Var group_loss_forward(Tape& t, const RelevanceGraph& graph, int iterations) {
  if (iterations < 1)
    throw ConfigError("group_loss_forward: iterations must be >= 1");
  Var x = graph.x0;
  for (int it = 0; it < iterations; ++it) {
    Var pi = shift_rows_nonneg(t, matmul_sorted(t, graph.relation, x));
    Var next = renorm_rows(t, cwise_mul(t, x, pi));
    x = overwrite_rows(t, next, graph.anchor_rows, graph.anchor_onehots);
  }
  return x;
}

SeparationReport class_separation(const Matrix& points,
                                  const std::vector<int>& labels) {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw ShapeError("class_separation: " + std::to_string(labels.size()) +
                     " labels for " + shape_str(points));
  std::map<int, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < n; ++i) by_class[labels[static_cast<size_t>(i)]].push_back(i);
  if (by_class.size() < 2)
    throw ConfigError("class_separation: need at least 2 classes");

  SeparationReport report;
  int counted_classes = 0;
  for (const auto& [c, idx] : by_class) {
    if (idx.size() < 2) ++report.skipped_singletons;
    else ++counted_classes;
  }
  if (counted_classes < 1)
    throw ConfigError("class_separation: all classes are singletons");

  double total = 0.0;
  Eigen::Index counted = 0;
  for (const auto& [c, idx] : by_class) {
    if (idx.size() < 2) continue;  // excluded from the mean
    for (Eigen::Index i : idx) {
      double a = 0.0;
      for (Eigen::Index j : idx)
        if (j != i) a += (points.row(i) - points.row(j)).norm();
      a /= static_cast<double>(idx.size() - 1);
      double b = std::numeric_limits<double>::infinity();
      for (const auto& [oc, oidx] : by_class) {
        if (oc == c) continue;
        double d = 0.0;
        for (Eigen::Index j : oidx) d += (points.row(i) - points.row(j)).norm();
        b = std::min(b, d / static_cast<double>(oidx.size()));
      }
      const double denom = std::max(a, b);
      total += denom > 0.0 ? (b - a) / denom : 0.0;
      ++counted;
    }
  }
  report.score = total / static_cast<double>(counted);
  return report;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void dump_graph_json(const Tape& t, const RelevanceGraph& graph,
                     const GcnTrace& trace, const std::string& path) {
  nlohmann::json j;
  j["relation"] = matrix_json(t.value(graph.relation));
  j["x0"] = matrix_json(t.value(graph.x0));
  nlohmann::json z = nlohmann::json::object();
  for (size_t l = 0; l < trace.z.size(); ++l)
    z[std::to_string(l + 1)] = matrix_json(t.value(trace.z[l]));
  j["z"] = std::move(z);
  j["g_out"] = matrix_json(t.value(trace.out));
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write graph dump: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace drl
