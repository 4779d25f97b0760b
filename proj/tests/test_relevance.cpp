#include <doctest.h>

#include <cmath>

#include "drl/relevance.hpp"

using namespace drl;

namespace {

Matrix two_rows(double a0, double a1, double a2, double b0, double b1, double b2) {
  Matrix m(2, 3);
  m << a0, a1, a2, b0, b1, b2;
  return m;
}

struct TinyWorld {
  MetaNetConfig cfg;
  Episode episode;
  ParamStore params;
};

TinyWorld tiny_world(bool background, std::uint64_t seed) {
  TinyWorld w;
  w.cfg.raw_dim = 4;
  w.cfg.hidden_dim = 6;
  w.cfg.feat_dim = 5;
  w.cfg.total_classes = 3;
  w.cfg.include_background = background;
  Rng rng(seed);
  w.episode.class_ids = {1, 2, 3};
  w.episode.shots = 2;
  for (int cid : w.episode.class_ids)
    for (int k = 0; k < 2; ++k) {
      RowVector raw(4);
      for (int i = 0; i < 4; ++i) raw(i) = cid + rng.normal();
      w.episode.support.push_back({raw, cid});
    }
  for (int j = 0; j < 4; ++j) {
    RowVector raw(4);
    for (int i = 0; i < 4; ++i) raw(i) = rng.normal();
    const int label = background ? static_cast<int>(rng.below(4))
                                 : 1 + static_cast<int>(rng.below(3));
    w.episode.queries.push_back({raw, label});
  }
  Rng prng(seed ^ 0xFEED);
  init_metanet_params(w.cfg, w.params, prng);
  return w;
}

RelevanceGraph tiny_graph(Tape& t, const TinyWorld& w,
                          const SimilarityMetric& metric) {
  MetaNetVars net = use_metanet(t, w.params);
  FeatureBundle b = metanet_forward(t, net, w.cfg, w.episode);
  return build_graph(t, b, w.episode, w.cfg, metric);
}

}  // namespace

TEST_CASE("pearson of (1,2,3) vs (1,2,4) is 9/sqrt(84), diagonal exactly 1") {
  Tape t;
  Var s = relation_matrix(t, t.constant(two_rows(1, 2, 3, 1, 2, 4)),
                          {SimilarityKind::pearson});
  const Matrix& m = t.value(s);
  CHECK(m(0, 0) == 1.0);
  CHECK(m(1, 1) == 1.0);
  CHECK(m(0, 1) == doctest::Approx(9.0 / std::sqrt(84.0)).epsilon(1e-12));
  CHECK(m(0, 1) == m(1, 0));
}

TEST_CASE("pearson of perfectly anti-correlated rows is -1") {
  Tape t;
  Var s = relation_matrix(t, t.constant(two_rows(1, 2, 3, 3, 2, 1)),
                          {SimilarityKind::pearson});
  CHECK(t.value(s)(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("pearson rejects a constant feature row, naming it") {
  Tape t;
  Var f = t.constant(two_rows(1, 2, 3, 5, 5, 5));
  try {
    relation_matrix(t, f, {SimilarityKind::pearson});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("pearson") != std::string::npos);
  }
}

TEST_CASE("cosine of parallel rows is 1 regardless of scale") {
  Tape t;
  Var s = relation_matrix(t, t.constant(two_rows(1, 2, 3, 2, 4, 6)),
                          {SimilarityKind::cosine});
  CHECK(t.value(s)(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("euclidean similarity is 1/(1+d)") {
  Tape t;
  Var s = relation_matrix(t, t.constant(two_rows(0, 0, 0, 3, 4, 0)),
                          {SimilarityKind::euclidean});
  CHECK(t.value(s)(0, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(t.value(s)(0, 0) == 1.0);
}

TEST_CASE("gaussian kernel has unit diagonal and honors the bandwidth") {
  Tape t;
  SimilarityMetric metric{SimilarityKind::gaussian_kernel, 2.0};
  Var s = relation_matrix(t, t.constant(two_rows(0, 0, 0, 2, 0, 0)), metric);
  CHECK(t.value(s)(0, 0) == 1.0);
  CHECK(t.value(s)(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("learned metric is symmetric and in (0,1)") {
  Rng rng(8);
  ParamStore params;
  SimilarityMetric metric{SimilarityKind::learned_mlp, 0.0, 4};
  init_metric_params(metric, 3, params, rng);
  Tape t;
  MetricVars mlp = use_metric(t, params, metric);
  Matrix f(3, 3);
  for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = rng.normal();
  Var s = relation_matrix(t, t.constant(f), metric, mlp);
  const Matrix& m = t.value(s);
  CHECK(m == m.transpose().eval());
  CHECK((m.array() > 0.0).all());
  CHECK((m.array() < 1.0).all());
}

TEST_CASE("build_graph stacks anchors over drifts with one-hot labels") {
  TinyWorld w = tiny_world(true, 19);
  Tape t;
  RelevanceGraph g = tiny_graph(t, w, {SimilarityKind::pearson});
  CHECK(g.anchor_count == 6);
  CHECK(g.drift_count == 4);
  CHECK(t.value(g.relation).rows() == 10);
  CHECK(t.value(g.x0).rows() == 10);
  CHECK(t.value(g.x0).cols() == w.cfg.out_width());
  for (int i = 0; i < g.anchor_count; ++i) {
    CHECK(g.anchor_onehots.row(i).sum() == 1.0);
    CHECK(t.value(g.x0).row(i) == g.anchor_onehots.row(i));
    const int cid = w.episode.support[static_cast<size_t>(i)].class_id;
    CHECK(g.anchor_onehots(i, w.cfg.slot(cid)) == 1.0);
  }
}

TEST_CASE("gcn with identity pieces reduces to renorm(p * p) on drift rows") {
  // S = I, W = I, identity activation, normal structure, depth 1:
  // Z = X0, G = renorm(X0 .* X0), anchors reset.
  const int m = 4, d = 3;
  Tape t;
  RelevanceGraph g;
  g.anchor_count = 1;
  g.drift_count = 3;
  g.anchor_onehots = Matrix::Zero(1, d);
  g.anchor_onehots(0, 1) = 1.0;
  g.anchor_rows = {0};
  Matrix x0(m, d);
  x0 << 0, 1, 0, 0.2, 0.3, 0.5, 0.6, 0.2, 0.2, 0.1, 0.8, 0.1;
  g.x0 = t.constant(x0);
  g.relation = t.constant(Matrix::Identity(m, m));
  g.node_features = t.constant(Matrix::Ones(m, 2));

  GcnConfig cfg;
  cfg.depth = 1;
  cfg.activation = GcnActivation::identity;
  cfg.structure = GcnStructure::normal;
  std::vector<Var> weights = {t.constant(Matrix::Identity(d, d))};
  GcnTrace trace = gcn_forward(t, g, weights, cfg);
  const Matrix& out = t.value(trace.out);
  CHECK(out.row(0) == g.anchor_onehots.row(0));
  for (int i = 1; i < m; ++i) {
    RowVector sq = x0.row(i).cwiseProduct(x0.row(i));
    sq /= sq.sum();
    CHECK((out.row(i) - sq).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gcn output is row-stochastic with one-hot anchors, both structures") {
  TinyWorld w = tiny_world(true, 23);
  for (GcnStructure structure : {GcnStructure::normal, GcnStructure::residual}) {
    for (int depth : {1, 2, 4}) {
      GcnConfig cfg;
      cfg.depth = depth;
      cfg.structure = structure;
      ParamStore params = w.params;
      Rng rng(31);
      init_gcn_params(cfg, w.cfg.out_width(), params, rng);
      Tape t;
      MetaNetVars net = use_metanet(t, params);
      FeatureBundle b = metanet_forward(t, net, w.cfg, w.episode);
      RelevanceGraph g =
          build_graph(t, b, w.episode, w.cfg, {SimilarityKind::pearson});
      GcnTrace trace = gcn_forward(t, g, use_gcn(t, params, depth), cfg);
      const Matrix& out = t.value(trace.out);
      for (int i = 0; i < g.anchor_count; ++i)
        CHECK(out.row(i) == g.anchor_onehots.row(i));
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        CHECK(out.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((out.row(i).array() >= 0.0).all());
      }
    }
  }
}

TEST_CASE("drl_loss scores only the drift rows") {
  Tape t;
  RelevanceGraph g;
  g.anchor_count = 1;
  g.drift_count = 2;
  Matrix out(3, 2);
  out << 1.0, 0.0,  // anchor, must be ignored
      0.7, 0.3, 0.2, 0.8;
  Var loss = drl_loss(t, g, t.constant(out), {0, 1});
  CHECK(t.scalar(loss) ==
        doctest::Approx(0.5 * (-std::log(0.7) - std::log(0.8))).epsilon(1e-12));
}

TEST_CASE("one replicator step maps (0.5,0.5) with payoff (0.6,0.4) to (0.6,0.4)") {
  Matrix relation(2, 2);
  // pi_drift = 0.2*(1,0) + 0.8*(0.5,0.5) = (0.6,0.4)
  relation << 1.0, 0.2, 0.2, 0.8;
  Matrix anchor(1, 2), drift(1, 2);
  anchor << 1, 0;
  drift << 0.5, 0.5;
  Matrix out = group_loss_iterate(relation, drift, anchor, 1);
  CHECK(out(0, 0) == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(out(0, 1) == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("one-hot drift rows are absorbing under replicator dynamics") {
  Matrix relation(2, 2);
  relation << 1.0, 0.5, 0.5, 1.0;
  Matrix anchor(1, 2), drift(1, 2);
  anchor << 1, 0;
  drift << 0, 1;
  Matrix out = group_loss_iterate(relation, drift, anchor, 7);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 1) == 1.0);
}

TEST_CASE("replicator iterate rejects zero iterations") {
  Matrix relation = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(
      group_loss_iterate(relation, Matrix::Ones(1, 2) * 0.5, Matrix::Ones(1, 2), 0),
      ConfigError);
}

TEST_CASE("stronger anchor affinity pulls more mass onto the anchor's label") {
  Matrix anchor(1, 2), drift(1, 2);
  anchor << 1, 0;
  drift << 0.5, 0.5;
  double prev = -1.0;
  for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    Matrix relation(2, 2);
    relation << 1.0, s, s, 1.0;
    Matrix out = group_loss_iterate(relation, drift, anchor, 3);
    CHECK(out(0, 0) > prev);
    prev = out(0, 0);
  }
  CHECK(prev > 0.5);
}

TEST_CASE("silhouette separates planted clusters and is 0 on coincident points") {
  Rng rng(41);
  Matrix pts(40, 3);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) {
    const int c = i % 2;
    labels[static_cast<size_t>(i)] = c;
    for (int j = 0; j < 3; ++j)
      pts(i, j) = (c == 0 ? -10.0 : 10.0) + 0.01 * rng.normal();
  }
  CHECK(class_separation(pts, labels).score > 0.9);

  Matrix same = Matrix::Ones(6, 3);
  std::vector<int> l2 = {0, 0, 0, 1, 1, 1};
  CHECK(class_separation(same, l2).score == 0.0);
}

TEST_CASE("silhouette excludes singleton classes and counts them") {
  Matrix pts(5, 2);
  pts << 0, 0, 0.1, 0, 10, 10, 10.1, 10, 55, 55;
  std::vector<int> labels = {0, 0, 1, 1, 2};
  SeparationReport r = class_separation(pts, labels);
  CHECK(r.skipped_singletons == 1);
  CHECK(r.score > 0.9);
}

TEST_CASE("silhouette is invariant to point ordering") {
  Rng rng(51);
  Matrix pts(12, 2);
  std::vector<int> labels(12);
  for (int i = 0; i < 12; ++i) {
    labels[static_cast<size_t>(i)] = i % 3;
    pts(i, 0) = labels[static_cast<size_t>(i)] * 4.0 + rng.normal();
    pts(i, 1) = rng.normal();
  }
  const double base = class_separation(pts, labels).score;
  Matrix shuffled(12, 2);
  std::vector<int> slabels(12);
  for (int i = 0; i < 12; ++i) {
    const int j = (i * 5) % 12;  // a fixed permutation
    shuffled.row(i) = pts.row(j);
    slabels[static_cast<size_t>(i)] = labels[static_cast<size_t>(j)];
  }
  CHECK(class_separation(shuffled, slabels).score ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("metric names round-trip and unknown names are rejected") {
  for (SimilarityKind k :
       {SimilarityKind::pearson, SimilarityKind::cosine, SimilarityKind::euclidean,
        SimilarityKind::gaussian_kernel, SimilarityKind::learned_mlp})
    CHECK(similarity_from_name(similarity_name(k)) == k);
  CHECK_THROWS_AS(similarity_from_name("manhattan"), ConfigError);
}
