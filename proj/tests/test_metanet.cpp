#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "drl/metanet.hpp"

using namespace drl;

namespace {

MetaNetConfig tiny_cfg(bool background) {
  MetaNetConfig cfg;
  cfg.raw_dim = 4;
  cfg.hidden_dim = 6;
  cfg.feat_dim = 5;
  cfg.total_classes = 4;
  cfg.include_background = background;
  return cfg;
}

Episode tiny_episode(const MetaNetConfig& cfg, Rng& rng,
                     std::vector<int> class_ids, int shots, int n_roi) {
  Episode ep;
  ep.class_ids = std::move(class_ids);
  ep.shots = shots;
  for (int cid : ep.class_ids)
    for (int k = 0; k < shots; ++k) {
      RowVector raw(cfg.raw_dim);
      for (int i = 0; i < cfg.raw_dim; ++i) raw(i) = cid + rng.normal();
      ep.support.push_back({raw, cid});
    }
  for (int j = 0; j < n_roi; ++j) {
    RowVector raw(cfg.raw_dim);
    for (int i = 0; i < cfg.raw_dim; ++i) raw(i) = rng.normal();
    const int pick = static_cast<int>(
        rng.below(ep.class_ids.size() + (cfg.include_background ? 1 : 0)));
    const int label = cfg.include_background
                          ? (pick == 0 ? 0 : ep.class_ids[static_cast<size_t>(pick - 1)])
                          : ep.class_ids[static_cast<size_t>(pick)];
    ep.queries.push_back({raw, label});
  }
  return ep;
}

ParamStore tiny_params(const MetaNetConfig& cfg, std::uint64_t seed) {
  ParamStore params;
  Rng rng(seed);
  init_metanet_params(cfg, params, rng);
  return params;
}

}  // namespace

TEST_CASE("slot mapping covers both background settings") {
  MetaNetConfig bg = tiny_cfg(true);
  CHECK(bg.out_width() == 5);
  CHECK(bg.slot(0) == 0);
  CHECK(bg.slot(1) == 1);
  CHECK(bg.slot(4) == 4);
  MetaNetConfig nobg = tiny_cfg(false);
  CHECK(nobg.out_width() == 4);
  CHECK(nobg.slot(1) == 0);
  CHECK(nobg.slot(4) == 3);
  CHECK_THROWS_AS(nobg.slot(0), LabelError);
}

TEST_CASE("aggregate of (1,2) with (0.5,0.5) is (0.5,1,0.5,1.5,1,2)") {
  Tape t;
  Matrix r(1, 2), a(1, 2);
  r << 1, 2;
  a << 0.5, 0.5;
  Var out = aggregate(t, t.constant(r), t.constant(a));
  Matrix expected(1, 6);
  expected << 0.5, 1.0, 0.5, 1.5, 1.0, 2.0;
  CHECK(t.value(out) == expected);
}

TEST_CASE("aggregate_all row j*C+e equals aggregate(roi j, class e)") {
  Rng rng(3);
  Tape t;
  Matrix rois(3, 4), att(2, 4);
  for (Eigen::Index i = 0; i < rois.size(); ++i) rois(i) = rng.normal();
  for (Eigen::Index i = 0; i < att.size(); ++i) att(i) = rng.uniform();
  Var all = aggregate_all(t, t.constant(rois), t.constant(att), 3, 2);
  for (int j = 0; j < 3; ++j)
    for (int e = 0; e < 2; ++e) {
      Var one = aggregate(t, t.constant(rois.row(j)), t.constant(att.row(e)));
      CHECK(t.value(all).row(j * 2 + e) == t.value(one).row(0));
    }
}

TEST_CASE("class_attentive is exactly invariant to shot order") {
  MetaNetConfig cfg = tiny_cfg(true);
  Rng rng(5);
  Matrix feats(6, cfg.feat_dim);  // 2 classes x 3 shots
  for (Eigen::Index i = 0; i < feats.size(); ++i) feats(i) = rng.normal() * 3.0;

  Tape t1;
  Var a1 = class_attentive(t1, t1.constant(feats), 2, 3);

  // permute shots within each class
  Matrix shuffled(6, cfg.feat_dim);
  const int perm[3] = {2, 0, 1};
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < 3; ++k)
      shuffled.row(c * 3 + k) = feats.row(c * 3 + perm[k]);
  Tape t2;
  Var a2 = class_attentive(t2, t2.constant(shuffled), 2, 3);
  CHECK(t1.value(a1) == t2.value(a2));  // bitwise

  const Matrix& a = t1.value(a1);
  CHECK((a.array() > 0.0).all());
  CHECK((a.array() < 1.0).all());
}

TEST_CASE("classify yields stochastic rows with absent slots exactly zero") {
  for (bool background : {true, false}) {
    MetaNetConfig cfg = tiny_cfg(background);
    Rng rng(11);
    // episode over classes {2, 4} only: slots for 1 and 3 must stay 0
    Episode ep = tiny_episode(cfg, rng, {2, 4}, 2, 6);
    ParamStore params = tiny_params(cfg, 21);
    Tape t;
    MetaNetVars net = use_metanet(t, params);
    FeatureBundle b = metanet_forward(t, net, cfg, ep);
    const Matrix& p = t.value(b.probs);
    REQUIRE(p.rows() == 6);
    REQUIRE(p.cols() == cfg.out_width());
    for (int j = 0; j < 6; ++j) {
      CHECK(p.row(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK((p.row(j).array() >= 0.0).all());
      CHECK(p(j, cfg.slot(1)) == 0.0);
      CHECK(p(j, cfg.slot(3)) == 0.0);
      CHECK(p(j, cfg.slot(2)) > 0.0);
      CHECK(p(j, cfg.slot(4)) > 0.0);
      if (background) CHECK(p(j, 0) > 0.0);
    }
  }
}

TEST_CASE("the full forward pass is exactly invariant to shot order") {
  MetaNetConfig cfg = tiny_cfg(true);
  Rng rng(13);
  Episode ep = tiny_episode(cfg, rng, {1, 3}, 3, 4);
  ParamStore params = tiny_params(cfg, 33);

  Episode shuffled = ep;
  const int perm[3] = {1, 2, 0};
  for (int c = 0; c < ep.class_count(); ++c)
    for (int k = 0; k < 3; ++k)
      shuffled.support[static_cast<size_t>(c * 3 + k)] =
          ep.support[static_cast<size_t>(c * 3 + perm[k])];

  Tape t1, t2;
  FeatureBundle b1 = metanet_forward(t1, use_metanet(t1, params), cfg, ep);
  FeatureBundle b2 = metanet_forward(t2, use_metanet(t2, params), cfg, shuffled);
  CHECK(t1.value(b1.attentive) == t2.value(b2.attentive));
  CHECK(t1.value(b1.probs) == t2.value(b2.probs));
}

TEST_CASE("meta_loss at uniform predictions equals ln C") {
  MetaNetConfig cfg = tiny_cfg(true);
  ParamStore params = tiny_params(cfg, 44);
  // zero meta weights -> uniform softmax over the 3 active classes
  params.values["meta.w"].setZero();
  Rng rng(15);
  Episode ep = tiny_episode(cfg, rng, {1, 2, 4}, 2, 3);
  Tape t;
  MetaNetVars net = use_metanet(t, params);
  FeatureBundle b = metanet_forward(t, net, cfg, ep);
  Var l = meta_loss(t, net, b.support_features, ep.class_ids, ep.shots);
  CHECK(t.scalar(l) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("cls_loss matches -mean ln p over hand-set probability rows") {
  Tape t;
  Matrix p(2, 3);
  p << 0.7, 0.2, 0.1, 0.1, 0.1, 0.8;
  Var l = cls_loss(t, t.constant(p), {0, 2});
  CHECK(t.scalar(l) ==
        doctest::Approx(0.5 * (-std::log(0.7) - std::log(0.8))).epsilon(1e-12));
}

TEST_CASE("query_slots maps labels through the configured slot rule") {
  MetaNetConfig cfg = tiny_cfg(true);
  Episode ep;
  ep.queries.push_back({RowVector::Zero(4), 0});
  ep.queries.push_back({RowVector::Zero(4), 3});
  CHECK(query_slots(cfg, ep) == std::vector<int>{0, 3});
  MetaNetConfig nobg = tiny_cfg(false);
  Episode ep2;
  ep2.queries.push_back({RowVector::Zero(4), 3});
  CHECK(query_slots(nobg, ep2) == std::vector<int>{2});
}
