#include <doctest.h>

#include <cmath>

#include "drl/training.hpp"

using namespace drl;

namespace {

TrainConfig small_train_cfg() {
  TrainConfig cfg;
  cfg.data.base_classes = 3;
  cfg.data.novel_classes = 2;
  cfg.data.base_shots = 20;
  cfg.data.novel_shots = 4;
  cfg.data.raw_dim = 6;
  cfg.data.class_mean_radius = 3.0;
  cfg.data.within_class_std = 1.0;
  cfg.data.seed = 7;
  cfg.hidden_dim = 8;
  cfg.feat_dim = 6;
  cfg.base_episodes = 6;
  cfg.finetune_episodes = 4;
  cfg.eval_episodes = 3;
  cfg.base_shots = 2;
  cfg.finetune_shots = 2;
  cfg.n_roi = 8;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("compose_loss sums the enabled terms with unit weights") {
  LossParts parts{1.0, 0.5, 0.2};
  LossReport r = compose_loss(Stage::base, parts, true, true);
  CHECK(r.total == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(r.l_meta == 0.5);

  r = compose_loss(Stage::base, parts, true, false);
  CHECK(r.total == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(r.l_meta == 0.0);

  r = compose_loss(Stage::base, parts, false, false);
  CHECK(r.total == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("compose_loss always drops the meta term in fine-tune") {
  LossParts parts{1.0, 0.5, 0.2};
  LossReport r = compose_loss(Stage::fine_tune, parts, true, true);
  CHECK(r.l_meta == 0.0);
  CHECK(r.total == doctest::Approx(1.2).epsilon(1e-15));
}

TEST_CASE("compose_loss names the non-finite term") {
  LossParts parts{1.0, std::nan(""), 0.2};
  try {
    compose_loss(Stage::base, parts, true, true);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("l_meta") != std::string::npos);
  }
  // the broken term is ignored when its toggle is off
  CHECK_NOTHROW(compose_loss(Stage::base, parts, true, false));
}

TEST_CASE("two sgd steps with constant gradient move by lr*(1+1.9)*g") {
  ParamStore params;
  params.values["w"] = Matrix::Zero(1, 1);
  Matrix g = Matrix::Ones(1, 1);
  SgdState state;
  sgd_step(params, {{"w", g}}, 0.1, 0.9, state);
  CHECK(params.values["w"](0, 0) == doctest::Approx(-0.1).epsilon(1e-15));
  sgd_step(params, {{"w", g}}, 0.1, 0.9, state);
  // v2 = 0.9*1 + 1 = 1.9; total displacement lr*(1 + 1.9)
  CHECK(params.values["w"](0, 0) == doctest::Approx(-0.29).epsilon(1e-12));
}

TEST_CASE("sgd rejects a gradient with the wrong shape") {
  ParamStore params;
  params.values["w"] = Matrix::Zero(2, 2);
  SgdState state;
  CHECK_THROWS_AS(sgd_step(params, {{"w", Matrix::Zero(1, 2)}}, 0.1, 0.9, state),
                  ShapeError);
}

TEST_CASE("init_params registers every trainable matrix the config needs") {
  TrainConfig cfg = small_train_cfg();
  cfg.gcn.depth = 2;
  cfg.metric.kind = SimilarityKind::learned_mlp;
  ParamStore p = init_params(cfg);
  for (const char* name :
       {"extractor.w1", "extractor.b1", "extractor.w2", "extractor.b2", "head.w",
        "head.b", "meta.w", "meta.b", "gcn.w1", "gcn.w2", "metric.w1", "metric.b1",
        "metric.w2", "metric.b2"})
    CHECK(p.values.count(name) == 1);
  CHECK_FALSE(p.base_trained);
  CHECK(p.values.at("gcn.w1").rows() == cfg.net().out_width());

  cfg.metric.kind = SimilarityKind::pearson;
  cfg.gcn.depth = 1;
  ParamStore q = init_params(cfg);
  CHECK(q.values.count("metric.w1") == 0);
  CHECK(q.values.count("gcn.w2") == 0);
}

TEST_CASE("forward_episode reports the same totals the tape computes") {
  TrainConfig cfg = small_train_cfg();
  EpisodeGenerator gen(cfg.data);
  Rng rng(3);
  Episode ep = gen.sample(Stage::base, 2, cfg.n_roi, rng);
  ParamStore params = init_params(cfg);
  Tape t;
  EpisodeForward fwd = forward_episode(t, cfg, params, ep);
  CHECK(t.scalar(fwd.total) == doctest::Approx(fwd.report.total).epsilon(1e-12));
  CHECK(fwd.report.l_cls > 0.0);
  CHECK(fwd.report.l_meta > 0.0);
  CHECK(fwd.report.l_drl > 0.0);
}

TEST_CASE("training is deterministic given the config") {
  TrainConfig cfg = small_train_cfg();
  EpisodeGenerator gen(cfg.data);

  auto run = [&] {
    ParamStore params = init_params(cfg);
    SgdState state;
    train_stage(gen, cfg, Stage::base, params, state);
    train_stage(gen, cfg, Stage::fine_tune, params, state);
    return params;
  };
  ParamStore a = run();
  ParamStore b = run();
  CHECK(a == b);
}

TEST_CASE("a zero-episode stage leaves parameters untouched") {
  TrainConfig cfg = small_train_cfg();
  cfg.base_episodes = 0;
  EpisodeGenerator gen(cfg.data);
  ParamStore params = init_params(cfg);
  ParamStore before = params;
  SgdState state;
  StageResult r = train_stage(gen, cfg, Stage::base, params, state);
  CHECK(r.losses.empty());
  CHECK(params == before);
  CHECK_FALSE(params.base_trained);
}

TEST_CASE("fine-tune refuses untrained parameters unless overridden") {
  TrainConfig cfg = small_train_cfg();
  EpisodeGenerator gen(cfg.data);
  ParamStore params = init_params(cfg);
  SgdState state;
  CHECK_THROWS_AS(train_stage(gen, cfg, Stage::fine_tune, params, state),
                  ConfigError);
  cfg.finetune_from_scratch = true;
  CHECK_NOTHROW(train_stage(gen, cfg, Stage::fine_tune, params, state));
}

TEST_CASE("base training flips base_trained and losses trend downward") {
  TrainConfig cfg = small_train_cfg();
  cfg.base_episodes = 40;
  EpisodeGenerator gen(cfg.data);
  ParamStore params = init_params(cfg);
  SgdState state;
  StageResult r = train_stage(gen, cfg, Stage::base, params, state);
  CHECK(params.base_trained);
  REQUIRE(r.losses.size() == 40);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += r.losses[static_cast<size_t>(i)].total;
    last += r.losses[static_cast<size_t>(30 + i)].total;
  }
  CHECK(last < first);
  for (const LossReport& l : r.losses) CHECK(std::isfinite(l.total));
}

TEST_CASE("evaluate is read-only and near chance for untrained params") {
  TrainConfig cfg = small_train_cfg();
  cfg.eval_episodes = 10;
  EpisodeGenerator gen(cfg.data);
  ParamStore params = init_params(cfg);
  ParamStore before = params;
  EvalReport r = evaluate(gen, cfg, params, cfg.eval_episodes);
  CHECK(params == before);
  CHECK(r.episodes == 10);
  // 6 labels (5 classes + background): chance is ~1/6
  CHECK(r.query_accuracy < 0.45);
  CHECK(r.query_accuracy >= 0.0);
  double weighted = 0.0;
  CHECK(r.per_class_accuracy.size() >= 2);
  for (const auto& [label, acc] : r.per_class_accuracy) {
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    (void)weighted;
  }
}

TEST_CASE("evaluate never runs the relevance graph") {
  TrainConfig cfg = small_train_cfg();
  EpisodeGenerator gen(cfg.data);
  ParamStore params = init_params(cfg);
  EvalReport with_drl = evaluate(gen, cfg, params, 4);
  TrainConfig off = cfg;
  off.use_drl = false;
  EvalReport without = evaluate(gen, off, params, 4);
  CHECK(with_drl.query_accuracy == without.query_accuracy);
  CHECK(with_drl.class_separation == without.class_separation);
}

TEST_CASE("config validation rejects out-of-range settings") {
  TrainConfig cfg = small_train_cfg();
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_train_cfg();
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_train_cfg();
  cfg.gcn.depth = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_train_cfg();
  cfg.n_roi = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("the group-loss arm trains end to end") {
  TrainConfig cfg = small_train_cfg();
  cfg.group_loss_arm = true;
  cfg.group_loss_iterations = 3;
  EpisodeGenerator gen(cfg.data);
  ParamStore params = init_params(cfg);
  SgdState state;
  StageResult r = train_stage(gen, cfg, Stage::base, params, state);
  for (const LossReport& l : r.losses) {
    CHECK(std::isfinite(l.total));
    CHECK(l.l_drl > 0.0);
  }
}
