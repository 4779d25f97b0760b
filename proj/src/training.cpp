#include "drl/training.hpp"

#include <cmath>

namespace drl {

void TrainConfig::validate() const {
  if (gcn.depth < 1) throw ConfigError("gcn.depth must be >= 1");
  if (lr <= 0.0) throw ConfigError("lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("momentum must be in [0, 1)");
  if (hidden_dim < 1 || feat_dim < 1)
    throw ConfigError("hidden_dim and feat_dim must be >= 1");
  if (base_episodes < 0 || finetune_episodes < 0 || eval_episodes < 0)
    throw ConfigError("episode counts must be >= 0");
  if (base_shots < 1 || finetune_shots < 1)
    throw ConfigError("shots must be >= 1");
  if (n_roi < 1) throw ConfigError("n_roi must be >= 1");
  if (group_loss_iterations < 1)
    throw ConfigError("group_loss_iterations must be >= 1");
  if (metric.kind == SimilarityKind::gaussian_kernel && metric.bandwidth < 0.0)
    throw ConfigError("gaussian bandwidth must be >= 0");
}

LossReport compose_loss(Stage stage, const LossParts& parts, bool use_drl,
                        bool use_meta) {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite loss term ") + name);
    return v;
  };
  LossReport r;
  r.stage = stage;
  r.l_cls = check(parts.l_cls, "l_cls");
  const bool meta_active = use_meta && stage == Stage::base;
  r.l_meta = meta_active ? check(parts.l_meta, "l_meta") : 0.0;
  r.l_drl = use_drl ? check(parts.l_drl, "l_drl") : 0.0;
  r.total = r.l_cls + r.l_meta + r.l_drl;
  return r;
}

void sgd_step(ParamStore& params, const std::map<std::string, Matrix>& grads,
              double lr, double momentum, SgdState& state) {
  for (const auto& [name, g] : grads) {
    Matrix& value = params.values.at(name);
    if (g.rows() != value.rows() || g.cols() != value.cols())
      throw ShapeError("sgd_step: gradient " + shape_str(g) + " for " + name +
                       " " + shape_str(value));
    auto [it, inserted] = state.velocity.try_emplace(
        name, Matrix::Zero(value.rows(), value.cols()));
    Matrix& v = it->second;
    v = momentum * v + g;
    value -= lr * v;
  }
}

ParamStore init_params(const TrainConfig& cfg) {
  cfg.validate();
  ParamStore params;
  Rng rng(cfg.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  const MetaNetConfig net = cfg.net();
  init_metanet_params(net, params, rng);
  init_gcn_params(cfg.gcn, net.out_width(), params, rng);
  init_metric_params(cfg.metric, cfg.feat_dim, params, rng);
  return params;
}

EpisodeForward forward_episode(Tape& t, const TrainConfig& cfg,
                               const ParamStore& params, const Episode& episode) {
  const MetaNetConfig net_cfg = cfg.net();
  MetaNetVars net = use_metanet(t, params);
  EpisodeForward fwd;
  fwd.bundle = metanet_forward(t, net, net_cfg, episode);
  fwd.label_slots = query_slots(net_cfg, episode);

  Var l_cls = cls_loss(t, fwd.bundle.probs, fwd.label_slots);
  Var total = l_cls;
  LossParts parts;
  parts.l_cls = t.scalar(l_cls);

  const bool meta_active = cfg.use_meta && episode.stage == Stage::base;
  if (meta_active) {
    Var l_meta = meta_loss(t, net, fwd.bundle.support_features,
                           episode.class_ids, episode.shots);
    parts.l_meta = t.scalar(l_meta);
    total = add(t, total, l_meta);
  }
  if (cfg.use_drl) {
    MetricVars mlp = use_metric(t, params, cfg.metric);
    RelevanceGraph graph =
        build_graph(t, fwd.bundle, episode, net_cfg, cfg.metric, mlp);
    Var out;
    if (cfg.group_loss_arm) {
      out = group_loss_forward(t, graph, cfg.group_loss_iterations);
    } else {
      std::vector<Var> weights = use_gcn(t, params, cfg.gcn.depth);
      out = gcn_forward(t, graph, weights, cfg.gcn).out;
    }
    Var l_drl = drl_loss(t, graph, out, fwd.label_slots);
    parts.l_drl = t.scalar(l_drl);
    total = add(t, total, l_drl);
  }
  fwd.total = total;
  fwd.report = compose_loss(episode.stage, parts, cfg.use_drl, cfg.use_meta);
  return fwd;
}

namespace {

std::uint64_t stream_offset(Stage stage) {
  return stage == Stage::base ? 0x100000000ULL : 0x200000000ULL;
}

}  // namespace

StageResult train_stage(const EpisodeGenerator& gen, const TrainConfig& cfg,
                        Stage stage, ParamStore& params, SgdState& state) {
  cfg.validate();
  if (stage == Stage::fine_tune && !params.base_trained &&
      !cfg.finetune_from_scratch)
    throw ConfigError(
        "fine_tune on untrained params; set finetune_from_scratch to allow");
  if (stage == Stage::fine_tune && cfg.reinit_gcn_for_finetune) {
    Rng rng(cfg.seed ^ 0x5C5C5C5C5C5C5C5CULL);
    init_gcn_params(cfg.gcn, cfg.net().out_width(), params, rng);
    for (int l = 1; l <= cfg.gcn.depth; ++l)
      state.velocity.erase("gcn.w" + std::to_string(l));
  }

  const int episodes =
      stage == Stage::base ? cfg.base_episodes : cfg.finetune_episodes;
  const int shots = stage == Stage::base ? cfg.base_shots : cfg.finetune_shots;
  const Rng root(cfg.seed);

  StageResult result;
  result.losses.reserve(static_cast<size_t>(episodes));
  for (int i = 0; i < episodes; ++i) {
    Rng rng = root.fork(stream_offset(stage) + static_cast<std::uint64_t>(i));
    Episode episode = gen.sample(stage, shots, cfg.n_roi, rng);
    try {
      Tape tape;
      EpisodeForward fwd = forward_episode(tape, cfg, params, episode);
      tape.backward(fwd.total);
      std::map<std::string, Matrix> grads;
      for (const auto& [name, id] : tape.params())
        grads[name] = tape.grad(Var{id});
      sgd_step(params, grads, cfg.lr, cfg.momentum, state);
      result.losses.push_back(fwd.report);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (episode " +
                         std::to_string(i) + ", stage " + stage_name(stage) + ")");
    }
  }
  if (stage == Stage::base && episodes > 0) params.base_trained = true;
  return result;
}

EvalReport evaluate(const EpisodeGenerator& gen, const TrainConfig& cfg,
                    const ParamStore& params, int episodes, Stage stage) {
  if (episodes < 1) throw ConfigError("evaluate: episodes must be >= 1");
  const MetaNetConfig net_cfg = cfg.net();
  const int shots = stage == Stage::base ? cfg.base_shots : cfg.finetune_shots;
  const Rng root(cfg.seed);

  EvalReport report;
  report.episodes = episodes;
  std::map<int, std::pair<int, int>> per_class;  // label -> (correct, total)
  std::vector<Matrix> pooled;
  std::vector<int> pooled_labels;
  int correct = 0, total = 0;
  for (int i = 0; i < episodes; ++i) {
    Rng rng = root.fork(0x300000000ULL + static_cast<std::uint64_t>(i));
    Episode episode = gen.sample(stage, shots, cfg.n_roi, rng);
    Tape tape;
    MetaNetVars net = use_metanet(tape, params);
    FeatureBundle bundle = metanet_forward(tape, net, net_cfg, episode);
    const Matrix& p = tape.value(bundle.probs);
    for (size_t q = 0; q < episode.queries.size(); ++q) {
      Eigen::Index argmax;
      p.row(static_cast<Eigen::Index>(q)).maxCoeff(&argmax);
      const int want = net_cfg.slot(episode.queries[q].label);
      const bool hit = argmax == want;
      correct += hit;
      ++total;
      auto& [c, n] = per_class[episode.queries[q].label];
      c += hit;
      ++n;
    }
    pooled.push_back(tape.value(bundle.roi_features));
    for (const QueryRoI& q : episode.queries) pooled_labels.push_back(q.label);
  }
  report.query_accuracy = static_cast<double>(correct) / total;
  for (const auto& [label, cn] : per_class)
    report.per_class_accuracy[label] =
        static_cast<double>(cn.first) / cn.second;

  Matrix all(static_cast<Eigen::Index>(pooled_labels.size()), cfg.feat_dim);
  Eigen::Index row = 0;
  for (const Matrix& m : pooled) {
    all.middleRows(row, m.rows()) = m;
    row += m.rows();
  }
  SeparationReport sep = class_separation(all, pooled_labels);
  report.class_separation = sep.score;
  report.separation_warnings = sep.skipped_singletons;
  return report;
}

}  // namespace drl
