#include "drl/metanet.hpp"

namespace drl {

void init_metanet_params(const MetaNetConfig& cfg, ParamStore& params, Rng& rng) {
  params.init_weight("extractor.w1", cfg.raw_dim, cfg.hidden_dim, rng);
  params.init_zero("extractor.b1", 1, cfg.hidden_dim);
  params.init_weight("extractor.w2", cfg.hidden_dim, cfg.feat_dim, rng);
  params.init_zero("extractor.b2", 1, cfg.feat_dim);
  params.init_weight("head.w", 3 * cfg.feat_dim, cfg.out_width(), rng);
  params.init_zero("head.b", 1, cfg.out_width());
  params.init_weight("meta.w", cfg.feat_dim, cfg.total_classes, rng);
  params.init_zero("meta.b", 1, cfg.total_classes);
}

MetaNetVars use_metanet(Tape& t, const ParamStore& params) {
  MetaNetVars net;
  net.ew1 = params.use(t, "extractor.w1");
  net.eb1 = params.use(t, "extractor.b1");
  net.ew2 = params.use(t, "extractor.w2");
  net.eb2 = params.use(t, "extractor.b2");
  net.hw = params.use(t, "head.w");
  net.hb = params.use(t, "head.b");
  net.mw = params.use(t, "meta.w");
  net.mb = params.use(t, "meta.b");
  return net;
}

Var extract(Tape& t, const MetaNetVars& net, Var raws) {
  Var h = relu(t, affine(t, raws, net.ew1, net.eb1));
  return affine(t, h, net.ew2, net.eb2);
}

Var class_attentive(Tape& t, Var support_features, int class_count, int shots) {
  const Matrix& v = t.value(support_features);
  if (v.rows() != static_cast<Eigen::Index>(class_count) * shots)
    throw ShapeError("class_attentive: expected " +
                     std::to_string(class_count * shots) + " rows, got " +
                     shape_str(v));
  Matrix means(class_count, v.cols());
  std::vector<double> terms(static_cast<size_t>(shots));
  for (int c = 0; c < class_count; ++c)
    for (Eigen::Index f = 0; f < v.cols(); ++f) {
      for (int k = 0; k < shots; ++k) terms[static_cast<size_t>(k)] = v(c * shots + k, f);
      means(c, f) = sorted_sum(terms) / shots;
    }
  Var mean_var =
      t.emit(std::move(means), [support_features, shots](Tape& t, Var self) {
        const Matrix& g = t.grad(self);
        Matrix& gv = t.grad(support_features);
        for (Eigen::Index c = 0; c < g.rows(); ++c)
          for (int k = 0; k < shots; ++k)
            gv.row(c * shots + k) += g.row(c) / shots;
      });
  return sigmoid(t, mean_var);
}

Var aggregate(Tape& t, Var roi_row, Var attentive_row) {
  const Matrix& r = t.value(roi_row);
  const Matrix& a = t.value(attentive_row);
  if (r.rows() != 1 || a.rows() != 1 || r.cols() != a.cols())
    throw ShapeError("aggregate: " + shape_str(r) + " with " + shape_str(a));
  return hcat3(t, cwise_mul(t, roi_row, attentive_row),
               sub(t, roi_row, attentive_row), roi_row);
}

Var aggregate_all(Tape& t, Var roi_features, Var attentive, int n_roi,
                  int class_count) {
  const Matrix& r = t.value(roi_features);
  const Matrix& a = t.value(attentive);
  if (r.cols() != a.cols())
    throw ShapeError("aggregate_all: " + shape_str(r) + " with " + shape_str(a));
  Matrix rep_r = Matrix::Zero(static_cast<Eigen::Index>(n_roi) * class_count, n_roi);
  Matrix rep_a = Matrix::Zero(static_cast<Eigen::Index>(n_roi) * class_count, class_count);
  for (int j = 0; j < n_roi; ++j)
    for (int e = 0; e < class_count; ++e) {
      rep_r(j * class_count + e, j) = 1.0;
      rep_a(j * class_count + e, e) = 1.0;
    }
  Var rr = matmul(t, t.constant(std::move(rep_r)), roi_features);
  Var aa = matmul(t, t.constant(std::move(rep_a)), attentive);
  return hcat3(t, cwise_mul(t, rr, aa), sub(t, rr, aa), rr);
}

Var classify(Tape& t, const MetaNetVars& net, Var aggregated,
             const std::vector<int>& class_ids, const MetaNetConfig& cfg,
             int n_roi) {
  const int e_count = static_cast<int>(class_ids.size());
  const Matrix& agg = t.value(aggregated);
  if (agg.rows() != static_cast<Eigen::Index>(n_roi) * e_count)
    throw ShapeError("classify: expected " + std::to_string(n_roi * e_count) +
                     " aggregated rows, got " + shape_str(agg));
  Var head_out = affine(t, aggregated, net.hw, net.hb);

  // Active logits: one column per episode class (own head slot), plus a
  // leading background column averaging head slot 0 over classes.
  const bool bg = cfg.include_background;
  const int active = e_count + (bg ? 1 : 0);
  const Matrix& ho = t.value(head_out);
  Matrix logits(n_roi, active);
  for (int j = 0; j < n_roi; ++j) {
    if (bg) {
      double s = 0.0;
      for (int e = 0; e < e_count; ++e) s += ho(j * e_count + e, 0);
      logits(j, 0) = s / e_count;
    }
    for (int e = 0; e < e_count; ++e)
      logits(j, (bg ? 1 : 0) + e) =
          ho(j * e_count + e, cfg.slot(class_ids[static_cast<size_t>(e)]));
  }
  Var logit_var = t.emit(
      std::move(logits),
      [head_out, class_ids, cfg, n_roi, e_count, bg](Tape& t, Var self) {
        const Matrix& g = t.grad(self);
        Matrix& gh = t.grad(head_out);
        for (int j = 0; j < n_roi; ++j) {
          if (bg)
            for (int e = 0; e < e_count; ++e)
              gh(j * e_count + e, 0) += g(j, 0) / e_count;
          for (int e = 0; e < e_count; ++e)
            gh(j * e_count + e, cfg.slot(class_ids[static_cast<size_t>(e)])) +=
                g(j, (bg ? 1 : 0) + e);
        }
      });

  Var p_active = row_softmax(t, logit_var);
  std::vector<int> slots;
  slots.reserve(static_cast<size_t>(active));
  if (bg) slots.push_back(0);
  for (int cid : class_ids) slots.push_back(cfg.slot(cid));
  return scatter_cols(t, p_active, slots, cfg.out_width());
}

Var meta_loss(Tape& t, const MetaNetVars& net, Var support_features,
              const std::vector<int>& class_ids, int shots) {
  const Matrix& v = t.value(support_features);
  const int e_count = static_cast<int>(class_ids.size());
  if (v.rows() != static_cast<Eigen::Index>(e_count) * shots)
    throw ShapeError("meta_loss: expected " + std::to_string(e_count * shots) +
                     " support rows, got " + shape_str(v));
  Var logits_all = affine(t, support_features, net.mw, net.mb);
  std::vector<int> cols;
  cols.reserve(static_cast<size_t>(e_count));
  for (int cid : class_ids) {
    if (cid < 1 || cid > t.value(net.mw).cols())
      throw LabelError("meta_loss: class id " + std::to_string(cid) +
                       " out of range");
    cols.push_back(cid - 1);
  }
  Var p = row_softmax(t, gather_cols(t, logits_all, cols));
  std::vector<int> labels(static_cast<size_t>(e_count) * shots);
  for (int e = 0; e < e_count; ++e)
    for (int k = 0; k < shots; ++k)
      labels[static_cast<size_t>(e * shots + k)] = e;
  return ce_from_probs(t, p, labels);
}

Var cls_loss(Tape& t, Var probs, const std::vector<int>& label_slots) {
  return ce_from_probs(t, probs, label_slots);
}

FeatureBundle metanet_forward(Tape& t, const MetaNetVars& net,
                              const MetaNetConfig& cfg, const Episode& episode) {
  const int c_count = episode.class_count();
  const int n_roi = static_cast<int>(episode.queries.size());
  Matrix support_raws(episode.support.size(), cfg.raw_dim);
  for (size_t i = 0; i < episode.support.size(); ++i)
    support_raws.row(static_cast<Eigen::Index>(i)) = episode.support[i].raw;
  Matrix query_raws(episode.queries.size(), cfg.raw_dim);
  for (size_t i = 0; i < episode.queries.size(); ++i)
    query_raws.row(static_cast<Eigen::Index>(i)) = episode.queries[i].raw;

  FeatureBundle b;
  b.support_features = extract(t, net, t.constant(std::move(support_raws)));
  b.attentive = class_attentive(t, b.support_features, c_count, episode.shots);
  b.roi_features = extract(t, net, t.constant(std::move(query_raws)));
  b.aggregated = aggregate_all(t, b.roi_features, b.attentive, n_roi, c_count);
  b.probs = classify(t, net, b.aggregated, episode.class_ids, cfg, n_roi);
  return b;
}

std::vector<int> query_slots(const MetaNetConfig& cfg, const Episode& episode) {
  std::vector<int> slots;
  slots.reserve(episode.queries.size());
  for (const QueryRoI& q : episode.queries) slots.push_back(cfg.slot(q.label));
  return slots;
}

}  // namespace drl
