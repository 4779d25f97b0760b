#ifndef DRL_METANET_HPP
#define DRL_METANET_HPP

#include "drl/episodes.hpp"
#include "drl/ops.hpp"
#include "drl/params.hpp"

namespace drl {

/// Surrogate meta-detector head: shared two-layer extractor, class-attentive
/// reweighting, per-class aggregation and a shared classification head.
///
/// The label space is the full dataset (base + novel classes), so parameter
/// shapes stay fixed across training stages. A base-stage episode only
/// activates its own classes' probability slots; absent slots are exactly 0.
struct MetaNetConfig {
  int raw_dim = 16;
  int hidden_dim = 16;
  int feat_dim = 16;
  int total_classes = 10;
  bool include_background = true;

  /// Width D of probability rows: slot 0 is background when included.
  int out_width() const { return total_classes + (include_background ? 1 : 0); }
  /// Probability-row slot of a class id in [1, C]; background label 0 -> 0.
  int slot(int label) const {
    if (label == 0 && !include_background)
      throw LabelError("background label without include_background");
    return include_background ? label : label - 1;
  }
};

/// Registers extractor/head/meta-classifier weights under fixed names.
void init_metanet_params(const MetaNetConfig& cfg, ParamStore& params, Rng& rng);

struct MetaNetVars {
  Var ew1, eb1, ew2, eb2;  // extractor
  Var hw, hb;              // classification head
  Var mw, mb;              // support meta classifier
};

MetaNetVars use_metanet(Tape& t, const ParamStore& params);

/// raw rows -> feat_dim rows through the shared extractor (relu hidden layer).
Var extract(Tape& t, const MetaNetVars& net, Var raws);

/// sigmoid of the per-class mean of support features (class-major, shot-minor
/// layout, K rows per class). The mean accumulates in value-sorted order, so
/// the result is exactly invariant to shot ordering.
Var class_attentive(Tape& t, Var support_features, int class_count, int shots);

/// concat(r * a, r - a, r) for one RoI row and one attentive row.
Var aggregate(Tape& t, Var roi_row, Var attentive_row);

/// All RoI/class pairs at once: row j*C+e pairs RoI j with episode class e.
Var aggregate_all(Tape& t, Var roi_features, Var attentive, int n_roi,
                  int class_count);

/// Aggregated rows -> probability rows (n_roi x D). The logit for episode
/// class e comes from that class's aggregated row at its own output slot;
/// the background logit (when present) is the mean head output at slot 0
/// across classes. Softmax runs over the episode's active slots; absent
/// slots stay exactly 0.
Var classify(Tape& t, const MetaNetVars& net, Var aggregated,
             const std::vector<int>& class_ids, const MetaNetConfig& cfg,
             int n_roi);

/// Mean cross-entropy of the support meta classifier over episode classes.
Var meta_loss(Tape& t, const MetaNetVars& net, Var support_features,
              const std::vector<int>& class_ids, int shots);

/// Mean cross-entropy of probability rows against slot labels.
Var cls_loss(Tape& t, Var probs, const std::vector<int>& label_slots);

/// Full surrogate-head forward pass for one episode.
struct FeatureBundle {
  Var support_features;  // (C*K) x feat_dim
  Var attentive;         // C x feat_dim, entries in (0,1)
  Var roi_features;      // n_roi x feat_dim
  Var aggregated;        // (n_roi*C) x 3*feat_dim
  Var probs;             // n_roi x D
};

FeatureBundle metanet_forward(Tape& t, const MetaNetVars& net,
                              const MetaNetConfig& cfg, const Episode& episode);

/// Slot labels for an episode's queries (background -> slot 0).
std::vector<int> query_slots(const MetaNetConfig& cfg, const Episode& episode);

}  // namespace drl

#endif  // DRL_METANET_HPP
