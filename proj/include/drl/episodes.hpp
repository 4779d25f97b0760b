#ifndef DRL_EPISODES_HPP
#define DRL_EPISODES_HPP

#include <string>
#include <vector>

#include "drl/common.hpp"

namespace drl {

enum class Stage { base, fine_tune };

inline const char* stage_name(Stage s) {
  return s == Stage::base ? "base" : "fine_tune";
}

/// Synthetic stand-in for the detector's data: Gaussian clusters around
/// class means drawn on a sphere, with an optional broad background cloud.
struct DatasetSpec {
  int base_classes = 5;
  int novel_classes = 5;
  int base_shots = 100;      // per-class budget for base classes
  int novel_shots = 10;      // fixed per-class pool size for novel classes
  int raw_dim = 16;
  double class_mean_radius = 4.0;
  double within_class_std = 1.5;
  double background_std = 4.0;
  bool include_background = true;
  std::uint64_t seed = 1;
};

struct SupportSample {
  RowVector raw;
  int class_id;  // in [1, C]
};

struct QueryRoI {
  RowVector raw;
  int label;  // 0 = background (only when include_background), else [1, C]
};

struct Episode {
  std::vector<int> class_ids;  // the C classes present, ascending
  int shots = 0;
  std::vector<SupportSample> support;  // class-major, shot-minor order
  std::vector<QueryRoI> queries;
  Stage stage = Stage::base;

  int class_count() const { return static_cast<int>(class_ids.size()); }
  int node_count() const {
    return static_cast<int>(support.size() + queries.size());
  }
};

/// Immutable after construction: class means and the per-class novel sample
/// pools are fixed for the generator's lifetime. Shareable across threads;
/// each sample() call takes its own Rng.
class EpisodeGenerator {
 public:
  explicit EpisodeGenerator(DatasetSpec spec);

  const DatasetSpec& spec() const { return spec_; }
  int total_classes() const { return spec_.base_classes + spec_.novel_classes; }
  /// Row c-1 is the mean of class c.
  const Matrix& class_means() const { return means_; }

  Episode sample(Stage stage, int shots, int n_roi, Rng& rng) const;

 private:
  DatasetSpec spec_;
  Matrix means_;
  std::vector<Matrix> novel_pools_;  // one novel_shots x raw_dim pool per novel class
};

/// One episode per line, as JSON; regression-fixture format.
void export_jsonl(const std::vector<Episode>& episodes, const std::string& path);
std::vector<Episode> import_jsonl(const std::string& path);

}  // namespace drl

#endif  // DRL_EPISODES_HPP
