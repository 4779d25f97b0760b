#include "drl/episodes.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace drl {

namespace {

RowVector gaussian_row(int dim, const RowVector& mean, double std, Rng& rng) {
  RowVector r(dim);
  for (int i = 0; i < dim; ++i) r(i) = mean(i) + std * rng.normal();
  return r;
}

}  // namespace

EpisodeGenerator::EpisodeGenerator(DatasetSpec spec) : spec_(spec) {
  if (spec_.raw_dim < 2)
    throw ConfigError("raw_dim must be >= 2");
  if (spec_.base_classes < 1 || spec_.novel_classes < 0)
    throw ConfigError("need base_classes >= 1 and novel_classes >= 0");
  if (spec_.novel_shots < 1 || spec_.base_shots < spec_.novel_shots)
    throw ConfigError("need base_shots >= novel_shots >= 1");
  if (spec_.class_mean_radius <= 0.0)
    throw ConfigError("class_mean_radius must be > 0 (means would coincide)");
  if (spec_.within_class_std < 0.0 || spec_.background_std < 0.0)
    throw ConfigError("standard deviations must be >= 0");

  Rng rng(spec_.seed);
  const int c_total = total_classes();
  means_.resize(c_total, spec_.raw_dim);
  for (int c = 0; c < c_total; ++c) {
    RowVector dir(spec_.raw_dim);
    double norm = 0.0;
    do {
      for (int i = 0; i < spec_.raw_dim; ++i) dir(i) = rng.normal();
      norm = dir.norm();
    } while (norm < 1e-9);
    means_.row(c) = dir * (spec_.class_mean_radius / norm);
  }
  for (int a = 0; a < c_total; ++a)
    for (int b = a + 1; b < c_total; ++b)
      if ((means_.row(a) - means_.row(b)).norm() < 1e-9)
        throw ConfigError("class means are not pairwise distinct");

  // The novel pool is drawn once; fine-tune episodes resample from it,
  // mirroring K-shot data scarcity.
  novel_pools_.reserve(static_cast<size_t>(spec_.novel_classes));
  for (int c = 0; c < spec_.novel_classes; ++c) {
    Matrix pool(spec_.novel_shots, spec_.raw_dim);
    const RowVector mean = means_.row(spec_.base_classes + c);
    for (int k = 0; k < spec_.novel_shots; ++k)
      pool.row(k) = gaussian_row(spec_.raw_dim, mean, spec_.within_class_std, rng);
    novel_pools_.push_back(std::move(pool));
  }
}

Episode EpisodeGenerator::sample(Stage stage, int shots, int n_roi,
                                 Rng& rng) const {
  if (shots < 1) throw ConfigError("shots must be >= 1");
  if (n_roi < 1) throw ConfigError("n_roi must be >= 1");
  if (shots > spec_.base_shots)
    throw ConfigError("shots " + std::to_string(shots) +
                      " exceed base budget " + std::to_string(spec_.base_shots));
  if (stage == Stage::fine_tune && spec_.novel_classes > 0 &&
      shots > spec_.novel_shots)
    throw ConfigError("shots " + std::to_string(shots) +
                      " exceed novel budget " + std::to_string(spec_.novel_shots));

  Episode ep;
  ep.stage = stage;
  ep.shots = shots;
  const int c_count =
      stage == Stage::base ? spec_.base_classes : total_classes();
  ep.class_ids.resize(static_cast<size_t>(c_count));
  for (int c = 0; c < c_count; ++c) ep.class_ids[static_cast<size_t>(c)] = c + 1;

  ep.support.reserve(static_cast<size_t>(c_count * shots));
  for (int cid : ep.class_ids) {
    const bool novel = cid > spec_.base_classes;
    if (novel) {
      // Partial Fisher-Yates pick of `shots` distinct pool rows.
      const Matrix& pool = novel_pools_[static_cast<size_t>(cid - spec_.base_classes - 1)];
      std::vector<int> idx(static_cast<size_t>(pool.rows()));
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
      for (int k = 0; k < shots; ++k) {
        const auto pick = k + static_cast<int>(rng.below(idx.size() - static_cast<size_t>(k)));
        std::swap(idx[static_cast<size_t>(k)], idx[static_cast<size_t>(pick)]);
        ep.support.push_back({pool.row(idx[static_cast<size_t>(k)]), cid});
      }
    } else {
      for (int k = 0; k < shots; ++k)
        ep.support.push_back({gaussian_row(spec_.raw_dim, means_.row(cid - 1),
                                           spec_.within_class_std, rng),
                              cid});
    }
  }

  ep.queries.reserve(static_cast<size_t>(n_roi));
  const int label_choices = c_count + (spec_.include_background ? 1 : 0);
  for (int j = 0; j < n_roi; ++j) {
    const int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(label_choices)));
    if (spec_.include_background && pick == 0) {
      RowVector zero = RowVector::Zero(spec_.raw_dim);
      ep.queries.push_back(
          {gaussian_row(spec_.raw_dim, zero, spec_.background_std, rng), 0});
    } else {
      const int cid = ep.class_ids[static_cast<size_t>(
          spec_.include_background ? pick - 1 : pick)];
      ep.queries.push_back({gaussian_row(spec_.raw_dim, means_.row(cid - 1),
                                         spec_.within_class_std, rng),
                            cid});
    }
  }
  return ep;
}

void export_jsonl(const std::vector<Episode>& episodes, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write episodes: " + path);
  for (const Episode& ep : episodes) {
    nlohmann::json j;
    j["stage"] = stage_name(ep.stage);
    j["shots"] = ep.shots;
    j["class_ids"] = ep.class_ids;
    nlohmann::json support = nlohmann::json::array();
    for (const SupportSample& s : ep.support) {
      std::vector<double> raw(s.raw.data(), s.raw.data() + s.raw.size());
      support.push_back({{"class_id", s.class_id}, {"raw", raw}});
    }
    j["support"] = std::move(support);
    nlohmann::json queries = nlohmann::json::array();
    for (const QueryRoI& q : ep.queries) {
      std::vector<double> raw(q.raw.data(), q.raw.data() + q.raw.size());
      queries.push_back({{"label", q.label}, {"raw", raw}});
    }
    j["queries"] = std::move(queries);
    out << j.dump() << "\n";
  }
}

std::vector<Episode> import_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read episodes: " + path);
  std::vector<Episode> episodes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Episode ep;
    ep.stage = j.at("stage").get<std::string>() == "base" ? Stage::base
                                                          : Stage::fine_tune;
    ep.shots = j.at("shots").get<int>();
    ep.class_ids = j.at("class_ids").get<std::vector<int>>();
    for (const auto& s : j.at("support")) {
      const auto raw = s.at("raw").get<std::vector<double>>();
      SupportSample sample;
      sample.raw = Eigen::Map<const RowVector>(raw.data(),
                                               static_cast<Eigen::Index>(raw.size()));
      sample.class_id = s.at("class_id").get<int>();
      ep.support.push_back(std::move(sample));
    }
    for (const auto& q : j.at("queries")) {
      const auto raw = q.at("raw").get<std::vector<double>>();
      QueryRoI roi;
      roi.raw = Eigen::Map<const RowVector>(raw.data(),
                                            static_cast<Eigen::Index>(raw.size()));
      roi.label = q.at("label").get<int>();
      ep.queries.push_back(std::move(roi));
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace drl
