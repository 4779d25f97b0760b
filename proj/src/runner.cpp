#include "drl/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace drl {

TrainRunResult run_train(const TrainConfig& cfg) {
  cfg.validate();
  EpisodeGenerator gen(cfg.data);
  TrainRunResult result;
  result.params = init_params(cfg);
  SgdState state;
  result.base_losses =
      train_stage(gen, cfg, Stage::base, result.params, state).losses;
  result.finetune_losses =
      train_stage(gen, cfg, Stage::fine_tune, result.params, state).losses;
  result.eval = evaluate(gen, cfg, result.params, cfg.eval_episodes);
  return result;
}

VariantOutcome run_variant(const TrainConfig& cfg, std::uint64_t seed) {
  TrainRunResult r = run_train(with_seed(cfg, seed));
  return {r.eval.query_accuracy, r.eval.class_separation};
}

void write_loss_csv(const std::string& path,
                    const std::vector<LossReport>& base_losses,
                    const std::vector<LossReport>& finetune_losses) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write loss csv: " + path);
  out << "schema_version,stage,episode,l_cls,l_meta,l_drl,total\n";
  auto rows = [&out](const std::vector<LossReport>& losses) {
    for (size_t i = 0; i < losses.size(); ++i) {
      const LossReport& r = losses[i];
      out << kCsvSchemaVersion << ',' << stage_name(r.stage) << ',' << i << ','
          << format_double(r.l_cls) << ',' << format_double(r.l_meta) << ','
          << format_double(r.l_drl) << ',' << format_double(r.total) << '\n';
    }
  };
  rows(base_losses);
  rows(finetune_losses);
}

namespace {

nlohmann::json loss_series_json(const std::vector<LossReport>& losses) {
  nlohmann::json arr = nlohmann::json::array();
  for (const LossReport& r : losses)
    arr.push_back({{"stage", stage_name(r.stage)},
                   {"l_cls", r.l_cls},
                   {"l_meta", r.l_meta},
                   {"l_drl", r.l_drl},
                   {"total", r.total}});
  return arr;
}

}  // namespace

TrainOutputs run_train_command(const ConfigMap& raw_cfg,
                               const std::string& out_dir) {
  const TrainConfig cfg = train_config_from(raw_cfg);
  std::filesystem::create_directories(out_dir);

  TrainOutputs outputs;
  outputs.checkpoint_path = out_dir + "/checkpoint.json";
  outputs.manifest_path = out_dir + "/manifest.json";
  outputs.loss_csv_path = out_dir + "/losses.csv";

  outputs.result = run_train(cfg);
  save_checkpoint(outputs.result.params, outputs.checkpoint_path);
  write_loss_csv(outputs.loss_csv_path, outputs.result.base_losses,
                 outputs.result.finetune_losses);

  nlohmann::json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["config_hash"] = config_content_hash(raw_cfg);
  nlohmann::json resolved = nlohmann::json::object();
  for (const auto& [k, v] : raw_cfg.entries()) resolved[k] = v;
  manifest["config"] = std::move(resolved);
  manifest["seed"] = cfg.seed;
  manifest["outputs"] = {outputs.checkpoint_path, outputs.loss_csv_path};
  manifest["loss_series"] = loss_series_json(outputs.result.base_losses);
  for (const auto& j : loss_series_json(outputs.result.finetune_losses))
    manifest["loss_series"].push_back(j);
  manifest["eval"] = {
      {"query_accuracy", outputs.result.eval.query_accuracy},
      {"class_separation", outputs.result.eval.class_separation},
      {"episodes", outputs.result.eval.episodes},
  };
  std::ofstream mout(outputs.manifest_path);
  if (!mout) throw ConfigError("cannot write manifest: " + outputs.manifest_path);
  mout << manifest.dump(2) << "\n";
  return outputs;
}

void write_sweep_csv(const std::string& path, const std::string& variant_column,
                     const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write sweep csv: " + path);
  out << "schema_version,row_type," << variant_column
      << ",seed,query_accuracy,class_separation,"
         "query_accuracy_stddev,class_separation_stddev\n";

  std::vector<std::string> order;
  std::map<std::string, std::vector<const SweepRow*>> grouped;
  for (const SweepRow& r : rows) {
    if (!grouped.count(r.variant)) order.push_back(r.variant);
    grouped[r.variant].push_back(&r);
  }
  for (const std::string& variant : order) {
    double acc_sum = 0, sep_sum = 0;
    for (const SweepRow* r : grouped[variant]) {
      out << kCsvSchemaVersion << ",result," << variant << ',' << r->seed << ','
          << format_double(r->outcome.query_accuracy) << ','
          << format_double(r->outcome.class_separation) << ",,\n";
      acc_sum += r->outcome.query_accuracy;
      sep_sum += r->outcome.class_separation;
    }
    const double n = static_cast<double>(grouped[variant].size());
    const double acc_mean = acc_sum / n, sep_mean = sep_sum / n;
    double acc_var = 0, sep_var = 0;
    for (const SweepRow* r : grouped[variant]) {
      acc_var += std::pow(r->outcome.query_accuracy - acc_mean, 2);
      sep_var += std::pow(r->outcome.class_separation - sep_mean, 2);
    }
    const double denom = n > 1 ? n - 1 : 1;
    out << kCsvSchemaVersion << ",summary," << variant << ",,"
        << format_double(acc_mean) << ',' << format_double(sep_mean) << ','
        << format_double(std::sqrt(acc_var / denom)) << ','
        << format_double(std::sqrt(sep_var / denom)) << '\n';
  }
}

}  // namespace drl
