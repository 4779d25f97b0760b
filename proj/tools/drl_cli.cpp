// Experiment runner: train / ablate / depth-sweep / group-compare / gradcheck.
// Exit codes: 0 ok, 2 config error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "drl/gradcheck.hpp"
#include "drl/runner.hpp"

namespace {

using namespace drl;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  long long seed = -1;
  int seeds = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Config file (TOML key/value)");
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_option("--set", opts.overrides,
                  "Override a config field, e.g. --set train.lr=0.02");
  cmd->add_option("--seed", opts.seed, "Base seed (overrides train.seed)");
  cmd->add_option("--seeds", opts.seeds, "Number of consecutive seeds to run")
      ->check(CLI::PositiveNumber);
}

ConfigMap resolve_config(const CommonOpts& opts) {
  ConfigMap cfg = opts.config_path.empty() ? ConfigMap::from_string("")
                                           : ConfigMap::from_file(opts.config_path);
  for (const std::string& o : opts.overrides) cfg.apply_override(o);
  if (opts.seed >= 0) cfg.set("train.seed", std::to_string(opts.seed));
  return cfg;
}

std::string resolve_out_dir(const CommonOpts& opts) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (const char* env = std::getenv("DRL_OUT_DIR"); env && *env) return env;
  return ".";
}

std::vector<std::uint64_t> seed_list(const ConfigMap& cfg, int count) {
  const auto base = static_cast<std::uint64_t>(cfg.get_int("train.seed", 1));
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
  return seeds;
}

int cmd_train(const CommonOpts& opts) {
  ConfigMap cfg = resolve_config(opts);
  TrainOutputs out = run_train_command(cfg, resolve_out_dir(opts));
  std::cout << "checkpoint: " << out.checkpoint_path << "\n"
            << "manifest:   " << out.manifest_path << "\n"
            << "losses:     " << out.loss_csv_path << "\n"
            << "query_accuracy: " << out.result.eval.query_accuracy << "\n"
            << "class_separation: " << out.result.eval.class_separation << "\n";
  return 0;
}

int cmd_ablate(const CommonOpts& opts, const std::string& axis) {
  ConfigMap raw = resolve_config(opts);
  const TrainConfig base_cfg = train_config_from(raw);

  std::vector<std::pair<std::string, TrainConfig>> variants;
  if (axis == "drl") {
    TrainConfig on = base_cfg, off = base_cfg;
    on.use_drl = true;
    off.use_drl = false;
    variants = {{"drl_on", on}, {"drl_off", off}};
  } else if (axis == "meta") {
    TrainConfig on = base_cfg, off = base_cfg;
    on.use_meta = true;
    off.use_meta = false;
    variants = {{"meta_on", on}, {"meta_off", off}};
  } else if (axis == "structure") {
    TrainConfig normal = base_cfg, residual = base_cfg;
    normal.gcn.structure = GcnStructure::normal;
    residual.gcn.structure = GcnStructure::residual;
    variants = {{"normal", normal}, {"residual", residual}};
  } else if (axis == "metric") {
    for (SimilarityKind k :
         {SimilarityKind::pearson, SimilarityKind::cosine,
          SimilarityKind::euclidean, SimilarityKind::gaussian_kernel,
          SimilarityKind::learned_mlp}) {
      TrainConfig v = base_cfg;
      v.metric.kind = k;
      variants.emplace_back(similarity_name(k), v);
    }
  } else {
    throw ConfigError("axis must be drl|meta|structure|metric, got " + axis);
  }

  std::vector<SweepRow> rows;
  for (const auto& [name, cfg] : variants)
    for (std::uint64_t s : seed_list(raw, opts.seeds))
      rows.push_back({name, s, run_variant(cfg, s)});
  const std::string dir = resolve_out_dir(opts);
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/ablate_" + axis + ".csv";
  write_sweep_csv(path, "variant", rows);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_depth_sweep(const CommonOpts& opts, std::vector<int> depths) {
  if (depths.empty()) throw ConfigError("depth sweep needs at least one depth");
  ConfigMap raw = resolve_config(opts);
  const TrainConfig base_cfg = train_config_from(raw);

  std::vector<int> unique;
  std::set<int> seen;
  for (int d : depths) {
    if (d < 1) throw ConfigError("depth must be >= 1, got " + std::to_string(d));
    if (!seen.insert(d).second) {
      std::cerr << "warning: duplicate depth " << d << " ignored\n";
      continue;
    }
    unique.push_back(d);
  }

  std::vector<SweepRow> rows;
  for (int d : unique) {
    TrainConfig cfg = base_cfg;
    cfg.gcn.depth = d;
    for (std::uint64_t s : seed_list(raw, opts.seeds))
      rows.push_back({std::to_string(d), s, run_variant(cfg, s)});
  }
  const std::string dir = resolve_out_dir(opts);
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/depth_sweep.csv";
  write_sweep_csv(path, "depth", rows);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_group_compare(const CommonOpts& opts, std::vector<int> shots,
                      int iterations) {
  if (shots.empty()) throw ConfigError("group-compare needs at least one shot count");
  ConfigMap raw = resolve_config(opts);
  const TrainConfig base_cfg = train_config_from(raw);

  std::vector<SweepRow> rows;
  for (const char* method : {"gcn", "group_loss"}) {
    for (int k : shots) {
      if (k < 1) throw ConfigError("shots must be >= 1, got " + std::to_string(k));
      TrainConfig cfg = base_cfg;
      cfg.group_loss_arm = std::string(method) == "group_loss";
      cfg.group_loss_iterations = iterations;
      cfg.finetune_shots = k;
      cfg.data.novel_shots = std::max(cfg.data.novel_shots, k);
      cfg.data.base_shots = std::max(cfg.data.base_shots, cfg.data.novel_shots);
      for (std::uint64_t s : seed_list(raw, opts.seeds))
        rows.push_back({std::string(method) + "_shots" + std::to_string(k), s,
                        run_variant(cfg, s)});
    }
  }
  const std::string dir = resolve_out_dir(opts);
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/group_compare.csv";
  write_sweep_csv(path, "variant", rows);
  std::cout << "wrote " << path << "\n";
  return 0;
}

// The acceptance gradient suite: full loss through both GCN structures at
// L in {1,3}, pearson and learned metrics.
int cmd_gradcheck() {
  TrainConfig cfg;
  cfg.data.base_classes = 3;
  cfg.data.novel_classes = 0;
  cfg.data.raw_dim = 6;
  cfg.data.base_shots = 10;
  cfg.data.novel_shots = 10;
  cfg.data.include_background = false;
  cfg.data.class_mean_radius = 2.0;
  cfg.data.within_class_std = 1.0;
  cfg.hidden_dim = 8;
  cfg.feat_dim = 8;
  cfg.use_drl = true;
  cfg.use_meta = true;
  cfg.n_roi = 5;

  bool all_pass = true;
  for (SimilarityKind metric :
       {SimilarityKind::pearson, SimilarityKind::learned_mlp}) {
    for (GcnStructure structure : {GcnStructure::normal, GcnStructure::residual}) {
      for (int depth : {1, 3}) {
        TrainConfig c = with_seed(cfg, 7);
        c.metric.kind = metric;
        c.gcn.structure = structure;
        c.gcn.depth = depth;
        EpisodeGenerator gen(c.data);
        Rng rng(42);
        const Episode episode = gen.sample(Stage::base, 2, c.n_roi, rng);
        ParamStore params = init_params(c);
        auto build = [&c, &episode](Tape& t, const ParamStore& p) {
          EpisodeForward fwd = forward_episode(t, c, p, episode);
          return fwd.total;
        };
        GradCheckReport report = gradient_check(build, params, 1e-5, 1e-4);
        std::cout << (report.pass ? "PASS" : "FAIL") << "  metric="
                  << similarity_name(metric) << " structure="
                  << (structure == GcnStructure::normal ? "normal" : "residual")
                  << " depth=" << depth
                  << " max_rel_error=" << report.max_rel_error << "\n";
        all_pass = all_pass && report.pass;
      }
    }
  }
  if (!all_pass) {
    std::cerr << "gradient check failed\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic relevance learning experiments on synthetic episodes"};
  app.require_subcommand(1);

  CommonOpts train_opts, ablate_opts, depth_opts, group_opts;
  std::string axis;
  std::vector<int> depths, shots;
  int iterations = 5;
  int shots_override = -1;

  CLI::App* train = app.add_subcommand("train", "Base + fine-tune run");
  add_common(train, train_opts);
  train->add_option("--shots", shots_override,
                    "Shorthand for shots in both stages");

  CLI::App* ablate = app.add_subcommand("ablate", "Toggle comparison sweeps");
  add_common(ablate, ablate_opts);
  ablate->add_option("--axis", axis, "drl|meta|structure|metric")->required();

  CLI::App* depth = app.add_subcommand("depth-sweep", "Accuracy vs GCN depth");
  add_common(depth, depth_opts);
  depth->add_option("--depths", depths, "Depth list, e.g. --depths 1 2 3")
      ->required();

  CLI::App* group =
      app.add_subcommand("group-compare", "Dynamic GCN vs group-loss training");
  add_common(group, group_opts);
  group->add_option("--shots", shots, "Shot counts to compare")->required();
  group->add_option("--iterations", iterations, "Replicator iterations T");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "Run the full gradient acceptance suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      if (shots_override >= 0) {
        train_opts.overrides.push_back("train.shots_base=" +
                                       std::to_string(shots_override));
        train_opts.overrides.push_back("train.shots_finetune=" +
                                       std::to_string(shots_override));
      }
      return cmd_train(train_opts);
    }
    if (ablate->parsed()) return cmd_ablate(ablate_opts, axis);
    if (depth->parsed()) return cmd_depth_sweep(depth_opts, depths);
    if (group->parsed()) return cmd_group_compare(group_opts, shots, iterations);
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const drl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const drl::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const drl::LabelError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const drl::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
