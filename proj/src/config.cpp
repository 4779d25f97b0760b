#include "drl/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace drl {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

ConfigMap ConfigMap::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

ConfigMap ConfigMap::from_string(const std::string& text) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = strip_quotes(trim(line.substr(eq + 1)));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cfg.set(section.empty() ? key : section + "." + key, value);
  }
  return cfg;
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void ConfigMap::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must be key=value: " + assignment);
  set(trim(assignment.substr(0, eq)), strip_quotes(trim(assignment.substr(eq + 1))));
}

bool ConfigMap::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& fallback) const {
  read_[key] = true;
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

long long ConfigMap::get_int(const std::string& key, long long fallback) const {
  read_[key] = true;
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    size_t pos = 0;
    const long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("field " + key + ": not an integer: " + it->second);
  }
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  read_[key] = true;
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("field " + key + ": not a number: " + it->second);
  }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  read_[key] = true;
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("field " + key + ": not a boolean: " + it->second);
}

std::vector<std::string> ConfigMap::unread_keys() const {
  std::vector<std::string> keys;
  for (const auto& [k, v] : entries_)
    if (!read_.count(k)) keys.push_back(k);
  return keys;
}

TrainConfig train_config_from(const ConfigMap& cfg) {
  TrainConfig tc;
  tc.data.base_classes = static_cast<int>(cfg.get_int("data.base_classes", 5));
  tc.data.novel_classes = static_cast<int>(cfg.get_int("data.novel_classes", 5));
  tc.data.base_shots = static_cast<int>(cfg.get_int("data.base_shots", 100));
  tc.data.novel_shots = static_cast<int>(cfg.get_int("data.novel_shots", 10));
  tc.data.raw_dim = static_cast<int>(cfg.get_int("data.raw_dim", 16));
  tc.data.class_mean_radius = cfg.get_double("data.class_mean_radius", 4.0);
  tc.data.within_class_std = cfg.get_double("data.within_class_std", 1.5);
  tc.data.background_std = cfg.get_double("data.background_std", 4.0);
  tc.data.include_background = cfg.get_bool("data.include_background", true);

  tc.hidden_dim = static_cast<int>(cfg.get_int("model.hidden_dim", 16));
  tc.feat_dim = static_cast<int>(cfg.get_int("model.feat_dim", 16));
  tc.gcn.depth = static_cast<int>(cfg.get_int("model.gcn_depth", 1));
  const std::string structure = cfg.get_string("model.gcn_structure", "normal");
  if (structure == "normal") tc.gcn.structure = GcnStructure::normal;
  else if (structure == "residual") tc.gcn.structure = GcnStructure::residual;
  else throw ConfigError("field model.gcn_structure: expected normal|residual");
  const std::string act = cfg.get_string("model.gcn_activation", "sigmoid");
  if (act == "sigmoid") tc.gcn.activation = GcnActivation::sigmoid;
  else if (act == "identity") tc.gcn.activation = GcnActivation::identity;
  else throw ConfigError("field model.gcn_activation: expected sigmoid|identity");
  tc.gcn.replicator_shift = cfg.get_bool("model.gcn_replicator_shift", false);
  tc.gcn.scale_by_node_count = cfg.get_bool("model.gcn_scale_by_m", false);
  tc.metric.kind = similarity_from_name(cfg.get_string("model.metric", "pearson"));
  tc.metric.bandwidth = cfg.get_double("model.gaussian_bandwidth", 0.0);
  tc.metric.mlp_hidden = static_cast<int>(cfg.get_int("model.metric_hidden", 16));
  tc.use_drl = cfg.get_bool("model.use_drl", true);
  tc.use_meta = cfg.get_bool("model.use_meta", true);
  tc.group_loss_arm = cfg.get_bool("model.group_loss_arm", false);
  tc.group_loss_iterations =
      static_cast<int>(cfg.get_int("model.group_loss_iterations", 5));

  tc.lr = cfg.get_double("train.lr", 0.01);
  tc.momentum = cfg.get_double("train.momentum", 0.9);
  tc.base_episodes = static_cast<int>(cfg.get_int("train.base_episodes", 60));
  tc.finetune_episodes =
      static_cast<int>(cfg.get_int("train.finetune_episodes", 40));
  tc.eval_episodes = static_cast<int>(cfg.get_int("train.eval_episodes", 20));
  tc.base_shots = static_cast<int>(cfg.get_int("train.shots_base", 3));
  tc.finetune_shots = static_cast<int>(cfg.get_int("train.shots_finetune", 3));
  tc.n_roi = static_cast<int>(cfg.get_int("train.n_roi", 32));
  tc.reinit_gcn_for_finetune =
      cfg.get_bool("train.reinit_gcn_for_finetune", false);
  tc.finetune_from_scratch = cfg.get_bool("train.finetune_from_scratch", false);
  const long long seed = cfg.get_int("train.seed", 1);

  const auto unread = cfg.unread_keys();
  if (!unread.empty())
    throw ConfigError("unknown config field: " + unread.front());

  TrainConfig seeded = with_seed(tc, static_cast<std::uint64_t>(seed));
  seeded.validate();
  EpisodeGenerator check(seeded.data);  // validates dataset fields eagerly
  (void)check;
  return seeded;
}

TrainConfig with_seed(TrainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.data.seed = seed ^ 0xD6E8FEB86659FD93ULL;
  return cfg;
}

std::string config_content_hash(const ConfigMap& cfg) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& [k, v] : cfg.entries()) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace drl
