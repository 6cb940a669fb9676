#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fedagg {

// Declarative description of one simulation run. Defaults are the desk-scale
// setup: 10 clients, 15 rounds, a ~3.3k-parameter embedding-bag task.
struct ExperimentConfig {
  int schema_version = 1;

  int task_vocab = 200;
  int task_classes = 4;
  int task_sentence_len = 20;
  int task_embed = 16;
  int task_signal_per_class = 8;
  int task_trigger_pool = 8;
  int task_train_size = 2000;
  int task_test_size = 2000;
  double task_p_signal = 0.5;

  int clients = 10;
  int rounds = 15;
  int local_iters = 500;
  double local_lr = 0.5;
  int local_batch = 32;

  std::string partition_mode = "iid";  // iid | dirichlet
  double partition_alpha = 0.9;

  int num_malicious = 1;
  std::vector<int> malicious_indices;  // empty -> 0..num_malicious-1

  std::string aggregator = "fedavg";
  double dimkrum_rho = 1e-3;
  double dimkrum_alpha = 0.9;
  double dimkrum_lambda = 5.0;
  double crfl_noise_std = 0.01;
  double crfl_bound_slope = 0.05;
  double crfl_bound_intercept = 2.0;

  std::string attack_kind = "badword";  // badword | badsent | ep | none
  double attack_poison_rate = 0.5;
  int attack_target_label = 0;
  int attack_trigger_len = 3;  // badsent sequence length

  std::string adaptive_mode = "none";  // none | freeze | wp_clean | wp_last | awp
  double adaptive_lambda_wp = 1.0;
  double adaptive_epsilon = 0.05;

  int repeat = 1;
  uint64_t seed = 42;

  std::vector<int> effective_malicious_indices() const {
    if (!malicious_indices.empty()) return malicious_indices;
    std::vector<int> out;
    for (int i = 0; i < num_malicious; ++i) out.push_back(i);
    return out;
  }
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg
                                    : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline long long parse_ll(const std::string& v, int line) {
  size_t pos = 0;
  long long out;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'", line);
  }
  if (pos != v.size()) throw ConfigError("expected an integer, got '" + v + "'", line);
  return out;
}

inline double parse_double(const std::string& v, int line) {
  size_t pos = 0;
  double out;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'", line);
  }
  if (pos != v.size()) throw ConfigError("expected a number, got '" + v + "'", line);
  return out;
}

inline std::vector<int> parse_int_list(const std::string& v, int line) {
  std::vector<int> out;
  std::string cur;
  std::stringstream ss(v);
  while (std::getline(ss, cur, ',')) {
    cur = trim(cur);
    if (cur.empty()) continue;
    out.push_back(static_cast<int>(parse_ll(cur, line)));
  }
  return out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

struct KeyBinding {
  std::function<void(ExperimentConfig&, const std::string&, int)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::map<std::string, KeyBinding>& config_schema() {
  static const std::map<std::string, KeyBinding> schema = [] {
    std::map<std::string, KeyBinding> m;
    auto bind_int = [&m](const std::string& key, int ExperimentConfig::* field) {
      m[key] = {[field](ExperimentConfig& c, const std::string& v, int line) {
                  c.*field = static_cast<int>(parse_ll(v, line));
                },
                [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
    };
    auto bind_double = [&m](const std::string& key, double ExperimentConfig::* field) {
      m[key] = {[field](ExperimentConfig& c, const std::string& v, int line) {
                  c.*field = parse_double(v, line);
                },
                [field](const ExperimentConfig& c) { return fmt_double(c.*field); }};
    };
    auto bind_string = [&m](const std::string& key, std::string ExperimentConfig::* field) {
      m[key] = {[field](ExperimentConfig& c, const std::string& v, int) { c.*field = v; },
                [field](const ExperimentConfig& c) { return c.*field; }};
    };

    bind_int("schema_version", &ExperimentConfig::schema_version);
    bind_int("task.vocab", &ExperimentConfig::task_vocab);
    bind_int("task.classes", &ExperimentConfig::task_classes);
    bind_int("task.sentence_len", &ExperimentConfig::task_sentence_len);
    bind_int("task.embed", &ExperimentConfig::task_embed);
    bind_int("task.signal_per_class", &ExperimentConfig::task_signal_per_class);
    bind_int("task.trigger_pool", &ExperimentConfig::task_trigger_pool);
    bind_int("task.train_size", &ExperimentConfig::task_train_size);
    bind_int("task.test_size", &ExperimentConfig::task_test_size);
    bind_double("task.p_signal", &ExperimentConfig::task_p_signal);
    bind_int("clients", &ExperimentConfig::clients);
    bind_int("rounds", &ExperimentConfig::rounds);
    bind_int("local.iters", &ExperimentConfig::local_iters);
    bind_double("local.lr", &ExperimentConfig::local_lr);
    bind_int("local.batch", &ExperimentConfig::local_batch);
    bind_string("partition.mode", &ExperimentConfig::partition_mode);
    bind_double("partition.alpha", &ExperimentConfig::partition_alpha);
    bind_int("malicious.count", &ExperimentConfig::num_malicious);
    m["malicious.indices"] = {
        [](ExperimentConfig& c, const std::string& v, int line) {
          c.malicious_indices = parse_int_list(v, line);
        },
        [](const ExperimentConfig& c) { return fmt_int_list(c.malicious_indices); }};
    bind_string("aggregator", &ExperimentConfig::aggregator);
    bind_double("dimkrum.rho", &ExperimentConfig::dimkrum_rho);
    bind_double("dimkrum.alpha", &ExperimentConfig::dimkrum_alpha);
    bind_double("dimkrum.lambda", &ExperimentConfig::dimkrum_lambda);
    bind_double("crfl.noise_std", &ExperimentConfig::crfl_noise_std);
    bind_double("crfl.bound_slope", &ExperimentConfig::crfl_bound_slope);
    bind_double("crfl.bound_intercept", &ExperimentConfig::crfl_bound_intercept);
    bind_string("attack.kind", &ExperimentConfig::attack_kind);
    bind_double("attack.poison_rate", &ExperimentConfig::attack_poison_rate);
    bind_int("attack.target_label", &ExperimentConfig::attack_target_label);
    bind_int("attack.trigger_len", &ExperimentConfig::attack_trigger_len);
    bind_string("adaptive.mode", &ExperimentConfig::adaptive_mode);
    bind_double("adaptive.lambda_wp", &ExperimentConfig::adaptive_lambda_wp);
    bind_double("adaptive.epsilon", &ExperimentConfig::adaptive_epsilon);
    bind_int("repeat", &ExperimentConfig::repeat);
    m["seed"] = {[](ExperimentConfig& c, const std::string& v, int line) {
                   try {
                     c.seed = std::stoull(v);
                   } catch (const std::exception&) {
                     throw ConfigError("expected an integer, got '" + v + "'", line);
                   }
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }};
    return m;
  }();
  return schema;
}

}  // namespace detail

inline bool config_has_key(const std::string& key) {
  return detail::config_schema().count(key) > 0;
}

inline void config_set_key(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value, int line = 0) {
  auto it = detail::config_schema().find(key);
  if (it == detail::config_schema().end())
    throw ConfigError("unknown config key '" + key + "'", line);
  it->second.set(cfg, value, line);
}

// Flat key = value text; '#' starts a comment.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string raw;
  int line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    std::string s = raw;
    size_t hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value', got '" + detail::trim(raw) + "'", line);
    std::string key = detail::trim(s.substr(0, eq));
    std::string value = detail::trim(s.substr(eq + 1));
    config_set_key(cfg, key, value, line);
  }
  return cfg;
}

// JSON alternative; nested objects become dotted keys.
inline ExperimentConfig parse_config_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  std::function<void(const nlohmann::json&, const std::string&)> walk =
      [&](const nlohmann::json& node, const std::string& prefix) {
        for (auto it = node.begin(); it != node.end(); ++it) {
          std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
          const auto& v = it.value();
          if (v.is_object()) {
            walk(v, key);
          } else if (v.is_array()) {
            std::string list;
            for (size_t i = 0; i < v.size(); ++i) {
              if (i) list += ",";
              list += v[i].dump();
            }
            config_set_key(cfg, key, list);
          } else if (v.is_string()) {
            config_set_key(cfg, key, v.get<std::string>());
          } else {
            config_set_key(cfg, key, v.dump());
          }
        }
      };
  if (!j.is_object()) throw ConfigError("config JSON must be an object");
  walk(j, "");
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return parse_config_json(text);
  return parse_config_text(text);
}

// Canonical flat serialization (sorted keys); parse(serialize(c)) == c.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, binding] : detail::config_schema()) {
    out += key;
    out += " = ";
    out += binding.get(cfg);
    out += "\n";
  }
  return out;
}

inline void validate_config(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (cfg.schema_version != 1) fail("schema_version: only version 1 is supported");
  if (cfg.task_classes < 2) fail("task.classes: need at least 2 classes");
  if (cfg.task_vocab < cfg.task_classes * cfg.task_signal_per_class +
                           cfg.task_trigger_pool + 1)
    fail("task.vocab: too small for signal tokens, trigger pool, and background");
  if (cfg.task_sentence_len < 1) fail("task.sentence_len: must be positive");
  if (cfg.task_embed < 1) fail("task.embed: must be positive");
  if (cfg.task_train_size < cfg.clients) fail("task.train_size: fewer instances than clients");
  if (cfg.task_test_size < 1) fail("task.test_size: must be positive");
  if (!(cfg.task_p_signal > 0.0 && cfg.task_p_signal < 1.0))
    fail("task.p_signal: must lie in (0, 1)");
  if (cfg.clients < 2) fail("clients: need at least 2");
  if (cfg.rounds < 1) fail("rounds: must be positive");
  if (cfg.local_iters < 0) fail("local.iters: must be non-negative");
  if (!(cfg.local_lr >= 0.0)) fail("local.lr: must be non-negative");
  if (cfg.local_batch < 1) fail("local.batch: must be positive");
  if (cfg.partition_mode != "iid" && cfg.partition_mode != "dirichlet")
    fail("partition.mode: must be 'iid' or 'dirichlet'");
  if (!(cfg.partition_alpha > 0.0)) fail("partition.alpha: must be positive");
  if (cfg.num_malicious < 0) fail("malicious.count: must be non-negative");
  if (2 * cfg.num_malicious >= cfg.clients)
    fail("malicious.count: must stay below half the clients");
  const auto idx = cfg.effective_malicious_indices();
  if (static_cast<int>(idx.size()) != cfg.num_malicious)
    fail("malicious.indices: length must equal malicious.count");
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= cfg.clients) fail("malicious.indices: index out of range");
    for (size_t j = i + 1; j < idx.size(); ++j)
      if (idx[i] == idx[j]) fail("malicious.indices: indices must be distinct");
  }
  static const char* kAggregators[] = {"fedavg",    "median",   "rfa",  "crfl",
                                       "foolsgold", "residual", "krum", "multikrum",
                                       "bulyan",    "dimkrum"};
  bool agg_ok = false;
  for (const char* a : kAggregators) agg_ok = agg_ok || cfg.aggregator == a;
  if (!agg_ok) fail("aggregator: unknown name '" + cfg.aggregator + "'");
  if (!(cfg.dimkrum_rho > 0.0 && cfg.dimkrum_rho <= 1.0))
    fail("dimkrum.rho: must lie in (0, 1]");
  if (!(cfg.dimkrum_alpha >= 0.0 && cfg.dimkrum_alpha < 1.0))
    fail("dimkrum.alpha: must lie in [0, 1)");
  if (!(cfg.dimkrum_lambda >= 0.0)) fail("dimkrum.lambda: must be non-negative");
  if (!(cfg.crfl_noise_std > 0.0)) fail("crfl.noise_std: must be positive");
  if (!(cfg.crfl_bound_slope > 0.0)) fail("crfl.bound_slope: must be positive");
  if (!(cfg.crfl_bound_intercept > 0.0)) fail("crfl.bound_intercept: must be positive");
  if (cfg.attack_kind != "badword" && cfg.attack_kind != "badsent" &&
      cfg.attack_kind != "ep" && cfg.attack_kind != "none")
    fail("attack.kind: must be badword, badsent, ep, or none");
  if (cfg.num_malicious > 0 && cfg.attack_kind == "none")
    fail("attack.kind: malicious clients configured but no attack chosen");
  if (!(cfg.attack_poison_rate > 0.0 && cfg.attack_poison_rate <= 1.0))
    fail("attack.poison_rate: must lie in (0, 1]");
  if (cfg.attack_target_label < 0 || cfg.attack_target_label >= cfg.task_classes)
    fail("attack.target_label: out of class range");
  if (cfg.attack_trigger_len < 3 || cfg.attack_trigger_len > 5)
    fail("attack.trigger_len: badsent trigger must use 3 to 5 tokens");
  if (cfg.attack_trigger_len > cfg.task_trigger_pool)
    fail("attack.trigger_len: exceeds the reserved trigger pool");
  if (cfg.attack_trigger_len > cfg.task_sentence_len)
    fail("attack.trigger_len: exceeds the sentence length");
  if (cfg.adaptive_mode != "none" && cfg.adaptive_mode != "freeze" &&
      cfg.adaptive_mode != "wp_clean" && cfg.adaptive_mode != "wp_last" &&
      cfg.adaptive_mode != "awp")
    fail("adaptive.mode: must be none, freeze, wp_clean, wp_last, or awp");
  if (!(cfg.adaptive_lambda_wp >= 0.0)) fail("adaptive.lambda_wp: must be non-negative");
  if (!(cfg.adaptive_epsilon > 0.0)) fail("adaptive.epsilon: must be positive");
  if (cfg.repeat < 1) fail("repeat: must be positive");
}

}  // namespace fedagg
