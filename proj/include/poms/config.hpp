#pragma once

// Run/campaign configuration: JSON schema, validation with field-level
// diagnostics, and the semantic fingerprint that names a configuration in the
// manifest. The fingerprint hashes the fully resolved settings, so formatting,
// key order, and explicitly-written defaults all map to the same hash, while
// any change that could alter results changes it.

#include <cstdint>
#include <string>
#include <vector>

#include "poms/envs.hpp"
#include "poms/errors.hpp"
#include "poms/io.hpp"
#include "poms/search.hpp"

namespace poms {

struct RunConfig {
  EnvSpec env;
  PolicyShape policy;             // input/output dims come from the env
  std::vector<Variant> variants;  // one for `run`, two or more for `compare`
  BudgetSpec budget;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  std::size_t checkpoint_every = 0;
  std::size_t threads = 1;
  bool dump_traces = false;
};

namespace detail {

inline const Json& require_field(const Json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigInvalid(where + "." + key + " is required");
  return *it;
}

inline double require_positive(const Json& j, const char* key, const std::string& where) {
  const double v = require_field(j, key, where).get<double>();
  if (!(v > 0.0)) throw ConfigInvalid(where + "." + key + " must be > 0");
  return v;
}

inline std::size_t get_count(const Json& j, const char* key, std::size_t fallback,
                             const std::string& where, std::size_t min_value = 0) {
  if (!j.contains(key)) return fallback;
  const auto& f = j.at(key);
  if (!f.is_number_integer() && !f.is_number_unsigned())
    throw ConfigInvalid(where + "." + key + " must be an integer");
  if (f.is_number_integer() && f.get<long long>() < 0)
    throw ConfigInvalid(where + "." + key + " must be >= 0");
  const auto v = f.get<std::size_t>();
  if (v < min_value)
    throw ConfigInvalid(where + "." + key + " must be >= " + std::to_string(min_value));
  return v;
}

}  // namespace detail

inline EnvSpec parse_env(const Json& j) {
  if (!j.is_object()) throw ConfigInvalid("env must be an object");
  EnvSpec env = env_by_name(detail::require_field(j, "name", "env").get<std::string>());
  if (j.contains("a_max")) {
    env.a_max = j.at("a_max").get<double>();
    if (!(env.a_max > 0.0)) throw ConfigInvalid("env.a_max must be > 0");
  }
  if (j.contains("episode_length"))
    env.episode_length = detail::get_count(j, "episode_length", env.episode_length, "env", 1);
  if (j.contains("grid")) {
    const auto& dims = j.at("grid");
    if (!dims.is_array() || dims.size() != env.grid.dims.size())
      throw ConfigInvalid("env.grid must list exactly " +
                          std::to_string(env.grid.dims.size()) + " dimensions");
    for (std::size_t d = 0; d < env.grid.dims.size(); ++d) {
      const auto& dim = dims[d];
      GridDim g;
      g.kind = GridDim::Kind::continuous;
      g.lower = detail::require_field(dim, "lower", "env.grid").get<double>();
      g.upper = detail::require_field(dim, "upper", "env.grid").get<double>();
      g.bins = detail::get_count(dim, "bins", 0, "env.grid", 1);
      if (!(g.upper > g.lower)) throw ConfigInvalid("env.grid upper must exceed lower");
      env.grid.dims[d] = g;
    }
  }
  if (j.contains("kicker")) {
    const auto& k = j.at("kicker");
    auto real = [&k](const char* key, double fallback) {
      return k.contains(key) ? k.at(key).get<double>() : fallback;
    };
    env.kicker.dt = real("dt", env.kicker.dt);
    env.kicker.gravity = real("gravity", env.kicker.gravity);
    env.kicker.ball_offset = real("ball_offset", env.kicker.ball_offset);
    env.kicker.kick_proximity = real("kick_proximity", env.kicker.kick_proximity);
    env.kicker.kick_vx_gain = real("kick_vx_gain", env.kicker.kick_vx_gain);
    env.kicker.kick_vy_gain = real("kick_vy_gain", env.kicker.kick_vy_gain);
    env.kicker.restitution = real("restitution", env.kicker.restitution);
    env.kicker.horizontal_damping = real("horizontal_damping", env.kicker.horizontal_damping);
    env.kicker.ball_stop_speed = real("ball_stop_speed", env.kicker.ball_stop_speed);
    env.kicker.ball_max_steps =
        detail::get_count(k, "ball_max_steps", env.kicker.ball_max_steps, "env.kicker", 1);
  }
  if (j.contains("dt")) env.reacher_dt = j.at("dt").get<double>();
  return env;
}

inline TrainOptions parse_train_options(const Json& j) {
  TrainOptions opt;
  if (j.is_null()) return opt;
  if (!j.is_object()) throw ConfigInvalid("variant.train must be an object");
  auto real = [&j](const char* key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
  };
  opt.learning_rate = real("learning_rate", opt.learning_rate);
  opt.beta1 = real("beta1", opt.beta1);
  opt.beta2 = real("beta2", opt.beta2);
  opt.adam_epsilon = real("adam_epsilon", opt.adam_epsilon);
  opt.test_fraction = real("test_fraction", opt.test_fraction);
  opt.slope_threshold = real("slope_threshold", opt.slope_threshold);
  opt.batch_size = detail::get_count(j, "batch_size", opt.batch_size, "variant.train", 1);
  opt.max_epochs = detail::get_count(j, "max_epochs", opt.max_epochs, "variant.train", 1);
  opt.window = detail::get_count(j, "window", opt.window, "variant.train", 2);
  if (!(opt.learning_rate > 0.0))
    throw ConfigInvalid("variant.train.learning_rate must be > 0");
  if (opt.test_fraction < 0.0 || opt.test_fraction >= 1.0)
    throw ConfigInvalid("variant.train.test_fraction must be in [0, 1)");
  return opt;
}

inline Variant parse_variant(const Json& j) {
  if (!j.is_object()) throw ConfigInvalid("variant must be an object");
  Variant v;
  v.kind = variant_from_name(detail::require_field(j, "kind", "variant").get<std::string>());
  const bool needs_sigma_theta =
      v.kind == VariantKind::mape_iso || variant_uses_latent(v.kind);
  if (needs_sigma_theta)
    v.sigma_theta = detail::require_positive(j, "sigma_theta", "variant");
  if (v.kind == VariantKind::mape_isolinedd) {
    v.sigma1 = detail::require_field(j, "sigma1", "variant").get<double>();
    v.sigma2 = detail::require_field(j, "sigma2", "variant").get<double>();
    if (v.sigma1 < 0.0 || v.sigma2 < 0.0)
      throw ConfigInvalid("variant.sigma1 and variant.sigma2 must be >= 0");
  }
  if (variant_uses_latent(v.kind)) {
    v.latent_dim = detail::get_count(j, "latent_dim", v.latent_dim, "variant", 1);
    v.hidden_dim = detail::get_count(j, "hidden_dim", v.hidden_dim, "variant", 1);
    v.train = parse_train_options(j.contains("train") ? j.at("train") : Json());
  }
  return v;
}

// Shared body of run and campaign configs; `campaign` selects which variant
// key is required ("variant" object vs "variants" list of two or more).
inline RunConfig parse_config(const Json& j, bool campaign) {
  if (!j.is_object()) throw ConfigInvalid("config root must be an object");
  RunConfig cfg;
  cfg.env = parse_env(detail::require_field(j, "env", "config"));

  const auto& pol = detail::require_field(j, "policy", "config");
  cfg.policy.hidden = pol.contains("hidden")
                          ? pol.at("hidden").get<std::vector<std::size_t>>()
                          : std::vector<std::size_t>{};
  cfg.policy.input_dim = cfg.env.observation_dim;
  cfg.policy.output_dim = cfg.env.action_dim;
  for (std::size_t h : cfg.policy.hidden)
    if (h < 1) throw ConfigInvalid("policy.hidden layers must be >= 1 unit");

  if (campaign) {
    const auto& variants = detail::require_field(j, "variants", "config");
    if (!variants.is_array() || variants.size() < 2)
      throw ConfigInvalid("config.variants must list at least two variants");
    for (const auto& vj : variants) cfg.variants.push_back(parse_variant(vj));
    for (std::size_t a = 0; a < cfg.variants.size(); ++a)
      for (std::size_t b = a + 1; b < cfg.variants.size(); ++b)
        if (cfg.variants[a].kind == cfg.variants[b].kind)
          throw ConfigInvalid("config.variants must not repeat a kind");
  } else {
    cfg.variants.push_back(parse_variant(detail::require_field(j, "variant", "config")));
  }

  if (j.contains("budget")) {
    const auto& b = j.at("budget");
    cfg.budget.bootstrap = detail::get_count(b, "bootstrap", cfg.budget.bootstrap, "budget", 1);
    cfg.budget.loops = detail::get_count(b, "loops", cfg.budget.loops, "budget", 1);
    cfg.budget.iters = detail::get_count(b, "iters", cfg.budget.iters, "budget", 1);
    cfg.budget.batch = detail::get_count(b, "batch", cfg.budget.batch, "budget", 1);
  }

  const auto& seeds = detail::require_field(j, "seeds", "config");
  if (!seeds.is_array() || seeds.empty())
    throw ConfigInvalid("config.seeds must be a non-empty list");
  for (const auto& s : seeds) cfg.seeds.push_back(s.get<std::uint64_t>());

  cfg.output_dir = detail::require_field(j, "output_dir", "config").get<std::string>();
  if (cfg.output_dir.empty()) throw ConfigInvalid("config.output_dir must not be empty");
  cfg.checkpoint_every = detail::get_count(j, "checkpoint_every", 0, "config");
  cfg.threads = detail::get_count(j, "threads", 1, "config", 1);
  cfg.dump_traces = j.value("dump_traces", false);
  return cfg;
}

inline Json env_to_json(const EnvSpec& env) {
  return Json{{"name", env.name},
              {"observation_dim", env.observation_dim},
              {"action_dim", env.action_dim},
              {"episode_length", env.episode_length},
              {"a_max", env.a_max},
              {"grid", grid_to_json(env.grid)},
              {"kicker",
               Json{{"dt", env.kicker.dt},
                    {"gravity", env.kicker.gravity},
                    {"ball_offset", env.kicker.ball_offset},
                    {"kick_proximity", env.kicker.kick_proximity},
                    {"kick_vx_gain", env.kicker.kick_vx_gain},
                    {"kick_vy_gain", env.kicker.kick_vy_gain},
                    {"restitution", env.kicker.restitution},
                    {"horizontal_damping", env.kicker.horizontal_damping},
                    {"ball_stop_speed", env.kicker.ball_stop_speed},
                    {"ball_max_steps", env.kicker.ball_max_steps}}},
              {"reacher_dt", env.reacher_dt}};
}

inline Json variant_to_json(const Variant& v) {
  Json j{{"kind", variant_name(v.kind)}};
  if (v.kind == VariantKind::mape_iso || variant_uses_latent(v.kind))
    j["sigma_theta"] = v.sigma_theta;
  if (v.kind == VariantKind::mape_isolinedd) {
    j["sigma1"] = v.sigma1;
    j["sigma2"] = v.sigma2;
  }
  if (variant_uses_latent(v.kind)) {
    j["latent_dim"] = v.latent_dim;
    if (v.kind != VariantKind::poms_pca) {
      j["hidden_dim"] = v.hidden_dim;
      j["train"] = Json{{"learning_rate", v.train.learning_rate},
                        {"beta1", v.train.beta1},
                        {"beta2", v.train.beta2},
                        {"adam_epsilon", v.train.adam_epsilon},
                        {"batch_size", v.train.batch_size},
                        {"max_epochs", v.train.max_epochs},
                        {"test_fraction", v.train.test_fraction},
                        {"window", v.train.window},
                        {"slope_threshold", v.train.slope_threshold}};
    }
  }
  return j;
}

// Everything that can influence results, fully resolved. output_dir, thread
// count, and trace dumping are deliberately excluded: they change where and
// how artifacts appear, never their contents.
inline Json config_fingerprint(const RunConfig& cfg) {
  Json variants = Json::array();
  for (const auto& v : cfg.variants) variants.push_back(variant_to_json(v));
  return Json{{"engine_version", kEngineVersion},
              {"env", env_to_json(cfg.env)},
              {"policy", shape_to_json(cfg.policy)},
              {"variants", variants},
              {"budget",
               Json{{"bootstrap", cfg.budget.bootstrap},
                    {"loops", cfg.budget.loops},
                    {"iters", cfg.budget.iters},
                    {"batch", cfg.budget.batch}}},
              {"seeds", cfg.seeds},
              {"checkpoint_every", cfg.checkpoint_every}};
}

inline std::string config_hash(const RunConfig& cfg) {
  return json_hash_hex(config_fingerprint(cfg));
}

inline Json manifest_json(const RunConfig& cfg) {
  return Json{{"format", "poms-manifest"},
              {"version", 1},
              {"engine_version", kEngineVersion},
              {"config_hash", config_hash(cfg)},
              {"config", config_fingerprint(cfg)}};
}

}  // namespace poms
