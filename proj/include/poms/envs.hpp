#pragma once

// Deterministic desk-scale environments. Each rollout is a pure function of
// (environment, parameters): closed-loop episode, behaviour descriptor at the
// end. Dynamics that leave the finite range mark the rollout invalid instead
// of throwing, so a search loop can charge the evaluation and move on.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "poms/archive.hpp"
#include "poms/errors.hpp"
#include "poms/policy.hpp"

namespace poms {

struct KickerConstants {
  double dt = 0.05;
  double gravity = 9.81;
  double ball_offset = 0.5;      // ball starts this far ahead of the agent
  double kick_proximity = 0.3;   // |p - b_x| below this (ball grounded, |v| > 0) kicks
  double kick_vx_gain = 1.5;     // b_vx = gain * v
  double kick_vy_gain = 0.75;    // b_vy = gain * |v|
  double restitution = 0.5;
  double horizontal_damping = 0.9;
  double ball_stop_speed = 0.01;
  std::size_t ball_max_steps = 2000;  // settling cap after the agent freezes
};

struct EnvSpec {
  std::string name;
  std::size_t observation_dim = 0;
  std::size_t action_dim = 0;
  std::size_t episode_length = 0;  // T: number of agent actions
  double a_max = 1.0;              // symmetric action clip
  GridSpec grid;
  KickerConstants kicker;   // used by point-kicker
  double reacher_dt = 0.05; // used by arm-reacher
};

inline GridDim continuous_dim(double lower, double upper, std::size_t bins) {
  GridDim d;
  d.kind = GridDim::Kind::continuous;
  d.lower = lower;
  d.upper = upper;
  d.bins = bins;
  return d;
}

// Point mass on a line that can kick a ball once; BD = (final ball x,
// max ball height), on a 50x20 grid over [0,50] x [0,8].
inline EnvSpec make_point_kicker() {
  EnvSpec env;
  env.name = "point-kicker";
  env.observation_dim = 6;  // p, v, b_x - p, b_y, b_vx, b_vy
  env.action_dim = 1;
  env.episode_length = 100;
  env.a_max = 4.0;
  env.grid.dims = {continuous_dim(0.0, 50.0, 50), continuous_dim(0.0, 8.0, 20)};
  return env;
}

// 3-link planar kinematic arm, unit links; BD = final end-effector position
// on a 30x30 grid over [-3,3]^2.
inline EnvSpec make_arm_reacher() {
  EnvSpec env;
  env.name = "arm-reacher";
  env.observation_dim = 8;  // cos q (3), sin q (3), ee_x, ee_y
  env.action_dim = 3;
  env.episode_length = 50;
  env.a_max = 1.0;
  env.grid.dims = {continuous_dim(-3.0, 3.0, 30), continuous_dim(-3.0, 3.0, 30)};
  return env;
}

// No dynamics: the policy is probed at two fixed observations (the first two
// standard basis vectors) and the clipped outputs form the BD. Coverage under
// random parameters is analytically tractable, which makes this the ground
// truth environment for operator tests.
inline EnvSpec make_probe_bd() {
  EnvSpec env;
  env.name = "probe-bd";
  env.observation_dim = 2;
  env.action_dim = 1;
  env.episode_length = 2;
  env.a_max = 1.0;
  env.grid.dims = {continuous_dim(-1.0, 1.0, 20), continuous_dim(-1.0, 1.0, 20)};
  return env;
}

inline EnvSpec env_by_name(const std::string& name) {
  if (name == "point-kicker") return make_point_kicker();
  if (name == "arm-reacher") return make_arm_reacher();
  if (name == "probe-bd") return make_probe_bd();
  throw ConfigInvalid("unknown environment: " + name);
}

struct Rollout {
  std::vector<std::vector<double>> states;   // T+1 observations
  std::vector<std::vector<double>> actions;  // T actions
  BehaviourDescriptor bd;
  bool valid = false;
};

// ---------------------------------------------------------------------------
// Ball physics, shared between the in-episode flight and the standalone
// ballistic helper used by the energy-conservation tests.

struct BallState {
  double x = 0.0, y = 0.0, vx = 0.0, vy = 0.0;
};

inline void ball_step(BallState& b, const KickerConstants& c) {
  b.x += c.dt * b.vx;
  b.y += c.dt * b.vy;
  b.vy -= c.dt * c.gravity;
  if (b.y <= 0.0) {
    b.y = 0.0;
    if (b.vy < 0.0) b.vy = -c.restitution * b.vy;
    b.vx *= c.horizontal_damping;
  }
}

inline double ball_speed(const BallState& b) { return std::hypot(b.vx, b.vy); }

struct BallFlight {
  double final_x = 0.0;
  double max_y = 0.0;
  std::size_t steps = 0;
};

// Integrates a kicked ball from ground level until it comes to rest (speed
// below stop threshold) or the step cap is reached.
inline BallFlight simulate_ball_flight(double vx0, double vy0, const KickerConstants& c) {
  BallState b;
  b.vx = vx0;
  b.vy = vy0;
  BallFlight flight;
  while (ball_speed(b) >= c.ball_stop_speed && flight.steps < c.ball_max_steps) {
    ball_step(b, c);
    flight.max_y = std::max(flight.max_y, b.y);
    ++flight.steps;
  }
  flight.final_x = b.x;
  return flight;
}

namespace detail {

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline std::vector<double> clip_action(std::vector<double> a, double a_max) {
  for (auto& v : a) v = std::clamp(v, -a_max, a_max);
  return a;
}

inline Rollout invalid_rollout() { return Rollout{}; }

inline Rollout evaluate_point_kicker(const EnvSpec& env, const CompiledPolicy& policy) {
  const KickerConstants& c = env.kicker;
  double p = 0.0, v = 0.0;
  BallState ball;
  ball.x = p + c.ball_offset;
  bool kicked = false;
  bool ball_active = false;
  double max_by = 0.0;

  Rollout ro;
  ro.states.reserve(env.episode_length + 1);
  ro.actions.reserve(env.episode_length);
  auto observe = [&]() { return std::vector<double>{p, v, ball.x - p, ball.y, ball.vx, ball.vy}; };

  for (std::size_t t = 0; t < env.episode_length; ++t) {
    ro.states.push_back(observe());
    auto a = detail::clip_action(policy.act(ro.states.back()), env.a_max);
    ro.actions.push_back(a);
    // explicit Euler from the pre-step state
    p += c.dt * v;
    v += c.dt * a[0];
    if (ball_active) {
      ball_step(ball, c);
      max_by = std::max(max_by, ball.y);
      if (ball_speed(ball) < c.ball_stop_speed) ball_active = false;
    }
    if (!kicked && ball.y <= 0.0 && std::abs(p - ball.x) < c.kick_proximity &&
        std::abs(v) > 0.0) {
      ball.vx = c.kick_vx_gain * v;
      ball.vy = c.kick_vy_gain * std::abs(v);
      kicked = true;
      ball_active = true;
    }
    if (!std::isfinite(p) || !std::isfinite(v) || !std::isfinite(ball.x) ||
        !std::isfinite(ball.y))
      return invalid_rollout();
  }
  ro.states.push_back(observe());

  // The agent freezes; the ball settles on its own to determine its final x.
  // The max-height descriptor only observes the episode window above: a late
  // kick records the truncated arc, so kick timing and kick speed span a 2-D
  // region rather than a single curve.
  for (std::size_t s = 0; ball_active && s < c.ball_max_steps; ++s) {
    ball_step(ball, c);
    if (ball_speed(ball) < c.ball_stop_speed) ball_active = false;
  }

  std::vector<double> raw{ball.x, max_by};
  if (!all_finite(raw)) return invalid_rollout();
  ro.bd = make_descriptor(std::move(raw), env.grid);
  ro.valid = true;
  return ro;
}

inline Rollout evaluate_arm_reacher(const EnvSpec& env, const CompiledPolicy& policy) {
  std::vector<double> q(3, 0.0);
  auto observe = [&]() {
    std::vector<double> s(8);
    double cum = 0.0, ee_x = 0.0, ee_y = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      s[k] = std::cos(q[k]);
      s[3 + k] = std::sin(q[k]);
      cum += q[k];
      ee_x += std::cos(cum);
      ee_y += std::sin(cum);
    }
    s[6] = ee_x;
    s[7] = ee_y;
    return s;
  };

  Rollout ro;
  ro.states.reserve(env.episode_length + 1);
  for (std::size_t t = 0; t < env.episode_length; ++t) {
    ro.states.push_back(observe());
    auto a = detail::clip_action(policy.act(ro.states.back()), env.a_max);
    ro.actions.push_back(a);
    for (std::size_t k = 0; k < 3; ++k) q[k] += env.reacher_dt * a[k];
    if (!all_finite(q)) return invalid_rollout();
  }
  ro.states.push_back(observe());
  const auto& s = ro.states.back();
  std::vector<double> raw{s[6], s[7]};
  if (!all_finite(raw)) return invalid_rollout();
  ro.bd = make_descriptor(std::move(raw), env.grid);
  ro.valid = true;
  return ro;
}

inline Rollout evaluate_probe_bd(const EnvSpec& env, const CompiledPolicy& policy) {
  Rollout ro;
  std::vector<double> raw;
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> s(env.observation_dim, 0.0);
    s[k % env.observation_dim] = 1.0;
    ro.states.push_back(s);
    auto a = detail::clip_action(policy.act(s), env.a_max);
    raw.insert(raw.end(), a.begin(), a.end());
    ro.actions.push_back(std::move(a));
  }
  ro.states.emplace_back(env.observation_dim, 0.0);  // terminal
  raw.resize(env.grid.dims.size());                  // truncate to grid dimensionality
  if (!all_finite(raw)) return invalid_rollout();
  ro.bd = make_descriptor(std::move(raw), env.grid);
  ro.valid = true;
  return ro;
}

}  // namespace detail

// Runs the closed-loop episode and computes the behaviour descriptor.
// Non-finite parameters or states yield an invalid rollout rather than an
// exception; callers charge the evaluation either way.
inline Rollout evaluate(const EnvSpec& env, const ParamVector& theta) {
  if (theta.shape.input_dim != env.observation_dim ||
      theta.shape.output_dim != env.action_dim)
    throw ShapeMismatch("evaluate: policy shape does not match environment");
  if (!detail::all_finite(theta.values)) return detail::invalid_rollout();
  const CompiledPolicy policy(theta);
  if (env.name == "point-kicker") return detail::evaluate_point_kicker(env, policy);
  if (env.name == "arm-reacher") return detail::evaluate_arm_reacher(env, policy);
  if (env.name == "probe-bd") return detail::evaluate_probe_bd(env, policy);
  throw ConfigInvalid("evaluate: unknown environment " + env.name);
}

}  // namespace poms
