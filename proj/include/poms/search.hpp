#pragma once

// The search engine: mutation operators, the reconstruction-gated region
// search, and the outer loop shared by all variants (latent-model searchers,
// the classic MAP-Elites operators, and the plain-sampling baselines).

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "poms/archive.hpp"
#include "poms/autoencoder.hpp"
#include "poms/envs.hpp"
#include "poms/errors.hpp"
#include "poms/metrics.hpp"
#include "poms/numkit.hpp"
#include "poms/policy.hpp"
#include "poms/rng.hpp"

namespace poms {

enum class VariantKind {
  poms,             // AE latent search, Jacobian-scaled latent noise
  poms_pca,         // linear-PCA latent model ablation
  poms_no_jacobian, // latent noise from coordinate ranges instead of Eq-2 pushforward
  mape_iso,         // MAP-Elites, isotropic Gaussian operator
  mape_isolinedd,   // MAP-Elites, iso + directional line operator
  ps_uniform,       // no selection: fresh uniform draws every iteration
  ps_glorot,        // no selection: fresh Glorot draws every iteration
};

inline const char* variant_name(VariantKind kind) {
  switch (kind) {
    case VariantKind::poms: return "poms";
    case VariantKind::poms_pca: return "poms-pca";
    case VariantKind::poms_no_jacobian: return "poms-no-jacobian";
    case VariantKind::mape_iso: return "mape-iso";
    case VariantKind::mape_isolinedd: return "mape-isolinedd";
    case VariantKind::ps_uniform: return "ps-uniform";
    case VariantKind::ps_glorot: return "ps-glorot";
  }
  return "?";
}

inline VariantKind variant_from_name(const std::string& name) {
  for (VariantKind k :
       {VariantKind::poms, VariantKind::poms_pca, VariantKind::poms_no_jacobian,
        VariantKind::mape_iso, VariantKind::mape_isolinedd, VariantKind::ps_uniform,
        VariantKind::ps_glorot})
    if (name == variant_name(k)) return k;
  throw ConfigInvalid("unknown variant: " + name);
}

// Variants that maintain a latent model over the collection.
inline bool variant_uses_latent(VariantKind kind) {
  return kind == VariantKind::poms || kind == VariantKind::poms_pca ||
         kind == VariantKind::poms_no_jacobian;
}

struct Variant {
  VariantKind kind = VariantKind::poms;
  double sigma_theta = 0.01;  // per-coordinate variance of parameter-space noise
  double sigma1 = 0.01;       // isolinedd isotropic scale (std units)
  double sigma2 = 0.2;        // isolinedd directional scale
  std::size_t hidden_dim = 64;
  std::size_t latent_dim = 10;
  TrainOptions train;
};

struct BudgetSpec {
  std::size_t bootstrap = 500;
  std::size_t loops = 10;
  std::size_t iters = 20;
  std::size_t batch = 60;

  std::size_t total() const { return bootstrap + loops * iters * batch; }
};

// ---------------------------------------------------------------------------
// Mutation operators.

// theta' = theta + eps with eps ~ N(0, sigma_theta * I).
inline std::vector<double> mutate_iso(std::span<const double> theta, double sigma_theta,
                                      Rng& rng) {
  const double sd = std::sqrt(sigma_theta);
  std::vector<double> out(theta.begin(), theta.end());
  for (auto& v : out) v += sd * rng.normal();
  return out;
}

// theta' = theta_i + sigma1*eps + sigma2*delta*(theta_j - theta_i), with eps a
// standard normal vector and delta a standard normal scalar.
inline std::vector<double> mutate_isolinedd(std::span<const double> theta_i,
                                            std::span<const double> theta_j, double sigma1,
                                            double sigma2, Rng& rng) {
  if (theta_i.size() != theta_j.size())
    throw DimensionMismatch("mutate_isolinedd: parents differ in length");
  std::vector<double> out(theta_i.begin(), theta_i.end());
  for (auto& v : out) v += sigma1 * rng.normal();
  const double delta = rng.normal();
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] += sigma2 * delta * (theta_j[k] - theta_i[k]);
  return out;
}

// Latent-space step scaled by the decoder Jacobian: z' ~ N(encode(theta),
// sigma_theta * J^T J), then decode.
inline std::vector<double> mutate_latent(std::span<const double> theta,
                                         const LatentModel& model, double sigma_theta,
                                         Rng& rng) {
  const auto z = encode(model, theta);
  const Matrix jac = decoder_jacobian(model, z);
  const Matrix cov = latent_covariance(jac, sigma_theta);
  const auto chol = cholesky(cov);
  const auto z_new = sample_mvn(z, chol.lower, rng);
  return decode(model, z_new);
}

// Latent step with a fixed diagonal covariance of latent coordinate ranges.
inline std::vector<double> mutate_latent_range(std::span<const double> theta,
                                               const LatentModel& model,
                                               const Matrix& range_cov, Rng& rng) {
  const auto z = encode(model, theta);
  const auto chol = cholesky(range_cov);
  const auto z_new = sample_mvn(z, chol.lower, rng);
  return decode(model, z_new);
}

// ---------------------------------------------------------------------------
// Region-based search: per candidate, mutate in latent space when the model
// reconstructs it well (squared error below eps_recn), in parameter space
// otherwise. The first loop of a run bypasses the gate with a fair coin.

enum class LatentOp { jacobian, range };

namespace detail {

// One candidate through the region gate. Returns the mutant and records which
// branch was taken; a failed latent factorization falls back to the
// parameter-space operator (the candidate still costs one evaluation).
inline std::vector<double> region_mutate_one(std::span<const double> theta,
                                             const LatentModel& model, LatentOp op,
                                             const Matrix* range_cov, double eps_recn,
                                             double sigma_theta, bool force_fair_coin,
                                             Rng& rng, bool& parameter_space) {
  bool latent = force_fair_coin ? rng.coin()
                                : reconstruction_error(model, theta) < eps_recn;
  if (latent && op == LatentOp::range && range_cov == nullptr) latent = false;
  if (latent) {
    try {
      parameter_space = false;
      if (op == LatentOp::jacobian) return mutate_latent(theta, model, sigma_theta, rng);
      return mutate_latent_range(theta, model, *range_cov, rng);
    } catch (const DecompositionFailed&) {
      // fall through to the parameter branch
    }
  }
  parameter_space = true;
  return mutate_iso(theta, sigma_theta, rng);
}

}  // namespace detail

struct RegionBatchResult {
  std::vector<std::vector<double>> mutants;
  std::size_t parameter_space_count = 0;

  double mixing_ratio() const {
    return mutants.empty() ? 0.0
                           : static_cast<double>(parameter_space_count) /
                                 static_cast<double>(mutants.size());
  }
};

inline RegionBatchResult region_based_search(std::span<const std::vector<double>> batch,
                                             const LatentModel& model, double eps_recn,
                                             double sigma_theta, Rng& rng,
                                             bool force_fair_coin = false) {
  RegionBatchResult res;
  res.mutants.reserve(batch.size());
  for (const auto& theta : batch) {
    bool parameter_space = false;
    res.mutants.push_back(detail::region_mutate_one(theta, model, LatentOp::jacobian,
                                                    nullptr, eps_recn, sigma_theta,
                                                    force_fair_coin, rng, parameter_space));
    res.parameter_space_count += parameter_space ? 1u : 0u;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Outer loop.

struct RunOptions {
  std::size_t checkpoint_every = 0;  // evals between curve points; 0 = every iteration
  std::size_t threads = 1;           // rollout parallelism; never affects results
};

struct RunResult {
  CoverageCurve curve;
  std::vector<double> mixing_per_loop;  // one ratio per outer loop
  Archive archive;
  std::optional<LatentModel> model;  // present for latent variants
  std::vector<TrainReport> train_reports;
  std::size_t evaluations = 0;

  explicit RunResult(GridSpec grid) : archive(std::move(grid)) {}
};

namespace detail {

inline void evaluate_batch(const EnvSpec& env, const std::vector<ParamVector>& thetas,
                           std::vector<Rollout>& out, std::size_t threads) {
  out.resize(thetas.size());
  if (threads <= 1 || thetas.size() <= 1) {
    for (std::size_t i = 0; i < thetas.size(); ++i) out[i] = evaluate(env, thetas[i]);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < thetas.size(); i = next.fetch_add(1))
      out[i] = evaluate(env, thetas[i]);
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::min(threads, thetas.size());
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

inline void check_run_inputs(const Variant& variant, const EnvSpec& env,
                             const PolicyShape& shape, const BudgetSpec& budget) {
  if (shape.input_dim != env.observation_dim || shape.output_dim != env.action_dim)
    throw ShapeMismatch("run: policy shape does not match environment");
  if (budget.bootstrap < 1 || budget.loops < 1 || budget.iters < 1 || budget.batch < 1)
    throw ConfigInvalid("run: budget fields must be >= 1");
  if (!(variant.sigma_theta > 0.0)) throw ConfigInvalid("run: sigma_theta must be > 0");
  if (variant.kind == VariantKind::mape_isolinedd &&
      (variant.sigma1 < 0.0 || variant.sigma2 < 0.0))
    throw ConfigInvalid("run: isolinedd scales must be >= 0");
  if (variant_uses_latent(variant.kind) &&
      (variant.latent_dim < 1 ||
       (variant.kind != VariantKind::poms_pca && variant.hidden_dim < 1)))
    throw ConfigInvalid("run: latent model dimensions must be >= 1");
}

}  // namespace detail

// Executes one full search run for one seed. Deterministic in (variant, env,
// shape, budget, seed): the bootstrap stream depends only on the seed, so
// variants compared under the same seed start from identical archives, and
// per-candidate mutation streams are derived from the evaluation index, so
// rollout parallelism cannot reorder randomness.
inline RunResult run(const Variant& variant, const EnvSpec& env, const PolicyShape& shape,
                     const BudgetSpec& budget, std::uint64_t seed,
                     const RunOptions& opts = {}) {
  detail::check_run_inputs(variant, env, shape, budget);

  Rng boot_rng(derive_seed(seed, hash_string("bootstrap")));
  const std::uint64_t search_seed =
      derive_seed(derive_seed(seed, hash_string("search")),
                  hash_string(variant_name(variant.kind)));
  Rng search_rng(search_seed);
  Rng model_rng(derive_seed(search_seed, hash_string("model-init")));
  const std::uint64_t mutation_base = derive_seed(search_seed, hash_string("mutation"));
  const std::uint64_t train_base = derive_seed(search_seed, hash_string("train"));

  RunResult res(env.grid);
  res.curve.seed = seed;
  res.curve.variant = variant_name(variant.kind);
  res.curve.env = env.name;

  const std::size_t P = shape.param_count();
  const bool latent = variant_uses_latent(variant.kind);
  bool model_ready = false;
  double eps_recn = 0.0;
  if (variant.kind == VariantKind::poms || variant.kind == VariantKind::poms_no_jacobian) {
    res.model = make_ae_model(
        init_ae_glorot(P, variant.hidden_dim, variant.latent_dim, model_rng));
    model_ready = true;  // usable immediately; loop 1 never consults eps_recn
  }

  std::size_t evals = 0;
  auto record_point = [&]() {
    if (!res.curve.points.empty() && res.curve.points.back().evals == evals) return;
    res.curve.points.push_back({evals, res.archive.coverage()});
  };

  // --- bootstrap: uniform draws, variant-independent stream -----------------
  {
    std::vector<ParamVector> thetas;
    thetas.reserve(budget.bootstrap);
    for (std::size_t i = 0; i < budget.bootstrap; ++i)
      thetas.push_back(init_uniform(shape, boot_rng));
    std::vector<Rollout> rollouts;
    detail::evaluate_batch(env, thetas, rollouts, opts.threads);
    for (std::size_t i = 0; i < thetas.size(); ++i) {
      if (rollouts[i].valid) res.archive.insert(thetas[i], rollouts[i].bd, evals, boot_rng);
      ++evals;
    }
  }
  record_point();

  // PCA variant: initial fit on the bootstrap collection stands in for the
  // AE's Glorot initialisation.
  auto refit_pca = [&]() {
    const auto coll = res.archive.collection();
    if (coll.size() < std::max<std::size_t>(2, variant.latent_dim)) return;
    Matrix data(coll.size(), P);
    for (std::size_t i = 0; i < coll.size(); ++i)
      std::copy(coll[i].begin(), coll[i].end(), data.row(i));
    res.model = make_pca_model(pca_fit(data, variant.latent_dim));
    model_ready = true;
    double total = 0.0;
    for (const auto& theta : coll) total += reconstruction_error(*res.model, theta);
    eps_recn = total / static_cast<double>(coll.size());
  };
  if (variant.kind == VariantKind::poms_pca) refit_pca();

  std::size_t next_mark = opts.checkpoint_every ? evals + opts.checkpoint_every : 0;

  // --- outer loops -----------------------------------------------------------
  for (std::size_t loop = 0; loop < budget.loops; ++loop) {
    const bool force_fair_coin = latent && loop == 0;
    std::size_t loop_parameter_count = 0;
    std::size_t loop_total = 0;

    for (std::size_t iter = 0; iter < budget.iters; ++iter) {
      // per-iteration latent ranges for the no-jacobian ablation
      std::optional<Matrix> range_cov;
      if (variant.kind == VariantKind::poms_no_jacobian && model_ready) {
        const auto coll = res.archive.collection();
        if (coll.size() >= 2) {
          std::vector<std::vector<double>> codes;
          codes.reserve(coll.size());
          for (const auto& theta : coll) codes.push_back(encode(*res.model, theta));
          range_cov = range_covariance(codes);
        }
      }

      // selection (uniform over occupants); plain-sampling variants skip it
      std::vector<ParamVector> parents;
      std::vector<ParamVector> partners;
      const bool plain_sampling = variant.kind == VariantKind::ps_uniform ||
                                  variant.kind == VariantKind::ps_glorot;
      if (!plain_sampling) {
        parents = res.archive.sample_batch(budget.batch, search_rng);
        if (variant.kind == VariantKind::mape_isolinedd)
          partners = res.archive.sample_batch(budget.batch, search_rng);
      }

      // mutation, one derived rng per candidate
      std::vector<ParamVector> candidates(budget.batch);
      for (std::size_t k = 0; k < budget.batch; ++k) {
        Rng cand_rng(derive_seed(mutation_base, evals + k));
        ParamVector pv;
        pv.shape = shape;
        switch (variant.kind) {
          case VariantKind::ps_uniform:
            pv = init_uniform(shape, cand_rng);
            break;
          case VariantKind::ps_glorot:
            pv = init_glorot(shape, cand_rng);
            break;
          case VariantKind::mape_iso:
            pv.values = mutate_iso(parents[k].values, variant.sigma_theta, cand_rng);
            break;
          case VariantKind::mape_isolinedd:
            pv.values = mutate_isolinedd(parents[k].values, partners[k].values,
                                         variant.sigma1, variant.sigma2, cand_rng);
            break;
          case VariantKind::poms:
          case VariantKind::poms_pca:
          case VariantKind::poms_no_jacobian: {
            const LatentOp op = variant.kind == VariantKind::poms_no_jacobian
                                    ? LatentOp::range
                                    : LatentOp::jacobian;
            bool parameter_space = true;
            if (model_ready) {
              pv.values = detail::region_mutate_one(
                  parents[k].values, *res.model, op,
                  range_cov ? &*range_cov : nullptr, eps_recn, variant.sigma_theta,
                  force_fair_coin, cand_rng, parameter_space);
            } else {
              pv.values = mutate_iso(parents[k].values, variant.sigma_theta, cand_rng);
            }
            loop_parameter_count += parameter_space ? 1u : 0u;
            break;
          }
        }
        candidates[k] = std::move(pv);
      }
      if (!latent) loop_parameter_count += budget.batch;  // all in parameter space
      loop_total += budget.batch;

      // evaluate (parallel-safe) and insert in submission order
      std::vector<Rollout> rollouts;
      detail::evaluate_batch(env, candidates, rollouts, opts.threads);
      for (std::size_t k = 0; k < budget.batch; ++k) {
        if (rollouts[k].valid)
          res.archive.insert(candidates[k], rollouts[k].bd, evals, search_rng);
        ++evals;
      }

      if (opts.checkpoint_every == 0) {
        record_point();
      } else if (evals >= next_mark) {
        record_point();
        while (next_mark <= evals) next_mark += opts.checkpoint_every;
      }
    }

    res.mixing_per_loop.push_back(static_cast<double>(loop_parameter_count) /
                                  static_cast<double>(loop_total));

    // learning phase
    if (variant.kind == VariantKind::poms || variant.kind == VariantKind::poms_no_jacobian) {
      const auto coll = res.archive.collection();
      Rng train_rng(derive_seed(train_base, loop));
      res.train_reports.push_back(train(res.model->ae, coll, train_rng, variant.train));
      eps_recn = res.train_reports.back().mean_recon_error;
    } else if (variant.kind == VariantKind::poms_pca) {
      refit_pca();
    }
  }

  record_point();
  res.evaluations = evals;
  return res;
}

}  // namespace poms
