#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "poms/envs.hpp"
#include "poms/search.hpp"

using namespace poms;

namespace {

// Exact linear model: encode/decode are the identity on R^p, so latent-space
// arithmetic can be compared bit for bit against parameter-space arithmetic.
LatentModel identity_model(std::size_t p) {
  PcaResult pca;
  pca.mean.assign(p, 0.0);
  pca.components = Matrix::identity(p);
  pca.explained_variance.assign(p, 1.0);
  return make_pca_model(pca);
}

struct Moments {
  std::vector<double> mean, var;
  double cov01 = 0.0;  // covariance of the first two coordinates
};

template <typename Draw>
Moments collect_moments(std::size_t n, std::size_t dim, Draw&& draw) {
  Moments m;
  m.mean.assign(dim, 0.0);
  m.var.assign(dim, 0.0);
  std::vector<std::vector<double>> samples;
  samples.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    samples.push_back(draw());
    for (std::size_t d = 0; d < dim; ++d) m.mean[d] += samples.back()[d];
  }
  for (auto& v : m.mean) v /= static_cast<double>(n);
  for (const auto& s : samples) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double c = s[d] - m.mean[d];
      m.var[d] += c * c;
    }
    m.cov01 += (s[0] - m.mean[0]) * (s[1] - m.mean[1]);
  }
  for (auto& v : m.var) v /= static_cast<double>(n - 1);
  m.cov01 /= static_cast<double>(n - 1);
  return m;
}

PolicyShape probe_shape() {
  PolicyShape s;
  s.input_dim = 2;
  s.output_dim = 1;
  return s;
}

Variant make_variant(VariantKind kind) {
  Variant v;
  v.kind = kind;
  v.hidden_dim = 8;
  v.latent_dim = 2;
  v.train.learning_rate = 1e-3;
  v.train.max_epochs = 60;
  v.train.window = 20;
  v.train.batch_size = 32;
  return v;
}

}  // namespace

TEST_CASE("mutate_iso adds isotropic noise with variance sigma_theta") {
  const std::vector<double> theta{1.0, -2.0};
  const double sigma_theta = 0.04;
  Rng rng(101);
  const auto m = collect_moments(
      20000, 2, [&]() { return mutate_iso(theta, sigma_theta, rng); });
  const double se_mean = std::sqrt(sigma_theta / 20000.0);
  CHECK_THAT(m.mean[0], Catch::Matchers::WithinAbs(1.0, 4.0 * se_mean));
  CHECK_THAT(m.mean[1], Catch::Matchers::WithinAbs(-2.0, 4.0 * se_mean));
  CHECK_THAT(m.var[0], Catch::Matchers::WithinRel(sigma_theta, 0.05));
  CHECK_THAT(m.var[1], Catch::Matchers::WithinRel(sigma_theta, 0.05));
  CHECK_THAT(m.cov01, Catch::Matchers::WithinAbs(0.0, 4.0 * sigma_theta / std::sqrt(20000.0)));
}

TEST_CASE("mutate_isolinedd has the iso-plus-line covariance structure") {
  const std::vector<double> ti{0.0, 0.0}, tj{2.0, -1.0};
  const double s1 = 0.1, s2 = 0.3;
  Rng rng(202);
  const auto m = collect_moments(
      40000, 2, [&]() { return mutate_isolinedd(ti, tj, s1, s2, rng); });
  // Var_k = s1^2 + s2^2 (tj_k - ti_k)^2; Cov_01 = s2^2 (tj_0)(tj_1)
  const double v0 = s1 * s1 + s2 * s2 * 4.0;
  const double v1 = s1 * s1 + s2 * s2 * 1.0;
  CHECK_THAT(m.mean[0], Catch::Matchers::WithinAbs(0.0, 4.0 * std::sqrt(v0 / 40000.0)));
  CHECK_THAT(m.mean[1], Catch::Matchers::WithinAbs(0.0, 4.0 * std::sqrt(v1 / 40000.0)));
  CHECK_THAT(m.var[0], Catch::Matchers::WithinRel(v0, 0.05));
  CHECK_THAT(m.var[1], Catch::Matchers::WithinRel(v1, 0.05));
  CHECK_THAT(m.cov01, Catch::Matchers::WithinRel(s2 * s2 * 2.0 * -1.0, 0.10));
  CHECK_THROWS_AS(mutate_isolinedd(ti, std::vector<double>{1.0}, s1, s2, rng),
                  DimensionMismatch);
}

TEST_CASE("isolinedd with zero directional scale matches the iso operator in law") {
  const std::vector<double> ti{0.5, -0.5}, tj{10.0, 20.0};
  const double s1 = 0.2;  // std, equivalent to sigma_theta = 0.04
  Rng ra(303), rb(304);
  const auto ml = collect_moments(
      30000, 2, [&]() { return mutate_isolinedd(ti, tj, s1, 0.0, ra); });
  const auto mi = collect_moments(
      30000, 2, [&]() { return mutate_iso(ti, s1 * s1, rb); });
  for (std::size_t d = 0; d < 2; ++d) {
    CHECK_THAT(ml.var[d], Catch::Matchers::WithinRel(s1 * s1, 0.05));
    CHECK_THAT(ml.var[d] / mi.var[d], Catch::Matchers::WithinAbs(1.0, 0.05));
  }
}

TEST_CASE("latent mutation through an identity model is bitwise the iso operator") {
  const auto model = identity_model(4);
  const std::vector<double> theta{0.3, -1.7, 0.002, 5.5};
  const double sigma_theta = 0.01;
  for (std::uint64_t seed : {1ull, 7ull, 1234567ull}) {
    Rng ra(seed), rb(seed);
    const auto via_latent = mutate_latent(theta, model, sigma_theta, ra);
    const auto via_iso = mutate_iso(theta, sigma_theta, rb);
    CHECK(via_latent == via_iso);  // bit-for-bit
  }
}

TEST_CASE("region search with a perfect model stays in latent space and is exact") {
  const auto model = identity_model(3);
  std::vector<std::vector<double>> batch;
  Rng gen(9);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> theta(3);
    for (auto& v : theta) v = gen.uniform(-2.0, 2.0);
    batch.push_back(theta);
  }
  Rng ra(42), rb(42);
  const auto res = region_based_search(batch, model, 1e-9, 0.02, ra);
  CHECK(res.parameter_space_count == 0);
  CHECK(res.mixing_ratio() == 0.0);
  REQUIRE(res.mutants.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    CHECK(res.mutants[i] == mutate_iso(batch[i], 0.02, rb));
}

TEST_CASE("region search falls back to parameter space when reconstruction is poor") {
  // rank-1 model on R^2 reconstructs off-axis points badly
  PcaResult pca;
  pca.mean = {0.0, 0.0};
  pca.components = Matrix(2, 1);
  pca.components(0, 0) = 1.0;  // spans the x axis only
  pca.explained_variance = {1.0};
  const auto model = make_pca_model(pca);
  const std::vector<std::vector<double>> batch{{0.5, 3.0}, {-1.0, -2.0}};  // y >> recn gate
  Rng rng(5);
  const auto res = region_based_search(batch, model, 1e-6, 0.01, rng);
  CHECK(res.parameter_space_count == 2);
  CHECK(res.mixing_ratio() == 1.0);
}

TEST_CASE("forcing the fair coin splits the batch roughly in half") {
  const auto model = identity_model(2);
  std::vector<std::vector<double>> batch(4000, std::vector<double>{0.1, 0.2});
  Rng rng(77);
  const auto res = region_based_search(batch, model, 0.0, 0.01, rng, true);
  // eps_recn = 0 would force parameter space for every candidate if gated;
  // the coin must override the gate: binomial(4000, 1/2), 4-sigma band
  const double dev = std::abs(static_cast<double>(res.parameter_space_count) - 2000.0);
  CHECK(dev < 4.0 * std::sqrt(4000.0 * 0.25));
  CHECK(res.mixing_ratio() > 0.4);
  CHECK(res.mixing_ratio() < 0.6);
}

TEST_CASE("the range operator needs range statistics and survives bad factorizations") {
  const auto model = identity_model(2);
  const std::vector<double> theta{0.4, -0.6};
  bool parameter_space = false;
  Rng rng(11);

  // no range covariance available: parameter branch even though the gate passes
  auto out = detail::region_mutate_one(theta, model, LatentOp::range, nullptr, 1e9, 0.01,
                                       false, rng, parameter_space);
  CHECK(parameter_space);

  // a non-factorizable covariance falls back instead of throwing
  Matrix bad(2, 2);
  bad(0, 0) = -1.0;
  bad(1, 1) = -1.0;
  out = detail::region_mutate_one(theta, model, LatentOp::range, &bad, 1e9, 0.01, false,
                                  rng, parameter_space);
  CHECK(parameter_space);
  CHECK(out.size() == 2);
}

TEST_CASE("degenerate latent ranges still factor via the jitter ladder") {
  const auto model = identity_model(2);
  const std::vector<double> theta{0.25, 0.75};
  // identical codes: spread is exactly zero in every coordinate
  const std::vector<std::vector<double>> codes{{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
  const Matrix cov = range_covariance(codes);
  Rng rng(13);
  const auto out = mutate_latent_range(theta, model, cov, rng);
  REQUIRE(out.size() == 2);
  // the jitter floor is 1e-9, so the step is at most ~1e-4 per coordinate
  CHECK_THAT(out[0], Catch::Matchers::WithinAbs(theta[0], 1e-3));
  CHECK_THAT(out[1], Catch::Matchers::WithinAbs(theta[1], 1e-3));
}

TEST_CASE("run accounts for every evaluation and records a monotone curve") {
  BudgetSpec budget{40, 2, 3, 10};
  CHECK(budget.total() == 100);
  const auto res = run(make_variant(VariantKind::mape_iso), make_probe_bd(), probe_shape(),
                       budget, 4711);
  CHECK(res.evaluations == 100);
  REQUIRE(res.curve.points.size() == 7);  // bootstrap + one per iteration
  CHECK(res.curve.points.front().evals == 40);
  CHECK(res.curve.points.back().evals == 100);
  double last = 0.0;
  std::size_t last_evals = 0;
  for (const auto& pt : res.curve.points) {
    CHECK(pt.evals > last_evals);
    CHECK(pt.coverage >= last);
    last = pt.coverage;
    last_evals = pt.evals;
  }
  CHECK(res.curve.points.back().coverage == res.archive.coverage());
  // non-latent variants mutate purely in parameter space
  REQUIRE(res.mixing_per_loop.size() == 2);
  CHECK(res.mixing_per_loop[0] == 1.0);
  CHECK(res.mixing_per_loop[1] == 1.0);
  CHECK_FALSE(res.model.has_value());
  CHECK(res.train_reports.empty());
}

TEST_CASE("checkpoint spacing thins the curve without moving its anchors") {
  BudgetSpec budget{40, 2, 3, 10};
  RunOptions opts;
  opts.checkpoint_every = 25;
  const auto res = run(make_variant(VariantKind::mape_iso), make_probe_bd(), probe_shape(),
                       budget, 4711, opts);
  std::vector<std::size_t> evals;
  for (const auto& pt : res.curve.points) evals.push_back(pt.evals);
  CHECK(evals == std::vector<std::size_t>{40, 70, 90, 100});
}

TEST_CASE("runs are deterministic and thread-count invariant") {
  BudgetSpec budget{30, 1, 4, 8};
  const auto v = make_variant(VariantKind::mape_iso);
  const auto env = make_probe_bd();
  RunOptions serial, parallel;
  parallel.threads = 3;
  const auto a = run(v, env, probe_shape(), budget, 99, serial);
  const auto b = run(v, env, probe_shape(), budget, 99, serial);
  const auto c = run(v, env, probe_shape(), budget, 99, parallel);
  REQUIRE(a.curve.points.size() == b.curve.points.size());
  REQUIRE(a.curve.points.size() == c.curve.points.size());
  for (std::size_t i = 0; i < a.curve.points.size(); ++i) {
    CHECK(a.curve.points[i].evals == b.curve.points[i].evals);
    CHECK(a.curve.points[i].coverage == b.curve.points[i].coverage);
    CHECK(a.curve.points[i].coverage == c.curve.points[i].coverage);
  }
  CHECK(a.archive.collection() == b.archive.collection());
  CHECK(a.archive.collection() == c.archive.collection());

  const auto d = run(v, env, probe_shape(), budget, 100, serial);
  CHECK(a.archive.collection() != d.archive.collection());
}

TEST_CASE("the bootstrap stream is shared across variants under one seed") {
  BudgetSpec budget{50, 1, 1, 5};
  const auto env = make_probe_bd();
  const auto iso = run(make_variant(VariantKind::mape_iso), env, probe_shape(), budget, 7);
  const auto uni = run(make_variant(VariantKind::ps_uniform), env, probe_shape(), budget, 7);
  const auto pca = run(make_variant(VariantKind::poms_pca), env, probe_shape(), budget, 7);
  CHECK(iso.curve.points.front().evals == 50);
  CHECK(iso.curve.points.front().coverage == uni.curve.points.front().coverage);
  CHECK(iso.curve.points.front().coverage == pca.curve.points.front().coverage);
}

TEST_CASE("a longer budget extends a shorter run without rewriting its prefix") {
  const auto env = make_probe_bd();
  const auto v = make_variant(VariantKind::mape_iso);
  BudgetSpec small{30, 1, 2, 8};
  BudgetSpec large{30, 1, 5, 8};
  const auto a = run(v, env, probe_shape(), small, 55);
  const auto b = run(v, env, probe_shape(), large, 55);
  REQUIRE(b.curve.points.size() >= a.curve.points.size());
  for (std::size_t i = 0; i < a.curve.points.size(); ++i) {
    CHECK(a.curve.points[i].evals == b.curve.points[i].evals);
    CHECK(a.curve.points[i].coverage == b.curve.points[i].coverage);
  }
}

TEST_CASE("latent variants flip a fair coin throughout the first loop") {
  BudgetSpec budget{60, 1, 5, 40};  // 200 region decisions in loop one
  const auto res = run(make_variant(VariantKind::poms), make_probe_bd(), probe_shape(),
                       budget, 31);
  REQUIRE(res.mixing_per_loop.size() == 1);
  // binomial(200, 1/2): 3.5-sigma band around 0.5 is +-0.124
  CHECK(res.mixing_per_loop[0] > 0.5 - 0.124);
  CHECK(res.mixing_per_loop[0] < 0.5 + 0.124);
  REQUIRE(res.model.has_value());
  CHECK(res.model->kind == LatentKind::nonlinear_ae);
  CHECK(res.train_reports.size() == 1);
}

TEST_CASE("every mixing ratio lies in the unit interval") {
  BudgetSpec budget{40, 3, 2, 10};
  for (VariantKind kind : {VariantKind::poms, VariantKind::poms_pca,
                           VariantKind::poms_no_jacobian, VariantKind::mape_isolinedd}) {
    const auto res = run(make_variant(kind), make_probe_bd(), probe_shape(), budget, 19);
    REQUIRE(res.mixing_per_loop.size() == 3);
    for (double r : res.mixing_per_loop) {
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
    }
    if (variant_uses_latent(kind)) {
      REQUIRE(res.model.has_value());
      CHECK(res.model->kind == (kind == VariantKind::poms_pca ? LatentKind::linear_pca
                                                              : LatentKind::nonlinear_ae));
    }
  }
}

TEST_CASE("plain uniform sampling matches the analytic occupancy oracle") {
  // Behaviour of a 2->1 affine policy on the probe environment: the
  // descriptor is (clip(w0+b), clip(w1+b)) with w0, w1, b ~ U(-1,1). Estimate
  // per-cell hit probabilities with independent arithmetic, then predict
  // expected coverage after N independent draws.
  const std::size_t bins = 20;
  std::vector<double> p_cell(bins * bins, 0.0);
  Rng mc(2718);
  const std::size_t mc_draws = 2000000;
  for (std::size_t t = 0; t < mc_draws; ++t) {
    const double w0 = mc.uniform(-1.0, 1.0);
    const double w1 = mc.uniform(-1.0, 1.0);
    const double b = mc.uniform(-1.0, 1.0);
    auto cell_of = [bins](double raw) {
      const double x = std::clamp(raw, -1.0, 1.0);
      const auto c = static_cast<long long>(std::floor((x + 1.0) / 2.0 * bins));
      return static_cast<std::size_t>(std::clamp(c, 0ll, static_cast<long long>(bins) - 1));
    };
    p_cell[cell_of(w0 + b) * bins + cell_of(w1 + b)] += 1.0;
  }
  for (auto& p : p_cell) p /= static_cast<double>(mc_draws);

  BudgetSpec budget{100, 1, 10, 40};  // 500 draws total
  double expected = 0.0;
  for (double p : p_cell) expected += 1.0 - std::pow(1.0 - p, static_cast<double>(budget.total()));
  expected /= static_cast<double>(bins * bins);

  double mean_cov = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    mean_cov += run(make_variant(VariantKind::ps_uniform), make_probe_bd(), probe_shape(),
                    budget, seed)
                    .archive.coverage();
  mean_cov /= 5.0;
  CHECK_THAT(mean_cov, Catch::Matchers::WithinAbs(expected, 0.025));
}

TEST_CASE("run validates its configuration") {
  const auto env = make_probe_bd();
  BudgetSpec budget{10, 1, 1, 5};
  PolicyShape wrong;
  wrong.input_dim = 3;
  wrong.output_dim = 1;
  CHECK_THROWS_AS(run(make_variant(VariantKind::mape_iso), env, wrong, budget, 1),
                  ShapeMismatch);
  BudgetSpec empty{0, 1, 1, 5};
  CHECK_THROWS_AS(run(make_variant(VariantKind::mape_iso), env, probe_shape(), empty, 1),
                  ConfigInvalid);
  auto v = make_variant(VariantKind::mape_iso);
  v.sigma_theta = 0.0;
  CHECK_THROWS_AS(run(v, env, probe_shape(), budget, 1), ConfigInvalid);
  auto latent = make_variant(VariantKind::poms);
  latent.latent_dim = 0;
  CHECK_THROWS_AS(run(latent, env, probe_shape(), budget, 1), ConfigInvalid);
}

TEST_CASE("variant names round-trip") {
  for (VariantKind k : {VariantKind::poms, VariantKind::poms_pca,
                        VariantKind::poms_no_jacobian, VariantKind::mape_iso,
                        VariantKind::mape_isolinedd, VariantKind::ps_uniform,
                        VariantKind::ps_glorot})
    CHECK(variant_from_name(variant_name(k)) == k);
  CHECK_THROWS_AS(variant_from_name("cma-es"), ConfigInvalid);
}
