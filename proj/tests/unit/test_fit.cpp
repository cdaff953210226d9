#include <doctest.h>

#include <cmath>
#include <random>

#include "glmmd/error.hpp"
#include "glmmd/fit.hpp"
#include "glmmd/inference.hpp"
#include "glmmd/sim.hpp"
#include "support.hpp"

using namespace glmmd;
using glmmd::testing::DesignSpec;
using glmmd::testing::make_params;
using glmmd::testing::simulate_grouped;

namespace {

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

Dataset intercept_only(const std::vector<std::vector<double>>& ys) {
  std::vector<Group> groups;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    Group g;
    g.id = std::to_string(i);
    const auto n = static_cast<Eigen::Index>(ys[i].size());
    g.y = Eigen::Map<const Eigen::VectorXd>(ys[i].data(), n);
    g.xa = Eigen::MatrixXd::Ones(n, 1);
    g.xb = Eigen::MatrixXd::Zero(n, 0);
    groups.push_back(g);
  }
  return Dataset(groups);
}

FitOptions quick() {
  FitOptions o;
  o.restarts = 0;
  return o;
}

}  // namespace

TEST_CASE("gaussian starting intercept is the grand mean") {
  const Dataset ds = intercept_only({{1.0, 2.0, 4.5}, {0.5, 3.0}, {7.0}});
  const StartingValues sv = starting_values(ds, kGaussian);
  CHECK_FALSE(sv.warning.has_value());
  CHECK(sv.params.beta_a(0) == doctest::Approx(18.0 / 6.0).epsilon(1e-12));
  CHECK(sv.params.sigma(0, 0) == 0.25);
}

TEST_CASE("all-equal responses take the fallback start") {
  const Dataset ds = intercept_only({{2.0, 2.0}, {2.0, 2.0, 2.0}});
  const StartingValues sv = starting_values(ds, kGaussian);
  REQUIRE(sv.warning.has_value());
  CHECK(sv.params.beta_a(0) == 0.0);
  CHECK(sv.params.phi == 1.0);
  CHECK(sv.params.sigma(0, 0) == 0.25);
}

TEST_CASE("gamma starting values land near the truth") {
  const SimSetting s = SimSetting::preset('A');
  const std::vector<double> truth = s.true_vector();
  int close = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const Dataset ds = generate_dataset(s, 200, 40, derive_seed(77, 1, 200, static_cast<std::uint64_t>(rep))).data;
    const StartingValues sv = starting_values(ds, kGamma);
    CHECK_FALSE(sv.warning.has_value());
    bool ok = std::abs(sv.params.beta_a(0) - truth[0]) <= 0.5;
    for (int k = 0; k < 3; ++k) ok = ok && std::abs(sv.params.beta_b(k) - truth[static_cast<std::size_t>(k + 1)]) <= 0.5;
    close += ok ? 1 : 0;
  }
  CHECK(close >= 45);
}

TEST_CASE("zero gamma response is reported by row") {
  const Dataset ds = intercept_only({{1.0, 2.0}, {0.0, 3.0}});
  try {
    (void)fit_mle(ds, kGamma);
    FAIL("expected a support error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
}

TEST_CASE("pearson dispersion reductions") {
  const Dataset flat = intercept_only({{3.0, 3.0}, {3.0}});
  const Parameters at_three = make_params({3.0}, {}, scalar(1.0), 1.0);
  CHECK(pearson_dispersion(flat, at_three, kGaussian, false) == 0.0);

  const Dataset ds = intercept_only({{1.0, 2.0, 4.5}, {0.5, 3.0}, {7.0}});
  const double mean = 3.0;
  double ss = 0.0;
  for (double y : {1.0, 2.0, 4.5, 0.5, 3.0, 7.0}) ss += (y - mean) * (y - mean);
  const Parameters p = make_params({mean}, {}, scalar(1.0), 1.0);
  CHECK(pearson_dispersion(ds, p, kGaussian, false) == doctest::Approx(ss / 5.0).epsilon(1e-14));
  CHECK(pearson_dispersion(ds, p, kGaussian, false, false) == doctest::Approx(ss / 6.0).epsilon(1e-14));
}

TEST_CASE("gaussian fit recovers the truth") {
  std::mt19937_64 rng(300);
  DesignSpec spec;
  spec.m = 300;
  spec.n_min = 60;
  spec.n_max = 60;
  spec.dim_b = 2;
  const Parameters truth = make_params({1.5}, {-0.7, 2.0}, scalar(0.8), 1.3);
  const Dataset ds = simulate_grouped(spec, truth, kGaussian, rng);
  const FitResult fit = fit_mle(ds, kGaussian);
  REQUIRE(fit.converged);
  const AsymCov ac = asymptotic_covariance(ds, truth, kGaussian);
  CHECK(std::abs(fit.params.beta_a(0) - truth.beta_a(0)) <= 3.0 * std::sqrt(ac.beta_a(0, 0)));
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(fit.params.beta_b(k) - truth.beta_b(k)) <= 3.0 * std::sqrt(ac.beta_b(k, k)));
  }
  CHECK(std::abs(fit.params.sigma(0, 0) - truth.sigma(0, 0)) <= 3.0 * std::sqrt(ac.vech_sigma(0, 0)));
  CHECK(std::abs(fit.params.phi - truth.phi) <= 3.0 * std::sqrt(ac.phi));
}

TEST_CASE("gamma fit improves on its start and on the truth") {
  const SimSetting s = SimSetting::preset('A');
  const Dataset ds = generate_dataset(s, 60, 12, 2718).data;
  const FitResult fit = fit_mle(ds, kGamma);
  CHECK(fit.converged);
  CHECK(fit.loglik >= fit.start_loglik - 1e-9);
  const LikelihoodEvaluator eval(ds, kGamma);
  CHECK(fit.loglik >= eval(s.truth()) - 1e-9);
  CHECK(std::abs(eval(fit.params) - fit.loglik) <= 1e-12 * std::abs(fit.loglik));
  CHECK(fit.evaluations >= fit.iters);
}

TEST_CASE("likelihood is invariant to the optimizer encoding") {
  const SimSetting s = SimSetting::preset('B');
  const Dataset ds = generate_dataset(s, 30, 6, 5).data;
  const LikelihoodEvaluator eval(ds, kGamma);
  const Parameters p = s.truth();
  const Parameters q = from_unconstrained(to_unconstrained(p), p.dim_a(), p.dim_b());
  CHECK(std::abs(eval(p) - eval(q)) <= 1e-10);
}

TEST_CASE("fits are bit-identical across runs") {
  const SimSetting s = SimSetting::preset('A');
  const Dataset ds = generate_dataset(s, 40, 8, 99).data;
  const FitResult a = fit_mle(ds, kGamma);
  const FitResult b = fit_mle(ds, kGamma);
  CHECK(a.loglik == b.loglik);
  CHECK(a.params.beta_a == b.params.beta_a);
  CHECK(a.params.beta_b == b.params.beta_b);
  CHECK(a.params.sigma == b.params.sigma);
  CHECK(a.params.phi == b.params.phi);
  CHECK(a.evaluations == b.evaluations);
}

TEST_CASE("restarts never lose ground") {
  const SimSetting s = SimSetting::preset('C');
  const Dataset ds = generate_dataset(s, 40, 8, 12).data;
  const FitResult once = fit_mle(ds, kGamma, quick());
  FitOptions twice;
  twice.restarts = 2;
  const FitResult more = fit_mle(ds, kGamma, twice);
  CHECK(more.loglik >= once.loglik);
  CHECK(more.evaluations > once.evaluations);
}

TEST_CASE("iteration cap yields a non-converged result") {
  const Dataset ds = generate_dataset(SimSetting::preset('A'), 20, 5, 1).data;
  FitOptions o = quick();
  o.max_iters = 5;
  const FitResult fit = fit_mle(ds, kGamma, o);
  CHECK_FALSE(fit.converged);
  CHECK(fit.iters == 5);
  CHECK(std::isfinite(fit.loglik));
}

TEST_CASE("fit options are validated") {
  const Dataset ds = generate_dataset(SimSetting::preset('A'), 10, 5, 1).data;
  FitOptions o;
  o.restarts = -1;
  CHECK_THROWS_AS((void)fit_mle(ds, kGamma, o), PreconditionError);
  o = FitOptions{};
  o.quadrature.nodes_per_dim = 10;
  CHECK_THROWS_AS((void)fit_mle(ds, kGamma, o), PreconditionError);
}

TEST_CASE("inverse gaussian and random-slope fits run end to end") {
  std::mt19937_64 rng(4);
  DesignSpec spec;
  spec.m = 40;
  spec.n_min = 8;
  spec.n_max = 12;
  spec.dim_b = 1;
  const Parameters ig_truth = make_params({-1.2}, {-0.5}, scalar(0.05), 0.2);
  const Dataset ig = simulate_grouped(spec, ig_truth, kInverseGaussian, rng);
  const FitResult f1 = fit_mle(ig, kInverseGaussian, quick());
  CHECK(f1.converged);
  CHECK(f1.loglik >= LikelihoodEvaluator(ig, kInverseGaussian)(ig_truth) - 1e-9);

  spec.dim_a = 2;
  spec.m = 30;
  Eigen::Matrix2d sigma;
  sigma << 0.1, 0.01, 0.01, 0.05;
  const Parameters slope_truth = make_params({-2.5, 0.4}, {-0.3}, sigma, 0.4);
  const Dataset sl = simulate_grouped(spec, slope_truth, kGamma, rng);
  FitOptions o = quick();
  o.quadrature.nodes_per_dim = 9;
  const FitResult f2 = fit_mle(sl, kGamma, o);
  CHECK(f2.converged);
  CHECK(f2.loglik >= LikelihoodEvaluator(sl, kGamma, o.quadrature)(slope_truth) - 1e-9);
}
