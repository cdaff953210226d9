#include "glmmd/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <random>
#include <thread>

#include "glmmd/csv.hpp"
#include "glmmd/error.hpp"
#include "glmmd/inference.hpp"

namespace glmmd {
namespace {

constexpr double kEtaGuard = -1e-8;
constexpr int kMaxRedraws = 10000;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
}

}  // namespace

SimSetting SimSetting::preset(char label) {
  SimSetting s;
  s.family = kGamma;
  s.beta_b.resize(3);
  switch (label) {
    case 'A': case 'a':
      s.label = SettingLabel::A;
      s.beta0 = -2.78;
      s.beta_b << -1.55, 0.0, 0.98;
      s.sigma2 = 0.25;
      s.phi = 0.54;
      break;
    case 'B': case 'b':
      s.label = SettingLabel::B;
      s.beta0 = -4.06;
      s.beta_b << -2.41, 0.16, -3.93;
      s.sigma2 = 0.52;
      s.phi = 1.92;
      break;
    case 'C': case 'c':
      s.label = SettingLabel::C;
      s.beta0 = -8.55;
      s.beta_b << 3.13, -7.82, -0.23;
      s.sigma2 = 1.27;
      s.phi = 0.86;
      break;
    case 'D': case 'd':
      s.label = SettingLabel::D;
      s.beta0 = -14.45;
      s.beta_b << 8.78, 0.41, -3.32;
      s.sigma2 = 1.88;
      s.phi = 2.11;
      break;
    default:
      throw PreconditionError(std::string("unknown simulation setting '") + label + "' (expected A-D)");
  }
  s.name = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(label))));
  return s;
}

Parameters SimSetting::truth() const {
  Parameters p;
  p.beta_a = Eigen::VectorXd::Constant(1, beta0);
  p.beta_b = beta_b;
  p.sigma = Eigen::MatrixXd::Constant(1, 1, sigma2);
  p.phi = phi;
  return p;
}

std::vector<double> SimSetting::true_vector() const {
  std::vector<double> v{beta0};
  v.insert(v.end(), beta_b.data(), beta_b.data() + beta_b.size());
  v.push_back(sigma2);
  v.push_back(phi);
  return v;
}

SimDataset generate_dataset(const SimSetting& s, int m, int n, std::uint64_t seed) {
  if (m < 2 || n < 1) throw PreconditionError("generate_dataset needs m >= 2 and n >= 1");
  if (!(s.sigma2 > 0.0) || !(s.phi > 0.0)) throw PreconditionError("sigma2 and phi must be positive");
  const auto db = static_cast<int>(s.beta_b.size());
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = std::sqrt(s.sigma2);
  const bool guarded = s.family != kGaussian;

  int redrawn = 0;
  std::vector<Group> groups;
  groups.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    Group g;
    g.id = std::to_string(i + 1);
    g.xa = Eigen::MatrixXd::Ones(n, 1);
    g.xb.resize(n, db);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < db; ++k) g.xb(j, k) = unif(gen);
    Eigen::VectorXd eta0 = Eigen::VectorXd::Constant(n, s.beta0);
    if (db > 0) eta0 += g.xb * s.beta_b;
    double u = sd * normal(gen);
    if (guarded) {
      int redraws = 0;
      while ((eta0.array() + u).maxCoeff() >= kEtaGuard) {
        if (++redraws > kMaxRedraws) {
          throw DomainError("group " + g.id + ": cannot draw an admissible random effect");
        }
        u = sd * normal(gen);
      }
      redrawn += redraws;
    }
    g.y.resize(n);
    for (int j = 0; j < n; ++j) g.y(j) = sample_response(s.family, eta0(j) + u, s.phi, gen);
    groups.push_back(std::move(g));
  }
  std::vector<std::string> xb_names;
  for (int k = 0; k < db; ++k) xb_names.push_back("x" + std::to_string(k + 1));
  return SimDataset{Dataset(std::move(groups), {kInterceptName}, std::move(xb_names)), s.truth(), redrawn};
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t key, std::uint64_t m, std::uint64_t rep) {
  std::uint64_t h = splitmix64(root);
  h = splitmix64(h ^ key);
  h = splitmix64(h ^ m);
  return splitmix64(h ^ rep);
}

std::uint64_t setting_key(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GLMMD_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<ReplicationFit> run_replications(const SimSetting& s, int m, int n, int rep_begin, int rep_end,
                                             std::uint64_t root_seed, const FitOptions& opts, int threads,
                                             std::vector<Eigen::MatrixXd>* lambda_at_truth) {
  if (rep_end < rep_begin || rep_begin < 0) throw PreconditionError("invalid replication range");
  const int count = rep_end - rep_begin;
  std::vector<ReplicationFit> fits(static_cast<std::size_t>(count));
  if (lambda_at_truth) lambda_at_truth->assign(static_cast<std::size_t>(count), Eigen::MatrixXd());
  const std::uint64_t key = setting_key(s.name);
  parallel_for(count, resolve_threads(threads), [&](int i) {
    const auto rep = static_cast<std::uint64_t>(rep_begin + i);
    const std::uint64_t seed = derive_seed(root_seed, key, static_cast<std::uint64_t>(m), rep);
    ReplicationFit& out = fits[static_cast<std::size_t>(i)];
    out.truth = s.truth();
    out.m = m;
    out.n = n;
    try {
      SimDataset sim = generate_dataset(s, m, n, seed);
      out.redrawn_effects = sim.redrawn_effects;
      FitOptions local = opts;
      local.seed = splitmix64(seed);
      const FitResult fit = fit_mle(sim.data, s.family, local);
      out.estimate = fit.params;
      out.ok = fit.converged;
      if (!fit.converged) out.error = "Nelder-Mead did not converge";
      if (lambda_at_truth && sim.data.dim_b() > 0) {
        (*lambda_at_truth)[static_cast<std::size_t>(i)] = estimate_lambda_betaB(sim.data, sim.truth, s.family);
      }
    } catch (const Error& e) {
      out.ok = false;
      out.error = e.what();
    }
  });
  return fits;
}

CoverageRow tally_coverage(const SimSetting& s, int m, int n, std::span<const ReplicationFit> fits, double alpha) {
  CoverageRow row;
  row.setting = s.name;
  row.m = m;
  row.n = n;
  for (const ReplicationFit& f : fits) {
    row.redrawn_effects += f.redrawn_effects;
    if (!f.ok) {
      ++row.fit_failures;
      continue;
    }
    ++row.replications;
    const Interval iv = ci_phi(f.estimate.phi, s.family, m, static_cast<double>(n), alpha);
    if (iv.lower <= s.phi && s.phi <= iv.upper) ++row.covered;
  }
  if (row.replications > 0) {
    row.coverage = static_cast<double>(row.covered) / row.replications;
    row.mc_se = std::sqrt(row.coverage * (1.0 - row.coverage) / row.replications);
  }
  return row;
}

CoverageReport run_coverage(std::span<const SimSetting> settings, std::span<const int> m_grid, int R, double alpha,
                            std::uint64_t seed, const FitOptions& opts, int threads) {
  if (R < 1) throw PreconditionError("coverage study needs at least one replication");
  for (int m : m_grid) {
    if (m < 5 || m % 5 != 0) {
      throw PreconditionError("m = " + std::to_string(m) + " is not a positive multiple of 5");
    }
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0, 1)");
  CoverageReport report;
  for (const SimSetting& s : settings) {
    for (int m : m_grid) {
      const int n = m / 5;
      const auto fits = run_replications(s, m, n, 0, R, seed, opts, threads);
      report.rows.push_back(tally_coverage(s, m, n, fits, alpha));
    }
  }
  return report;
}

void write_coverage_csv(std::ostream& out, const CoverageReport& report) {
  out << "setting,m,n,replications,covered,coverage,mc_se,fit_failures\n";
  for (const CoverageRow& r : report.rows) {
    out << r.setting << ',' << r.m << ',' << r.n << ',' << r.replications << ',' << r.covered << ','
        << format_double(r.coverage) << ',' << format_double(r.mc_se) << ',' << r.fit_failures << '\n';
  }
}

Theorem1Report theorem1_validation(const SimSetting& s, int m, int n, int R, std::uint64_t seed,
                                   const FitOptions& opts, int threads) {
  if (R < 50) throw PreconditionError("theorem1_validation needs R >= 50, got " + std::to_string(R));
  std::vector<Eigen::MatrixXd> lambdas;
  const auto fits = run_replications(s, m, n, 0, R, seed, opts, threads, &lambdas);

  const Parameters truth = s.truth();
  const int da = truth.dim_a();
  const int db = truth.dim_b();
  const int dv = da * (da + 1) / 2;
  const int dim = da + db + dv + 1;
  const double sm = std::sqrt(static_cast<double>(m));
  const double smn = std::sqrt(static_cast<double>(m) * n);

  Theorem1Report rep;
  rep.setting = s.name;
  rep.m = m;
  rep.n = n;
  rep.replications = R;
  for (int k = 0; k < da; ++k) rep.names.push_back(da == 1 ? "beta0" : "betaA" + std::to_string(k + 1));
  for (int k = 0; k < db; ++k) rep.names.push_back("betaB" + std::to_string(k + 1));
  for (int k = 0; k < dv; ++k) rep.names.push_back(da == 1 ? "sigma2" : "vechSigma" + std::to_string(k + 1));
  rep.names.push_back("phi");

  std::vector<Eigen::VectorXd> scaled;
  Eigen::MatrixXd lambda_mean = Eigen::MatrixXd::Zero(db, db);
  for (std::size_t r = 0; r < fits.size(); ++r) {
    const ReplicationFit& f = fits[r];
    if (!f.ok) continue;
    Eigen::VectorXd v(dim);
    v.head(da) = sm * (f.estimate.beta_a - truth.beta_a);
    v.segment(da, db) = smn * (f.estimate.beta_b - truth.beta_b);
    v.segment(da + db, dv) = sm * vech(f.estimate.sigma - truth.sigma);
    v(dim - 1) = smn * (f.estimate.phi - truth.phi);
    scaled.push_back(std::move(v));
    if (db > 0) lambda_mean += lambdas[r];
  }
  rep.successes = static_cast<int>(scaled.size());
  if (rep.successes < static_cast<int>(std::ceil(0.8 * R))) {
    throw ConvergenceError("only " + std::to_string(rep.successes) + " of " + std::to_string(R) +
                           " replications produced a converged fit");
  }
  const double count = rep.successes;
  if (db > 0) lambda_mean /= count;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& v : scaled) mean += v;
  mean /= count;
  rep.empirical_cov = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& v : scaled) rep.empirical_cov += (v - mean) * (v - mean).transpose();
  rep.empirical_cov /= count - 1.0;

  rep.predicted_cov = Eigen::MatrixXd::Zero(dim, dim);
  rep.predicted_cov.topLeftCorner(da, da) = truth.sigma;
  if (db > 0) rep.predicted_cov.block(da, da, db, db) = truth.phi * lambda_mean;
  Eigen::MatrixXd kron(da * da, da * da);
  for (int i = 0; i < da; ++i)
    for (int j = 0; j < da; ++j) kron.block(i * da, j * da, da, da) = truth.sigma(i, j) * truth.sigma;
  const Eigen::MatrixXd dp = duplication_pinv(da);
  rep.predicted_cov.block(da + db, da + db, dv, dv) = 2.0 * dp * kron * dp.transpose();
  rep.predicted_cov(dim - 1, dim - 1) = 1.0 / s.family.dispersion_info(truth.phi);

  rep.relative_deviation.resize(dim);
  rep.variance_se.resize(dim);
  for (int k = 0; k < dim; ++k) {
    double m4 = 0.0;
    for (const auto& v : scaled) m4 += std::pow(v(k) - mean(k), 4);
    m4 /= count;
    const double var = rep.empirical_cov(k, k);
    rep.variance_se(k) = std::sqrt(std::max(m4 - var * var, 0.0) / count);
    rep.relative_deviation(k) = var / rep.predicted_cov(k, k) - 1.0;
  }

  const int phi_idx = dim - 1;
  rep.cross_z.resize(dim - 1);
  for (int k = 0; k < phi_idx; ++k) {
    rep.cross_names.push_back("phi:" + rep.names[static_cast<std::size_t>(k)]);
    double sum = 0.0;
    double sum2 = 0.0;
    for (const auto& v : scaled) {
      const double prod = (v(phi_idx) - mean(phi_idx)) * (v(k) - mean(k));
      sum += prod;
      sum2 += prod * prod;
    }
    const double mean_prod = sum / count;
    const double sd_prod = std::sqrt(std::max(sum2 / count - mean_prod * mean_prod, 0.0));
    rep.cross_z(k) = sd_prod > 0.0 ? mean_prod / (sd_prod / std::sqrt(count)) : 0.0;
  }
  return rep;
}

}  // namespace glmmd
