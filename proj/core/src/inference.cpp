#include "glmmd/inference.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "glmmd/csv.hpp"
#include "glmmd/error.hpp"
#include "glmmd/likelihood.hpp"
#include "glmmd/normal.hpp"

namespace glmmd {
namespace {

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw PreconditionError("alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
}

double critical_value(double alpha) {
  require_alpha(alpha);
  return normal_quantile(1.0 - 0.5 * alpha);
}

Interval wald(double est, double var, double z, bool positive) {
  const double half = z * std::sqrt(std::max(var, 0.0));
  Interval iv{est - half, est + half, false};
  if (positive && iv.lower < 0.0) {
    iv.lower = 0.0;
    iv.truncated = true;
  }
  return iv;
}

}  // namespace

Eigen::MatrixXd estimate_lambda_betaB(const Dataset& ds, const Parameters& p, Family family) {
  const int da = ds.dim_a();
  const int db = ds.dim_b();
  if (db == 0) throw PreconditionError("Lambda_B is undefined without fixed-only predictors");
  const int dim = da + db;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(db, db);
  for (const Group& g : ds.groups()) {
    const PosteriorMode mode = group_posterior_mode(p, g, family);
    const Eigen::VectorXd eta = g.xa * (p.beta_a + mode.u_star) + g.xb * p.beta_b;
    Eigen::MatrixXd x(g.size(), dim);
    x << g.xa, g.xb;
    Eigen::VectorXd w(g.size());
    for (int j = 0; j < g.size(); ++j) w(j) = family.b_suite(eta(j)).b2;
    const Eigen::MatrixXd omega = x.transpose() * w.asDiagonal() * x / static_cast<double>(g.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega, Eigen::EigenvaluesOnly);
    const double max_ev = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > 1e-10 * max_ev)) {
      throw DomainError("group '" + g.id + "': weighted predictor moment matrix is singular");
    }
    const Eigen::MatrixXd inv = omega.llt().solve(Eigen::MatrixXd::Identity(dim, dim));
    acc += inv.bottomRightCorner(db, db).inverse();
  }
  acc /= static_cast<double>(ds.num_groups());
  return acc.inverse();
}

AsymCov asymptotic_covariance(const Dataset& ds, const Parameters& p, Family family) {
  p.validate();
  AsymCov cov;
  cov.m = ds.num_groups();
  cov.n = ds.mean_group_size();
  const double m = cov.m;
  const double mn = m * cov.n;
  const int da = ds.dim_a();
  cov.beta_a = p.sigma / m;
  if (ds.dim_b() > 0) {
    cov.lambda_b = estimate_lambda_betaB(ds, p, family);
    cov.beta_b = p.phi * cov.lambda_b / mn;
  } else {
    cov.lambda_b = Eigen::MatrixXd(0, 0);
    cov.beta_b = Eigen::MatrixXd(0, 0);
  }
  Eigen::MatrixXd kron(da * da, da * da);
  for (int i = 0; i < da; ++i)
    for (int j = 0; j < da; ++j) kron.block(i * da, j * da, da, da) = p.sigma(i, j) * p.sigma;
  const Eigen::MatrixXd dp = duplication_pinv(da);
  cov.vech_sigma = 2.0 * dp * kron * dp.transpose() / m;
  cov.phi = 1.0 / (family.dispersion_info(p.phi) * mn);
  return cov;
}

void attach_asymptotic_covariance(FitResult& fit, const Dataset& ds, Family family) {
  fit.asym_cov = asymptotic_covariance(ds, fit.params, family);
}

Interval ci_phi(double phi_hat, Family family, int m, double n, double alpha) {
  if (m < 1 || !(n > 0.0)) throw PreconditionError("ci_phi needs m >= 1 and n > 0");
  const double z = critical_value(alpha);
  const double var = 1.0 / (family.dispersion_info(phi_hat) * m * n);
  return wald(phi_hat, var, z, true);
}

Interval ci_phi_general(double phi_hat, std::span<const double> d2_values, double alpha) {
  if (!(phi_hat > 0.0)) throw DomainError("phi_hat must be positive");
  double sum = 0.0;
  for (double v : d2_values) sum += v;
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw DomainError("sum of dispersion curvature terms must be positive, got " + std::to_string(sum));
  }
  const double z = critical_value(alpha);
  const double half = z * phi_hat * phi_hat / std::sqrt(sum);
  Interval iv{phi_hat - half, phi_hat + half, false};
  if (iv.lower < 0.0) {
    iv.lower = 0.0;
    iv.truncated = true;
  }
  return iv;
}

const CiRow& CiTable::row(const std::string& name) const {
  for (const CiRow& r : rows)
    if (r.name == name) return r;
  throw PreconditionError("no CI row named '" + name + "'");
}

CiTable ci_all(const FitResult& fit, const Dataset& ds, Family family, double alpha, SdScaleMethod sd_method) {
  if (!fit.converged) throw ConvergenceError("confidence intervals need a converged fit");
  const double z = critical_value(alpha);
  const AsymCov cov = fit.asym_cov ? *fit.asym_cov : asymptotic_covariance(ds, fit.params, family);
  const Parameters& p = fit.params;
  const auto& an = ds.xa_names();
  const auto& bn = ds.xb_names();
  CiTable table;

  auto add_raw = [&](std::string name, double est, double var, bool positive) {
    const Interval iv = wald(est, var, z, positive);
    table.rows.push_back({std::move(name), est, iv.lower, iv.upper, RowScale::Raw, true, iv.truncated});
  };
  auto add_sd = [&](std::string name, double v, double var_v) {
    const double s = std::sqrt(v);
    Interval iv;
    if (sd_method == SdScaleMethod::Endpoint) {
      const Interval raw = wald(v, var_v, z, true);
      iv = {std::sqrt(raw.lower), std::sqrt(raw.upper), raw.truncated};
    } else {
      iv = wald(s, var_v / (4.0 * v), z, true);
    }
    table.rows.push_back({std::move(name), s, iv.lower, iv.upper, RowScale::Sd, true, iv.truncated});
  };

  for (int k = 0; k < ds.dim_a(); ++k) add_raw("beta[" + an[k] + "]", p.beta_a(k), cov.beta_a(k, k), false);
  for (int k = 0; k < ds.dim_b(); ++k) add_raw("beta[" + bn[k] + "]", p.beta_b(k), cov.beta_b(k, k), false);

  const int da = ds.dim_a();
  int idx = 0;
  for (int j = 0; j < da; ++j) {
    for (int i = j; i < da; ++i, ++idx) {
      add_raw("Sigma[" + an[i] + "," + an[j] + "]", p.sigma(i, j), cov.vech_sigma(idx, idx), i == j);
    }
  }
  idx = 0;
  for (int j = 0; j < da; ++j) {
    for (int i = j; i < da; ++i, ++idx) {
      if (i == j) add_sd("sd[" + an[i] + "]", p.sigma(i, i), cov.vech_sigma(idx, idx));
    }
  }
  for (int j = 0; j < da; ++j) {
    for (int i = j + 1; i < da; ++i) {
      const double r = p.sigma(i, j) / std::sqrt(p.sigma(i, i) * p.sigma(j, j));
      table.rows.push_back({"corr[" + an[i] + "," + an[j] + "]", r, std::nan(""), std::nan(""), RowScale::Raw,
                            false, false});
    }
  }
  add_raw("phi", p.phi, cov.phi, true);
  add_sd("sqrt(phi)", p.phi, cov.phi);
  return table;
}

void write_ci_csv(std::ostream& out, const CiTable& table) {
  out << "name,estimate,lower,upper,scale,truncated\n";
  for (const CiRow& r : table.rows) {
    std::string name = r.name;
    if (name.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : name) {
        if (c == '"') quoted += '"';
        quoted += c;
      }
      name = quoted + "\"";
    }
    out << name << ',' << format_double(r.estimate) << ',';
    if (r.has_interval) out << format_double(r.lower) << ',' << format_double(r.upper);
    else out << ',';
    out << ',' << (r.scale == RowScale::Raw ? "raw" : "sd") << ',' << (r.truncated ? 1 : 0) << '\n';
  }
}

std::string format_ci_table(const CiTable& table, double alpha) {
  std::size_t width = 9;
  for (const CiRow& r : table.rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  const int level = static_cast<int>(std::lround(100.0 * (1.0 - alpha)));
  os << std::left << std::setw(static_cast<int>(width)) << "parameter" << "  " << std::right << std::setw(12)
     << "estimate" << "   " << level << "% confidence interval\n";
  for (const CiRow& r : table.rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::right << std::setw(12)
       << std::setprecision(6) << r.estimate;
    if (r.has_interval) {
      os << "   (" << std::setprecision(6) << r.lower << ", " << r.upper << ")";
      if (r.truncated) os << "  [lower truncated at 0]";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace glmmd
