#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "glmmd/expfam.hpp"
#include "glmmd/fit.hpp"
#include "glmmd/model.hpp"

namespace glmmd {

enum class SettingLabel { A, B, C, D, Custom };

/// Random-intercept design: dA = 1 with x_A = 1, x_B ~ Uniform[0,1]^dB,
/// eta = beta0 + U_i + beta_B' x_B, U_i ~ N(0, sigma2).
struct SimSetting {
  SettingLabel label = SettingLabel::Custom;
  std::string name = "custom";
  double beta0 = 0.0;
  Eigen::VectorXd beta_b;
  double sigma2 = 1.0;
  double phi = 1.0;
  Family family = kGamma;

  /// Gamma settings A-D with true (beta0, beta_B, sigma2, phi):
  ///   A (-2.78, -1.55, 0, 0.98, 0.25, 0.54)
  ///   B (-4.06, -2.41, 0.16, -3.93, 0.52, 1.92)
  ///   C (-8.55, 3.13, -7.82, -0.23, 1.27, 0.86)
  ///   D (-14.45, 8.78, 0.41, -3.32, 1.88, 2.11)
  [[nodiscard]] static SimSetting preset(char label);
  [[nodiscard]] Parameters truth() const;
  /// (beta0, beta_B..., sigma2, phi).
  [[nodiscard]] std::vector<double> true_vector() const;
};

struct SimDataset {
  Dataset data;
  Parameters truth;
  int redrawn_effects = 0;  // group effects redrawn to keep eta admissible
};

/// m groups of n observations; deterministic in `seed`. For Gamma and
/// inverse Gaussian families a group whose linear predictors reach
/// -1e-8 or above has its U_i redrawn (counted in redrawn_effects).
[[nodiscard]] SimDataset generate_dataset(const SimSetting& s, int m, int n, std::uint64_t seed);

/// Counter-based stream split: a well-mixed 64-bit seed for replication
/// `rep` of cell (`key`, `m`) under `root`.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t root, std::uint64_t key, std::uint64_t m, std::uint64_t rep);
/// Stable 64-bit key for a setting name.
[[nodiscard]] std::uint64_t setting_key(const std::string& name);

/// Worker count: `requested` if positive, else $GLMMD_THREADS, else the
/// hardware concurrency.
[[nodiscard]] int resolve_threads(int requested);

struct ReplicationFit {
  bool ok = false;
  std::string error;
  Parameters estimate;
  Parameters truth;
  int m = 0;
  double n = 0.0;
  int redrawn_effects = 0;
};

/// Generates and fits replications [rep_begin, rep_end) of cell (s, m, n),
/// in parallel over `threads` workers. Replication r uses
/// derive_seed(root_seed, setting_key(s.name), m, r) for data and restarts,
/// so results do not depend on scheduling. Failed or non-converged fits are
/// reported with ok = false. When `lambda_at_truth` is non-null it receives
/// estimate_lambda_betaB at the true parameters for each replication's data.
[[nodiscard]] std::vector<ReplicationFit> run_replications(const SimSetting& s, int m, int n, int rep_begin,
                                                           int rep_end, std::uint64_t root_seed,
                                                           const FitOptions& opts, int threads,
                                                           std::vector<Eigen::MatrixXd>* lambda_at_truth = nullptr);

struct CoverageRow {
  std::string setting;
  int m = 0;
  int n = 0;
  int replications = 0;  // successful fits; the coverage denominator
  int covered = 0;
  double coverage = 0.0;
  double mc_se = 0.0;
  int fit_failures = 0;
  int redrawn_effects = 0;
};

struct CoverageReport {
  std::vector<CoverageRow> rows;
};

/// Coverage tally for already-fitted replications.
[[nodiscard]] CoverageRow tally_coverage(const SimSetting& s, int m, int n, std::span<const ReplicationFit> fits,
                                         double alpha);

/// For each (setting, m): R replications with n = m/5 of
/// generate -> fit_mle -> ci_phi, counting intervals that contain phi.
/// Throws PreconditionError when R < 1 or some m is not a positive
/// multiple of 5.
[[nodiscard]] CoverageReport run_coverage(std::span<const SimSetting> settings, std::span<const int> m_grid, int R,
                                          double alpha, std::uint64_t seed, const FitOptions& opts, int threads = 0);

/// CSV columns: setting,m,n,replications,covered,coverage,mc_se,fit_failures.
void write_coverage_csv(std::ostream& out, const CoverageReport& report);

struct Theorem1Report {
  std::string setting;
  int m = 0;
  int n = 0;
  int replications = 0;
  int successes = 0;
  /// Coordinates of the scaled error vector
  ///   (sqrt(m)(bA - bA0), sqrt(mn)(bB - bB0), sqrt(m) vech(S - S0), sqrt(mn)(phi - phi0)).
  std::vector<std::string> names;
  Eigen::MatrixXd empirical_cov;
  Eigen::MatrixXd predicted_cov;      // block-diagonal large-sample prediction
  Eigen::VectorXd relative_deviation; // empirical / predicted variance - 1
  Eigen::VectorXd variance_se;        // Monte Carlo SE of each empirical variance
  std::vector<std::string> cross_names;
  Eigen::VectorXd cross_z;            // phi-row covariances divided by their MC SE
};

/// Fits R replications at (m, n) and compares the empirical covariance of
/// the scaled estimator with the large-sample blocks. Throws
/// PreconditionError for R < 50 and ConvergenceError when fewer than
/// 0.8 R fits succeed.
[[nodiscard]] Theorem1Report theorem1_validation(const SimSetting& s, int m, int n, int R, std::uint64_t seed,
                                                 const FitOptions& opts, int threads = 0);

}  // namespace glmmd
