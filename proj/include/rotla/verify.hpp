#pragma once

#include <string>
#include <vector>

namespace rotla::verify {

struct Check {
  std::string name;
  double tolerance = 0.0;
  double measured = 0.0;
  bool pass = false;
  std::string note;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  bool pass() const;
};

/// Rotation-transition scan vs rotated-q/k identity scan (20 seeds,
/// T <= 128, head_dim <= 64, 1e-10) and scan vs attention-matrix outputs
/// for every transition kind at the same scale.
SuiteReport equivalence_suite();

/// Direct vs recurrent feature attention (1e-8), convergence of the
/// normalized output to exact softmax attention with the D^{-1/2} error
/// ratio, and ensemble-mean unbiasedness at sigma = 1. When csv_dir is
/// non-empty, writes rff_error.csv and rff_mse.csv for plotting.
SuiteReport rff_suite(const std::string& csv_dir = "");

/// Optimal-variance results: analytic-limit grid argmin vs tan(theta/2)
/// at 1e-3, and the Monte-Carlo MSE argmin within two coarse grid steps.
SuiteReport theorem_suite();

/// Windowed-DFT leakage demo at tone 7.3 / N = 64 plus the analyzer
/// equivalence. The pinned poisson-vs-rectangular ordering claim is
/// reported as measured.
SuiteReport spectral_suite();

/// Full-model finite-difference gradient integrity (1 layer, dim 16,
/// T = 8, selective rope with phase gate + bias + weight norm) plus op
/// spot checks.
SuiteReport gradients_suite();

/// Two-reflection Householder factorization equals the plane rotation for
/// 100 random angles at 1e-12.
SuiteReport householder_suite();

/// which in {equivalence, rff, theorem, spectral, gradients, householder,
/// all}. errors: unknown suite name.
std::vector<SuiteReport> run_suites(const std::string& which, const std::string& csv_dir = "");

std::string to_json(const std::vector<SuiteReport>& reports);
std::string summary_lines(const std::vector<SuiteReport>& reports);

}  // namespace rotla::verify
