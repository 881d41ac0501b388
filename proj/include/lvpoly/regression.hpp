#pragma once

#include <Eigen/Dense>

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

namespace lvpoly {

/// Coefficients of X = b1 + b2 p + b3 tau + b4 p^2 + b5 p tau + b6 tau^2,
/// with p the generation level as a fraction of rating.
using QuadCoeffs = std::array<double, 6>;

inline QuadCoeffs quadratic_basis(double p, double tau) {
  return {1.0, p, tau, p * p, p * tau, tau * tau};
}

inline double evaluate_quadratic(const QuadCoeffs& b, double p, double tau) {
  return b[0] + b[1] * p + b[2] * tau + b[3] * p * p + b[4] * p * tau + b[5] * tau * tau;
}

inline double quadratic_d_dp(const QuadCoeffs& b, double p, double tau) {
  return b[1] + 2.0 * b[3] * p + b[4] * tau;
}

inline double quadratic_d_dtau(const QuadCoeffs& b, double p, double tau) {
  return b[2] + b[4] * p + 2.0 * b[5] * tau;
}

/// Number of terms of the full bivariate polynomial of the given degree (1..3).
std::size_t surface_terms(int degree);

/// Graded basis: 1, p, tau, p^2, p tau, tau^2, p^3, p^2 tau, p tau^2, tau^3 truncated to `degree`.
void surface_basis(double p, double tau, int degree, std::span<double> out);

class IllConditionedError : public std::runtime_error {
public:
  IllConditionedError(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

private:
  double condition_;
};

/// Coefficient of determination 1 - SSR/SST, clamped to [0, 1]. A constant
/// target reproduced exactly scores 1.
double r_squared(std::span<const double> y, std::span<const double> fitted);

struct SurfaceFit {
  std::vector<double> coeffs;
  double r2 = 0.0;
};

/// QR factorisation of a surface design matrix. The regressors depend only on the
/// setpoint grid, so one factorisation serves every variable of a sweep.
class SurfaceDesign {
public:
  SurfaceDesign(std::span<const double> p, std::span<const double> tau, int degree, double max_condition = 1e10);

  SurfaceFit fit(std::span<const double> y) const;
  int degree() const { return degree_; }
  std::size_t rows() const { return static_cast<std::size_t>(a_.rows()); }
  double condition() const { return condition_; }

private:
  int degree_;
  Eigen::MatrixXd a_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  double condition_ = 1.0;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;  // weighted
  double condition = 1.0;
};

/// Minimises sum_k w_k (slope x_k + intercept - y_k)^2 through a QR factorisation of
/// the row-weighted design. When all positive weight sits on one x value, returns the
/// limit of vanishing weights: the line through that weighted point whose slope best
/// fits the zero-weight points. Throws std::invalid_argument when every x is equal,
/// IllConditionedError above `max_condition`.
LineFit fit_weighted_line(std::span<const double> x, std::span<const double> y, std::span<const double> w,
                          double max_condition = 1e10);

}  // namespace lvpoly
