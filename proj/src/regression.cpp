#include "lvpoly/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lvpoly {

std::size_t surface_terms(int degree) {
  switch (degree) {
    case 1: return 3;
    case 2: return 6;
    case 3: return 10;
    default: throw std::invalid_argument("surface degree must be 1, 2 or 3");
  }
}

void surface_basis(double p, double tau, int degree, std::span<double> out) {
  const std::size_t n = surface_terms(degree);
  const double all[10] = {1.0, p, tau, p * p, p * tau, tau * tau, p * p * p, p * p * tau, p * tau * tau, tau * tau * tau};
  std::copy(all, all + n, out.begin());
}

double r_squared(std::span<const double> y, std::span<const double> fitted) {
  if (y.size() != fitted.size() || y.empty()) throw std::invalid_argument("r_squared: size mismatch");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double sst = 0.0, ssr = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sst += (y[i] - mean) * (y[i] - mean);
    ssr += (y[i] - fitted[i]) * (y[i] - fitted[i]);
  }
  const double scale = std::max(1.0, mean * mean) * static_cast<double>(y.size());
  if (sst <= 1e-28 * scale) return ssr <= 1e-24 * scale ? 1.0 : 0.0;
  return std::clamp(1.0 - ssr / sst, 0.0, 1.0);
}

namespace {

double triangular_condition(const Eigen::MatrixXd& r) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smax = s(0), smin = s(s.size() - 1);
  return smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
}

}  // namespace

SurfaceDesign::SurfaceDesign(std::span<const double> p, std::span<const double> tau, int degree, double max_condition)
    : degree_(degree) {
  const std::size_t terms = surface_terms(degree);
  if (p.size() != tau.size()) throw std::invalid_argument("regressor size mismatch");
  if (p.size() < terms) throw IllConditionedError("fewer samples than polynomial terms", INFINITY);
  a_.resize(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(terms));
  double row[10];
  for (std::size_t i = 0; i < p.size(); ++i) {
    surface_basis(p[i], tau[i], degree, std::span<double>(row, terms));
    for (std::size_t j = 0; j < terms; ++j) a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  qr_.compute(a_);
  const Eigen::MatrixXd r = qr_.matrixQR().topRows(static_cast<Eigen::Index>(terms)).triangularView<Eigen::Upper>();
  condition_ = triangular_condition(r);
  if (!(condition_ <= max_condition))
    throw IllConditionedError("ill-conditioned surface regression (condition " + std::to_string(condition_) + ")",
                              condition_);
}

SurfaceFit SurfaceDesign::fit(std::span<const double> y) const {
  if (y.size() != rows()) throw std::invalid_argument("sample count does not match the design");
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd b = qr_.solve(yv);
  const Eigen::VectorXd fitted = a_ * b;
  SurfaceFit out;
  out.coeffs.assign(b.data(), b.data() + b.size());
  out.r2 = r_squared(y, std::span<const double>(fitted.data(), static_cast<std::size_t>(fitted.size())));
  return out;
}

namespace {

void solve_line(std::span<const double> x, std::span<const double> y, std::span<const double> w,
                double max_condition, LineFit& out) {
  const std::size_t n = x.size();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), 2);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::sqrt(w[i]);
    a(static_cast<Eigen::Index>(i), 0) = s * x[i];
    a(static_cast<Eigen::Index>(i), 1) = s;
    rhs(static_cast<Eigen::Index>(i)) = s * y[i];
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(2).triangularView<Eigen::Upper>();
  out.condition = triangular_condition(r);
  if (!(out.condition <= max_condition))
    throw IllConditionedError("ill-conditioned weighted regression (condition " + std::to_string(out.condition) + ")",
                              out.condition);
  const Eigen::Vector2d sol = qr.solve(rhs);
  out.slope = sol(0);
  out.intercept = sol(1);
}

}  // namespace

LineFit fit_weighted_line(std::span<const double> x, std::span<const double> y, std::span<const double> w,
                          double max_condition) {
  const std::size_t n = x.size();
  if (y.size() != n || w.size() != n) throw std::invalid_argument("weighted line: size mismatch");
  double first_x = NAN;
  bool distinct = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(w[i] >= 0.0)) throw std::invalid_argument("weights must be non-negative");
    if (w[i] == 0.0) continue;
    if (std::isnan(first_x)) first_x = x[i];
    else if (x[i] != first_x) distinct = true;
  }
  if (std::isnan(first_x)) throw std::invalid_argument("weighted line: no positive weight");

  LineFit out;
  if (!distinct) {
    // Limit of vanishing weights: through the weighted point, slope fitted to the rest.
    double wsum = 0.0, y0 = 0.0, sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      wsum += w[i];
      y0 += w[i] * y[i];
    }
    y0 /= wsum;
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] > 0.0) continue;
      sxy += (x[i] - first_x) * (y[i] - y0);
      sxx += (x[i] - first_x) * (x[i] - first_x);
    }
    if (sxx == 0.0) throw std::invalid_argument("degenerate regression: fewer than two distinct regressor values");
    out.slope = sxy / sxx;
    out.intercept = y0 - out.slope * first_x;
  } else {
    solve_line(x, y, w, max_condition, out);
  }

  double wsum = 0.0, ymean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    wsum += w[i];
    ymean += w[i] * y[i];
  }
  ymean /= wsum;
  double sst = 0.0, ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double res = out.slope * x[i] + out.intercept - y[i];
    sst += w[i] * (y[i] - ymean) * (y[i] - ymean);
    ssr += w[i] * res * res;
  }
  const double scale = std::max(1.0, ymean * ymean) * wsum;
  if (sst <= 1e-28 * scale) out.r2 = ssr <= 1e-24 * scale ? 1.0 : 0.0;
  else out.r2 = std::clamp(1.0 - ssr / sst, 0.0, 1.0);
  return out;
}

}  // namespace lvpoly
