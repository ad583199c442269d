#ifndef DICHOGEO_NORMAL_HPP
#define DICHOGEO_NORMAL_HPP

#include <cmath>
#include <numbers>

namespace dichogeo {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

inline double log_norm_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

/// Phi'' = -x phi(x).
inline double norm_pdf_derivative(double x) { return -x * norm_pdf(x); }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// log Phi(x), accurate in both tails. Below -30 the Mills-ratio series is
/// used since erfc underflows shortly after.
double log_norm_cdf(double x);

/// phi(x) / Phi(x), the derivative of log Phi.
double inv_mills(double x);

/// Phi^{-1}(p) for p in (0, 1).
double norm_quantile(double p);

}  // namespace dichogeo

#endif  // DICHOGEO_NORMAL_HPP
