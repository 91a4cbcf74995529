#pragma once
// Small statistics toolbox: running moments, special functions, KS tests,
// order statistics, a Fenwick tree for 2-d dominance counting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace bcrw {

class Welford {
  public:
    void add(double x) {
        ++n_;
        double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    void merge(const Welford& o) {
        if (o.n_ == 0) return;
        if (n_ == 0) { *this = o; return; }
        double d = o.mean_ - mean_;
        std::uint64_t n = n_ + o.n_;
        m2_ += o.m2_ + d * d * (static_cast<double>(n_) * static_cast<double>(o.n_)) / static_cast<double>(n);
        mean_ += d * static_cast<double>(o.n_) / static_cast<double>(n);
        n_ = n;
    }
    std::uint64_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double sd() const { return std::sqrt(variance()); }
    double se() const { return n_ > 0 ? sd() / std::sqrt(static_cast<double>(n_)) : 0.0; }

  private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0, m2_ = 0.0;
};

inline double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// scaled complementary error function e^{x^2} erfc(x), stable for large x
inline double erfcx(double x) {
    if (x < 0.0) throw std::domain_error("erfcx: negative argument unsupported");
    if (x <= 4.0) return std::exp(x * x) * std::erfc(x);
    // asymptotic series, relative error < 1e-12 for x > 4
    const double ix2 = 1.0 / (x * x);
    double s = 1.0, term = 1.0;
    for (int k = 1; k <= 8; ++k) {
        term *= -(2.0 * k - 1.0) * 0.5 * ix2;
        s += term;
    }
    return s / (x * std::sqrt(M_PI));
}

// E[e^X ; X <= 0] for X ~ N(0, v), in a form that never overflows
inline double gauss_exp_neg_mass(double v) { return 0.5 * erfcx(std::sqrt(v / 2.0)); }

// Acklam's rational approximation of the standard normal quantile (|err| < 1.2e-9)
inline double phi_inv(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("phi_inv: p outside (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > phigh) {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Kolmogorov distribution tail Q(d) = P(K > d) = 2 sum (-1)^{k-1} e^{-2k^2 d^2}
inline double kolmogorov_q(double d) {
    if (d <= 0.0) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double t = std::exp(-2.0 * k * k * d * d);
        s += (k % 2 == 1 ? t : -t);
        if (t < 1e-16) break;
    }
    return std::min(1.0, std::max(0.0, 2.0 * s));
}

// one-sample KS against a cdf; returns asymptotic p-value
template <class Cdf>
double ks_test_1s(std::vector<double> x, Cdf cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double dmax = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double f = cdf(x[i]);
        dmax = std::max(dmax, std::max(std::abs(f - static_cast<double>(i) / n),
                                       std::abs(static_cast<double>(i + 1) / n - f)));
    }
    return kolmogorov_q(dmax * (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)));
}

// two-sample KS; returns asymptotic p-value
inline double ks_test_2s(std::vector<double> x, std::vector<double> y) {
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double dmax = 0.0;
    while (i < x.size() && j < y.size()) {
        double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) ++i;
        while (j < y.size() && y[j] <= v) ++j;
        dmax = std::max(dmax, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    double ne = std::sqrt(nx * ny / (nx + ny));
    return kolmogorov_q(dmax * (ne + 0.12 + 0.11 / ne));
}

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw std::domain_error("quantile of empty sample");
    double pos = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    double w = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - w) + sorted[lo + 1] * w;
}

struct LinFit { double slope = 0.0, intercept = 0.0; };

inline LinFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw std::domain_error("fit_line: need >= 2 points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
    mx /= static_cast<double>(n); my /= static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) { sxx += (x[i] - mx) * (x[i] - mx); sxy += (x[i] - mx) * (y[i] - my); }
    LinFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

// Fenwick (BIT) over ranks in [0, n), for counting inserted items with rank <= r
class Fenwick {
  public:
    explicit Fenwick(std::size_t n) : n_(n), t_(n + 1, 0) {}
    void add(std::size_t rank) {
        for (std::size_t i = rank + 1; i <= n_; i += i & (~i + 1)) ++t_[i];
    }
    std::uint64_t count_le(std::size_t rank) const {
        std::uint64_t s = 0;
        for (std::size_t i = std::min(rank + 1, n_); i > 0; i -= i & (~i + 1)) s += t_[i];
        return s;
    }

  private:
    std::size_t n_;
    std::vector<std::uint64_t> t_;
};

} // namespace bcrw
