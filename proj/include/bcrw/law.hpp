#pragma once
// Offspring/displacement laws for the branching environment, boundary-case
// calibration (psi(1) = psi'(1) = 0), and the tilted one-step law of the
// associated centered walk S.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rng.hpp"
#include "stats.hpp"

namespace bcrw {

struct GaussianBinary {
    double mu = 0.0;
    double s2 = 1.0; // displacement variance
};

struct TwoPoint {
    int n_children = 2;
    double p = 0.5; // weight of d_minus
    double d_minus = -1.0;
    double d_plus = 1.0;
};

struct TabAtom {
    double prob = 0.0;
    std::vector<double> disp; // whole-litter displacements; may be empty (extinction)
};

struct Tabulated {
    std::vector<TabAtom> atoms;
};

using Family = std::variant<GaussianBinary, TwoPoint, Tabulated>;

struct OffspringLaw {
    Family family;
    double theta = 0.5;       // exponential-moment margin
    double sigma2 = 0.0;      // E[sum V^2 e^{-V}], set by calibration
    bool calibrated = false;
};

namespace detail {

// log E[ sum_children e^{-s A} ] and its first two s-derivatives
inline void psi_raw(const Family& fam, double s, double& v0, double& v1, double& v2) {
    if (const auto* g = std::get_if<GaussianBinary>(&fam)) {
        v0 = std::log(2.0) - s * g->mu + s * s * g->s2 / 2.0;
        v1 = -g->mu + s * g->s2;
        v2 = g->s2;
        return;
    }
    if (const auto* t = std::get_if<TwoPoint>(&fam)) {
        double em = t->p * std::exp(-s * t->d_minus);
        double ep = (1.0 - t->p) * std::exp(-s * t->d_plus);
        double z = em + ep;
        double z1 = -(t->d_minus * em + t->d_plus * ep);
        double z2 = t->d_minus * t->d_minus * em + t->d_plus * t->d_plus * ep;
        v0 = std::log(static_cast<double>(t->n_children)) + std::log(z);
        v1 = z1 / z;
        v2 = z2 / z - v1 * v1;
        return;
    }
    const auto& tab = std::get<Tabulated>(fam);
    double z = 0.0, z1 = 0.0, z2 = 0.0;
    for (const auto& a : tab.atoms) {
        for (double d : a.disp) {
            double w = a.prob * std::exp(-s * d);
            z += w;
            z1 -= d * w;
            z2 += d * d * w;
        }
    }
    if (z <= 0.0) throw std::domain_error("psi: empty or null tabulated law");
    v0 = std::log(z);
    v1 = z1 / z;
    v2 = z2 / z - v1 * v1;
}

} // namespace detail

inline void check_s_range(const OffspringLaw& law, double s) {
    if (s < -1.0 - 1e-12 || s > 1.0 + law.theta + 1e-12)
        throw std::domain_error("psi: s outside [-1, 1+theta]");
}

inline double psi(const OffspringLaw& law, double s) {
    check_s_range(law, s);
    double v0, v1, v2;
    detail::psi_raw(law.family, s, v0, v1, v2);
    return v0;
}

inline double psi_prime(const OffspringLaw& law, double s) {
    check_s_range(law, s);
    double v0, v1, v2;
    detail::psi_raw(law.family, s, v0, v1, v2);
    return v1;
}

inline double psi_second(const OffspringLaw& law, double s) {
    check_s_range(law, s);
    double v0, v1, v2;
    detail::psi_raw(law.family, s, v0, v1, v2);
    return v2;
}

inline double mean_offspring_count(const OffspringLaw& law) {
    if (const auto* g = std::get_if<GaussianBinary>(&law.family)) { (void)g; return 2.0; }
    if (const auto* t = std::get_if<TwoPoint>(&law.family)) return static_cast<double>(t->n_children);
    const auto& tab = std::get<Tabulated>(law.family);
    double m = 0.0;
    for (const auto& a : tab.atoms) m += a.prob * static_cast<double>(a.disp.size());
    return m;
}

struct CalibrationError : std::runtime_error {
    double residual;
    CalibrationError(const std::string& msg, double res) : std::runtime_error(msg), residual(res) {}
};

// Newton on (psi(1), psi'(1)) over the family's two free parameters.
// gaussian-binary solves linearly; two-point uses the analytic Jacobian;
// tabulated calibrates an affine map d -> scale*d + shift with finite differences.
inline OffspringLaw calibrate_boundary(OffspringLaw law) {
    constexpr double TOL = 1e-12;
    constexpr int MAX_IT = 100;

    auto finish = [&](OffspringLaw l) {
        double v0, v1, v2;
        detail::psi_raw(l.family, 1.0, v0, v1, v2);
        double res = std::max(std::abs(v0), std::abs(v1));
        if (!(res < 1e-10))
            throw CalibrationError("calibration did not reach |psi(1)|,|psi'(1)| <= 1e-10", res);
        l.sigma2 = v2; // sigma^2 = psi''(1) at the boundary point
        l.calibrated = true;
        // hypotheses: finite exponential moments at -1 and 1+theta
        double a0, a1, a2;
        detail::psi_raw(l.family, -1.0, a0, a1, a2);
        if (!std::isfinite(a0)) throw CalibrationError("psi(-1) not finite", a0);
        detail::psi_raw(l.family, 1.0 + l.theta, a0, a1, a2);
        if (!std::isfinite(a0)) throw CalibrationError("psi(1+theta) not finite", a0);
        if (!(mean_offspring_count(l) > 1.0))
            throw CalibrationError("mean offspring count must exceed 1", mean_offspring_count(l));
        return l;
    };

    if (auto* g = std::get_if<GaussianBinary>(&law.family)) {
        // psi(1) = ln2 - mu + s2/2, psi'(1) = -mu + s2  =>  mu = s2 = 2 ln 2
        g->mu = 2.0 * std::log(2.0);
        g->s2 = 2.0 * std::log(2.0);
        return finish(law);
    }

    if (auto* t = std::get_if<TwoPoint>(&law.family)) {
        double dm = t->d_minus, dp = t->d_plus;
        double res = 0.0;
        for (int it = 0; it < MAX_IT; ++it) {
            TwoPoint cur = *t; cur.d_minus = dm; cur.d_plus = dp;
            double f0, f1, f2;
            detail::psi_raw(Family{cur}, 1.0, f0, f1, f2);
            res = std::max(std::abs(f0), std::abs(f1));
            if (res < TOL) break;
            // partials at s=1
            double em = cur.p * std::exp(-dm), ep = (1.0 - cur.p) * std::exp(-dp);
            double z = em + ep, num = dm * em + dp * ep;
            double d_psi_dm = -em / z, d_psi_dp = -ep / z;
            double dg_dm = -((em - dm * em) / z + num * em / (z * z));
            double dg_dp = -((ep - dp * ep) / z + num * ep / (z * z));
            // solve 2x2: [dpsi; dg] * delta = -F, g = psi'(1) = -num/z
            double det = d_psi_dm * dg_dp - d_psi_dp * dg_dm;
            if (std::abs(det) < 1e-300) throw CalibrationError("singular Jacobian in two-point calibration", res);
            double g1 = -num / z;
            double ddm = (-f0 * dg_dp + g1 * d_psi_dp) / det;
            double ddp = (-d_psi_dm * g1 + dg_dm * f0) / det;
            dm += ddm; dp += ddp;
        }
        t->d_minus = dm; t->d_plus = dp;
        return finish(law);
    }

    // tabulated: affine reparametrization, finite-difference Jacobian
    auto& tab = std::get<Tabulated>(law.family);
    const Tabulated base = tab;
    auto apply = [&](double shift, double scale) {
        Tabulated out = base;
        for (auto& a : out.atoms)
            for (auto& d : a.disp) d = scale * d + shift;
        return out;
    };
    auto eval = [&](double shift, double scale, double& f0, double& f1) {
        double v2;
        detail::psi_raw(Family{apply(shift, scale)}, 1.0, f0, f1, v2);
    };
    double shift = 0.0, scale = 1.0, res = 0.0;
    const double h = 1e-6;
    for (int it = 0; it < MAX_IT; ++it) {
        double f0, f1;
        eval(shift, scale, f0, f1);
        res = std::max(std::abs(f0), std::abs(f1));
        if (res < TOL) break;
        double a0, a1, b0, b1;
        eval(shift + h, scale, a0, a1);
        eval(shift, scale + h, b0, b1);
        double j00 = (a0 - f0) / h, j01 = (b0 - f0) / h;
        double j10 = (a1 - f1) / h, j11 = (b1 - f1) / h;
        double det = j00 * j11 - j01 * j10;
        if (std::abs(det) < 1e-300) throw CalibrationError("singular Jacobian in tabulated calibration", res);
        shift -= (f0 * j11 - f1 * j01) / det;
        scale -= (j00 * f1 - j10 * f0) / det;
    }
    tab = apply(shift, scale);
    return finish(law);
}

inline std::vector<double> sample_offspring(const OffspringLaw& law, Rng& rng) {
    if (const auto* g = std::get_if<GaussianBinary>(&law.family)) {
        double sd = std::sqrt(g->s2);
        return {rng.normal(g->mu, sd), rng.normal(g->mu, sd)};
    }
    if (const auto* t = std::get_if<TwoPoint>(&law.family)) {
        std::vector<double> out(static_cast<std::size_t>(t->n_children));
        for (auto& d : out) d = rng.u01() < t->p ? t->d_minus : t->d_plus;
        return out;
    }
    const auto& tab = std::get<Tabulated>(law.family);
    double u = rng.u01(), acc = 0.0;
    for (const auto& a : tab.atoms) {
        acc += a.prob;
        if (u <= acc) return a.disp;
    }
    return tab.atoms.back().disp;
}

// One-step law of the many-to-one walk: P(S1 in dx) = E[sum e^{-V(z)} 1{V(z) in dx}].
// Gaussian family gives N(mu - s2, s2); discrete families give finite supports.
struct StepLaw {
    bool gaussian = false;
    double g_mean = 0.0, g_var = 1.0;         // gaussian branch
    std::vector<double> support;              // discrete branch
    std::vector<double> prob;

    double sample(Rng& rng) const {
        if (gaussian) return rng.normal(g_mean, std::sqrt(g_var));
        double u = rng.u01(), acc = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i) {
            acc += prob[i];
            if (u <= acc) return support[i];
        }
        return support.back();
    }

    double mean() const {
        if (gaussian) return g_mean;
        double m = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i) m += prob[i] * support[i];
        return m;
    }

    double variance() const {
        if (gaussian) return g_var;
        double m = mean(), v = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i) v += prob[i] * (support[i] - m) * (support[i] - m);
        return v;
    }

    // P(S1 >= t)
    double tail_ge(double t) const {
        if (gaussian) return phi_cdf((g_mean - t) / std::sqrt(g_var));
        double s = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i)
            if (support[i] >= t) s += prob[i];
        return s;
    }

    // q-quantile of |S1| (envelope width for the h-transform sampler)
    double abs_quantile(double q) const {
        if (gaussian) {
            double z = phi_inv(0.5 + q / 2.0);
            return std::abs(g_mean) + z * std::sqrt(g_var);
        }
        double m = 0.0;
        for (double s : support) m = std::max(m, std::abs(s));
        return m;
    }

    // normalizer E[e^{S1} ; x + S1 <= cut] for the e^S-tilted kill-above-cut kernel
    double tilt_mass_below(double x, double cut) const {
        if (gaussian) {
            // E[e^U; U <= T], U ~ N(m,v): e^{m+v/2} Phi((T-m-v)/sqrt(v))
            double T = cut - x;
            return std::exp(g_mean + g_var / 2.0) * phi_cdf((T - g_mean - g_var) / std::sqrt(g_var));
        }
        double s = 0.0;
        for (std::size_t i = 0; i < support.size(); ++i)
            if (x + support[i] <= cut) s += prob[i] * std::exp(support[i]);
        return s;
    }

    // sample from density proportional to e^u f(u) 1{x+u <= cut}
    double tilt_sample_below(double x, double cut, Rng& rng) const {
        if (gaussian) {
            double T = cut - x, m = g_mean + g_var, sd = std::sqrt(g_var);
            double pmax = phi_cdf((T - m) / sd);
            double u = rng.u01() * pmax;
            if (u <= 0.0) u = 1e-300;
            return m + sd * phi_inv(u);
        }
        double tot = tilt_mass_below(x, cut);
        double u = rng.u01() * tot, acc = 0.0;
        double last = cut - x;
        for (std::size_t i = 0; i < support.size(); ++i) {
            if (x + support[i] > cut) continue;
            acc += prob[i] * std::exp(support[i]);
            last = support[i];
            if (u <= acc) return support[i];
        }
        return last;
    }
};

inline StepLaw step_law(const OffspringLaw& law) {
    if (!law.calibrated) throw std::domain_error("step_law: law must be boundary-calibrated");
    StepLaw s;
    if (const auto* g = std::get_if<GaussianBinary>(&law.family)) {
        s.gaussian = true;
        s.g_mean = g->mu - g->s2; // tilt by e^{-x} shifts the mean down by the variance
        s.g_var = g->s2;
        return s;
    }
    if (const auto* t = std::get_if<TwoPoint>(&law.family)) {
        double n = static_cast<double>(t->n_children);
        s.support = {t->d_minus, t->d_plus};
        s.prob = {n * t->p * std::exp(-t->d_minus), n * (1.0 - t->p) * std::exp(-t->d_plus)};
        return s;
    }
    const auto& tab = std::get<Tabulated>(law.family);
    for (const auto& a : tab.atoms)
        for (double d : a.disp) {
            s.support.push_back(d);
            s.prob.push_back(a.prob * std::exp(-d));
        }
    // merge duplicates to keep the support tidy
    std::vector<std::pair<double, double>> merged;
    for (std::size_t i = 0; i < s.support.size(); ++i) {
        bool found = false;
        for (auto& [d, w] : merged)
            if (d == s.support[i]) { w += s.prob[i]; found = true; break; }
        if (!found) merged.emplace_back(s.support[i], s.prob[i]);
    }
    std::sort(merged.begin(), merged.end());
    s.support.clear(); s.prob.clear();
    for (auto& [d, w] : merged) { s.support.push_back(d); s.prob.push_back(w); }
    return s;
}

inline double step_law_sample(const OffspringLaw& law, Rng& rng) { return step_law(law).sample(rng); }

// the reference environment: binary tree, iid gaussian displacements
inline OffspringLaw reference_law() {
    OffspringLaw law;
    law.family = GaussianBinary{2.0 * std::log(2.0), 2.0 * std::log(2.0)};
    return calibrate_boundary(law);
}

} // namespace bcrw
