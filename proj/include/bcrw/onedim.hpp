#pragma once
// The companion walk S on the line and everything built from it: descending
// ladder structure, the renewal function R with its linear fit, fluctuation
// constants, walks conditioned to stay high, the series H = sum_j e^{-zeta_j},
// the G_j integrands with their summed expectation, and a harness that
// stress-tests the standard fluctuation inequalities by Monte Carlo.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "io.hpp"
#include "law.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace bcrw {

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

// ------------------------------------------------------------------ ladder

struct LadderChain {
    std::vector<double> heights;        // 0 = H_0 > H_1 > H_2 > ...
    std::vector<std::uint64_t> epochs;  // 0 = T_0 < T_1 < ...
};

struct DescentSample {
    double depth = 0.0;       // -S at the first strict descent below 0
    std::uint64_t steps = 0;  // its epoch
};

// First strict descent of a fresh walk. The excursion that has not descended
// within step_cap steps (probability ~ c/sqrt(cap)) is thrown away and
// redrawn; the overshoot depends only weakly on the excursion length, so the
// distortion is far below Monte Carlo noise at the default cap.
inline DescentSample sample_descent(const StepLaw& step, Rng& rng, std::uint64_t step_cap = 100000,
                                    std::uint64_t* resamples = nullptr) {
    for (;;) {
        double s = 0.0;
        for (std::uint64_t t = 1; t <= step_cap; ++t) {
            s += step.sample(rng);
            if (s < 0.0) return {-s, t};
        }
        if (resamples) ++*resamples;
    }
}

// Ladder skeleton down to -floor_u, segment by segment (each segment is a
// fresh first-descent, which is exactly the ladder increment law).
inline LadderChain sample_ladder_chain(const StepLaw& step, Rng& rng, double floor_u,
                                       std::uint64_t step_cap = 100000) {
    if (floor_u < 0.0) throw std::domain_error("ladder chain: floor must be >= 0");
    LadderChain out;
    out.heights.push_back(0.0);
    out.epochs.push_back(0);
    while (out.heights.back() >= -floor_u) {
        DescentSample d = sample_descent(step, rng, step_cap);
        out.heights.push_back(out.heights.back() - d.depth);
        out.epochs.push_back(out.epochs.back() + d.steps);
    }
    return out;
}

// ----------------------------------------------------------- renewal table

struct RenewalConfig {
    double u_max = 100.0;
    double bin = 0.1;
    std::uint64_t pool = 300000;    // iid descent depths drawn once
    std::uint64_t chains = 300000;  // renewal chains resampled from the pool
    std::uint32_t blocks = 16;      // chain blocks, for SEs of fitted values
    std::uint64_t descent_step_cap = 100000;
    double fit_lo = 40.0, fit_hi = 80.0;  // window for the slope fit
};

// R(u) = expected number of ladder points at depth <= u, tabulated on a
// ceiling-binned grid. R(0) = 1 holds exactly: only the ladder origin can
// land in bin zero. Depths for the chains are bootstrapped from one shared
// pool of iid first-descent draws; the quoted SEs combine the chain block
// spread with the pool's delta-method term.
class RenewalTable {
  public:
    RenewalTable(const StepLaw& step, const RenewalConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        if (cfg.bin <= 0.0 || cfg.u_max <= cfg.bin) throw ConfigError("renewal table: bad grid");
        if (cfg.pool < 100 || cfg.chains < 100) throw ConfigError("renewal table: pool/chains too small");
        const std::size_t nbins = static_cast<std::size_t>(std::llround(cfg.u_max / cfg.bin));

        Rng pool_rng(derive_key(seed, 0x6c646472ULL));  // ladder pool stream
        std::vector<double> pool(cfg.pool);
        Welford pw;
        for (auto& d : pool) {
            d = sample_descent(step, pool_rng, cfg.descent_step_cap, &resamples_).depth;
            pw.add(d);
        }
        pool_mean_ = pw.mean();
        pool_sd_ = pw.sd();

        const std::uint64_t chains_pb = cfg.chains / cfg.blocks;
        chains_used_ = chains_pb * cfg.blocks;
        std::vector<std::vector<std::uint32_t>> hist(cfg.blocks, std::vector<std::uint32_t>(nbins + 1, 0));
        for (std::uint32_t b = 0; b < cfg.blocks; ++b) {
            Rng rng(derive_key(seed, 0x6368616eULL, b));  // chain stream per block
            for (std::uint64_t c = 0; c < chains_pb; ++c) {
                double depth = 0.0;
                for (;;) {
                    depth += pool[pool_rng_index(rng, pool.size())];
                    if (depth > cfg.u_max) break;
                    std::size_t idx = static_cast<std::size_t>(std::ceil(depth / cfg.bin));
                    if (idx > nbins) idx = nbins;
                    ++hist[b][idx];
                }
            }
        }

        values_.assign(nbins + 1, 1.0);
        std::vector<std::vector<double>> block_vals(cfg.blocks, std::vector<double>(nbins + 1, 1.0));
        std::vector<double> cum(cfg.blocks, 0.0);
        double cum_all = 0.0;
        for (std::size_t i = 1; i <= nbins; ++i) {
            double tot = 0.0;
            for (std::uint32_t b = 0; b < cfg.blocks; ++b) {
                cum[b] += hist[b][i];
                block_vals[b][i] = 1.0 + cum[b] / static_cast<double>(chains_pb);
                tot += hist[b][i];
            }
            cum_all += tot;
            values_[i] = 1.0 + cum_all / static_cast<double>(chains_used_);
        }

        // slope fit over the window; the ratio R/u carries a +kappa/u bias,
        // the regression slope does not
        std::vector<double> us, rs;
        for (std::size_t i = 0; i <= nbins; ++i) {
            double u = static_cast<double>(i) * cfg.bin;
            if (u >= cfg.fit_lo && u <= cfg.fit_hi) { us.push_back(u); rs.push_back(values_[i]); }
        }
        if (us.size() < 8) throw ConfigError("renewal table: fit window too narrow for the grid");
        LinFit fit = fit_line(us, rs);
        c0_ = fit.slope;
        kappa_ = fit.intercept;
        Welford bs;
        for (std::uint32_t b = 0; b < cfg.blocks; ++b) {
            std::vector<double> rb;
            rb.reserve(us.size());
            for (std::size_t i = 0; i <= nbins; ++i) {
                double u = static_cast<double>(i) * cfg.bin;
                if (u >= cfg.fit_lo && u <= cfg.fit_hi) rb.push_back(block_vals[b][i]);
            }
            bs.add(fit_line(us, rb).slope);
        }
        double se_blocks = bs.se();
        double se_pool = c0_ * c0_ * pool_sd_ / std::sqrt(static_cast<double>(cfg.pool));
        c0_se_ = std::sqrt(se_blocks * se_blocks + se_pool * se_pool);

        // linear envelope constants, valid on the grid and on the linear
        // extension beyond u_max (where R/(1+u) moves monotonically to c0)
        c_minus_ = c0_;
        c_plus_ = c0_;
        for (std::size_t i = 0; i <= nbins; ++i) {
            double r = values_[i] / (1.0 + static_cast<double>(i) * cfg.bin);
            c_minus_ = std::min(c_minus_, r);
            c_plus_ = std::max(c_plus_, r);
        }
        if (!(c_minus_ > 0.0) || !(c0_ > 0.0))
            throw ConvergenceWarning("renewal table: degenerate fit (nonpositive slope or envelope)");
    }

    // R at u; linear interpolation on the grid, linear extension beyond
    double operator()(double u) const {
        if (u < 0.0) throw std::domain_error("renewal function: negative argument");
        if (u >= cfg_.u_max) return values_.back() + c0_ * (u - cfg_.u_max);
        double pos = u / cfg_.bin;
        std::size_t i = static_cast<std::size_t>(pos);
        double w = pos - static_cast<double>(i);
        return values_[i] * (1.0 - w) + values_[i + 1] * w;
    }

    const std::vector<double>& values() const { return values_; }
    double bin() const { return cfg_.bin; }
    double u_max() const { return cfg_.u_max; }
    double c0() const { return c0_; }
    double c0_se() const { return c0_se_; }
    double kappa() const { return kappa_; }
    double c_minus() const { return c_minus_; }
    double c_plus() const { return c_plus_; }
    std::uint64_t resamples() const { return resamples_; }
    std::uint64_t chains_used() const { return chains_used_; }
    double pool_mean() const { return pool_mean_; }
    const RenewalConfig& config() const { return cfg_; }

    // relative spread of R(u)/u over the fit window
    double plateau_spread() const {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            double u = static_cast<double>(i) * cfg_.bin;
            if (u < cfg_.fit_lo || u > cfg_.fit_hi) continue;
            double r = values_[i] / u;
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        return (hi - lo) / (0.5 * (hi + lo));
    }

    json to_json() const {
        json j;
        j["u_max"] = cfg_.u_max;
        j["bin"] = cfg_.bin;
        j["pool"] = cfg_.pool;
        j["chains"] = chains_used_;
        j["c0"] = c0_;
        j["c0_se"] = c0_se_;
        j["kappa"] = kappa_;
        j["c_minus"] = c_minus_;
        j["c_plus"] = c_plus_;
        j["plateau_spread"] = plateau_spread();
        j["pool_resamples"] = resamples_;
        return j;
    }

  private:
    static std::size_t pool_rng_index(Rng& rng, std::size_t n) {
        return static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)));
    }

    RenewalConfig cfg_;
    std::vector<double> values_;
    double c0_ = 0.0, c0_se_ = 0.0, kappa_ = 0.0, c_minus_ = 0.0, c_plus_ = 0.0;
    double pool_mean_ = 0.0, pool_sd_ = 0.0;
    std::uint64_t resamples_ = 0, chains_used_ = 0;
};

// ---------------------------------------------------- fluctuation constants

struct ConstantsGridPoint {
    std::uint64_t n = 0;
    double c1 = 0.0, c1_se = 0.0;  // sqrt(n) P(min_{1..n} S >= 0)
    double c2 = 0.0, c2_se = 0.0;  // sqrt(n) P(min_{1..n} S > 0)
};

struct FluctuationConstants {
    double c0 = 0.0, c0_se = 0.0, kappa = 0.0;
    double c1_plus = 0.0, c1_se = 0.0;
    double c2_plus = 0.0, c2_se = 0.0;
    double sigma2 = 0.0;
    bool convergence_warning = false;
    std::vector<ConstantsGridPoint> grid;

    json to_json() const {
        json j;
        j["c0"] = c0;
        j["c0_se"] = c0_se;
        j["kappa"] = kappa;
        j["c1_plus"] = c1_plus;
        j["c1_se"] = c1_se;
        j["c2_plus"] = c2_plus;
        j["c2_se"] = c2_se;
        j["sigma2"] = sigma2;
        j["convergence_warning"] = convergence_warning;
        json g = json::array();
        for (const auto& p : grid)
            g.push_back({{"n", p.n}, {"c1", p.c1}, {"c1_se", p.c1_se}, {"c2", p.c2}, {"c2_se", p.c2_se}});
        j["grid"] = std::move(g);
        return j;
    }
};

// sqrt(n) P(min >= 0) and sqrt(n) P(min > 0), plateau-averaged over the top
// half of the grid. A monotone drift beyond 3 SE across the top half marks
// the result with a convergence warning instead of failing.
inline FluctuationConstants fluctuation_constants(const StepLaw& step, const RenewalTable& table,
                                                  double sigma2, const std::vector<std::uint64_t>& n_grid,
                                                  std::uint64_t replicas, std::uint64_t seed) {
    if (n_grid.size() < 2 || !std::is_sorted(n_grid.begin(), n_grid.end()))
        throw ConfigError("fluctuation constants: need an increasing n grid");
    FluctuationConstants out;
    out.c0 = table.c0();
    out.c0_se = table.c0_se();
    out.kappa = table.kappa();
    out.sigma2 = sigma2;

    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        const std::uint64_t n = n_grid[gi];
        Rng rng(derive_key(seed, 0x666c7563ULL, gi));
        std::uint64_t ge = 0, gt = 0;
        for (std::uint64_t r = 0; r < replicas; ++r) {
            double s = 0.0;
            bool strict = true, ok = true;
            for (std::uint64_t t = 0; t < n; ++t) {
                s += step.sample(rng);
                if (s < 0.0) { ok = false; break; }
                if (s == 0.0) strict = false;
            }
            if (ok) {
                ++ge;
                if (strict) ++gt;
            }
        }
        auto pt = ConstantsGridPoint{};
        pt.n = n;
        double k = static_cast<double>(replicas), rt = std::sqrt(static_cast<double>(n));
        double p1 = static_cast<double>(ge) / k, p2 = static_cast<double>(gt) / k;
        pt.c1 = rt * p1;
        pt.c1_se = rt * std::sqrt(std::max(p1 * (1.0 - p1), 1.0 / k) / k);
        pt.c2 = rt * p2;
        pt.c2_se = rt * std::sqrt(std::max(p2 * (1.0 - p2), 1.0 / k) / k);
        out.grid.push_back(pt);
    }

    const std::size_t half = out.grid.size() / 2;
    auto plateau = [&](auto value, auto se) {
        double wsum = 0.0, vsum = 0.0;
        for (std::size_t i = half; i < out.grid.size(); ++i) {
            double w = 1.0 / (se(out.grid[i]) * se(out.grid[i]));
            wsum += w;
            vsum += w * value(out.grid[i]);
        }
        return std::pair{vsum / wsum, std::sqrt(1.0 / wsum)};
    };
    auto [c1, s1] = plateau([](const ConstantsGridPoint& p) { return p.c1; },
                            [](const ConstantsGridPoint& p) { return p.c1_se; });
    auto [c2, s2] = plateau([](const ConstantsGridPoint& p) { return p.c2; },
                            [](const ConstantsGridPoint& p) { return p.c2_se; });
    out.c1_plus = c1;
    out.c1_se = s1;
    out.c2_plus = c2;
    out.c2_se = s2;

    auto drift = [&](auto value, auto se) {
        bool inc = true, dec = true;
        for (std::size_t i = half + 1; i < out.grid.size(); ++i) {
            if (value(out.grid[i]) < value(out.grid[i - 1])) inc = false;
            if (value(out.grid[i]) > value(out.grid[i - 1])) dec = false;
        }
        double d = value(out.grid.back()) - value(out.grid[half]);
        double sd = std::hypot(se(out.grid.back()), se(out.grid[half]));
        return (inc || dec) && std::abs(d) > 3.0 * sd;
    };
    out.convergence_warning =
        drift([](const ConstantsGridPoint& p) { return p.c1; },
              [](const ConstantsGridPoint& p) { return p.c1_se; }) ||
        drift([](const ConstantsGridPoint& p) { return p.c2; },
              [](const ConstantsGridPoint& p) { return p.c2_se; });
    return out;
}

// ------------------------------------------------------- conditioned walks

// One-step sampler of the walk conditioned to stay above -alpha, driven by
// the tabulated R: transition density proportional to R(alpha+y) f(y-x) on
// the allowed half-line. Proposals are clamped at the 0.999 quantile of the
// step so that M = C+(1+alpha+x+Delta)/(C-(1+alpha+x)) dominates the ratio;
// the clamp shortens ~0.1% of jumps, far below the test resolutions here.
class SpineSampler {
  public:
    SpineSampler(const RenewalTable& table, const StepLaw& step, double alpha)
        : table_(&table), step_(step), alpha_(alpha), strict_(alpha == 0.0),
          delta_(step.abs_quantile(0.999)) {
        if (alpha < 0.0) throw std::domain_error("spine sampler: alpha must be >= 0");
    }

    double advance(double x, Rng& rng) const {
        const double rx = (*table_)(alpha_ + x);
        const double m = table_->c_plus() * (1.0 + alpha_ + x + delta_) /
                         (table_->c_minus() * (1.0 + alpha_ + x));
        for (;;) {
            ++proposals_;
            if ((proposals_ & 0x3fff) == 0 && proposals_ > 100000 &&
                static_cast<double>(accepts_) < 1e-4 * static_cast<double>(proposals_))
                throw EfficiencyError("conditioned walk: acceptance below 1e-4, use rejection mode");
            double y = x + std::min(step_.sample(rng), delta_);
            bool inside = strict_ ? (y > -alpha_) : (y >= -alpha_);
            if (!inside) continue;
            if (rng.u01() * m * rx <= (*table_)(alpha_ + y)) {
                ++accepts_;
                return y;
            }
        }
    }

    // path s_0 = 0, s_1, ..., s_n
    std::vector<double> path(std::uint64_t n, Rng& rng) const {
        std::vector<double> s(n + 1, 0.0);
        for (std::uint64_t i = 1; i <= n; ++i) s[i] = advance(s[i - 1], rng);
        return s;
    }

    double acceptance() const {
        return proposals_ ? static_cast<double>(accepts_) / static_cast<double>(proposals_) : 1.0;
    }
    double alpha() const { return alpha_; }

  private:
    const RenewalTable* table_;
    StepLaw step_;
    double alpha_;
    bool strict_;
    double delta_;
    mutable std::uint64_t proposals_ = 0, accepts_ = 0;
};

// Raw paths kept on the event {min_{1..horizon} S >= -alpha} (strict > 0
// when alpha = 0), truncated to `length` entries past the origin. A horizon
// far beyond the returned prefix approximates conditioning to stay high
// forever, which is what the h-transform sampler realizes. Errors out if the
// survival event is rarer than 1e-4.
inline std::vector<std::vector<double>> rejection_paths(const StepLaw& step, double alpha,
                                                        std::uint64_t horizon, std::uint64_t length,
                                                        std::uint64_t count, Rng& rng) {
    if (alpha < 0.0) throw std::domain_error("rejection paths: alpha must be >= 0");
    if (length > horizon) throw ConfigError("rejection paths: length exceeds the horizon");
    const bool strict = alpha == 0.0;
    std::vector<std::vector<double>> out;
    out.reserve(count);
    std::vector<double> s(length + 1, 0.0);
    std::uint64_t tries = 0;
    while (out.size() < count) {
        if (++tries > 100000 && static_cast<double>(out.size()) < 1e-4 * static_cast<double>(tries))
            throw EfficiencyError("rejection paths: acceptance below 1e-4, use the h-transform mode");
        double x = 0.0;
        bool ok = true;
        for (std::uint64_t i = 1; i <= horizon; ++i) {
            x += step.sample(rng);
            if (strict ? (x <= 0.0) : (x < -alpha)) { ok = false; break; }
            if (i <= length) s[i] = x;
        }
        if (ok) out.push_back(s);
    }
    return out;
}

inline std::vector<double> zeta_chain(const RenewalTable& table, const StepLaw& step,
                                      std::uint64_t n, Rng& rng) {
    return SpineSampler(table, step, 0.0).path(n, rng);
}

// ---------------------------------------------------------------- H series

struct HEnsemble {
    std::vector<double> samples;   // truncated sums, each >= 1
    double tail_proxy_mean = 0.0;  // mean of the last retained terms
    std::uint64_t truncation = 0;

    Estimate estimate() const {
        Welford w;
        for (double v : samples) w.add(v);
        return {w.mean(), w.se()};
    }
    json to_json() const {
        Estimate e = estimate();
        return json{{"mean", e.value}, {"se", e.se}, {"count", samples.size()},
                    {"truncation", truncation}, {"tail_proxy", tail_proxy_mean}};
    }
};

// samples of sum_{j<=J} e^{-zeta_j} along the conditioned chain; the term
// j = 0 contributes 1, so every sample is >= 1. The tail proxy reports the
// summed mass of the last 16 retained terms as a truncation diagnostic.
inline HEnsemble h_infinity(const RenewalTable& table, const StepLaw& step, std::uint64_t count,
                            std::uint64_t truncation, std::uint64_t seed) {
    SpineSampler spine(table, step, 0.0);
    HEnsemble out;
    out.truncation = truncation;
    out.samples.reserve(count);
    const std::uint64_t win = std::min<std::uint64_t>(truncation, 16);
    double tail_acc = 0.0;
    for (std::uint64_t i = 0; i < count; ++i) {
        Rng rng(derive_key(seed, 0x68696e66ULL, i));
        double x = 0.0, h = 1.0, tail = 0.0;
        for (std::uint64_t j = 1; j <= truncation; ++j) {
            x = spine.advance(x, rng);
            double term = std::exp(-x);
            h += term;
            if (j + win > truncation) tail += term;
        }
        out.samples.push_back(h);
        tail_acc += tail;
    }
    out.tail_proxy_mean = count ? tail_acc / static_cast<double>(count) : 0.0;
    return out;
}

// ------------------------------------------------------------- G_j and sums

// G_j(x) = E[ e^{S_j} / (x + sum_{i<=j} e^{S_i}) ; max_{1..j} S <= 0 ],
// G_0(x) = 1/x. Defined for x >= 1. Plain MC with early kill above 0.
inline Estimate g_j(const StepLaw& step, std::uint64_t j, double x, std::uint64_t replicas,
                    std::uint64_t seed) {
    if (x < 1.0) throw std::domain_error("g_j: x must be >= 1");
    if (j == 0) return {1.0 / x, 0.0};
    Welford w;
    Rng rng(derive_key(seed, 0x676a6d63ULL, j));
    for (std::uint64_t r = 0; r < replicas; ++r) {
        double s = 0.0, pref = 0.0;
        bool alive = true;
        for (std::uint64_t i = 1; i <= j; ++i) {
            s += step.sample(rng);
            if (s > 0.0) { alive = false; break; }
            pref += std::exp(s);
        }
        w.add(alive ? std::exp(s) / (x + pref) : 0.0);
    }
    return {w.mean(), w.se()};
}

// E[ e^{S_j} ; max_{1..j} S <= 0 ] by the same early-kill loop
inline Estimate exp_endpoint_max_below(const StepLaw& step, std::uint64_t j, std::uint64_t replicas,
                                       std::uint64_t seed) {
    if (j == 0) return {1.0, 0.0};
    Welford w;
    Rng rng(derive_key(seed, 0x65736d62ULL, j));
    for (std::uint64_t r = 0; r < replicas; ++r) {
        double s = 0.0;
        bool alive = true;
        for (std::uint64_t i = 1; i <= j; ++i) {
            s += step.sample(rng);
            if (s > 0.0) { alive = false; break; }
        }
        w.add(alive ? std::exp(s) : 0.0);
    }
    return {w.mean(), w.se()};
}

// --------------------------------------------------------- Baxter sequence

// b_n = E[e^{S_n}; max_{1..n} S <= 0] for the gaussian step law, via the
// fluctuation-series recursion b_n = (1/n) sum_{k=1}^{n} a_k b_{n-k} with
// a_k = E[e^{S_k}; S_k <= 0] = erfcx(sqrt(k sigma2 / 2)) / 2. Exact up to
// floating point; used as the unit oracle for the tilted estimator and as
// the tail weight in sum_EG.
inline std::vector<double> baxter_coeffs(std::size_t n_max, double sigma2) {
    if (sigma2 <= 0.0) throw std::domain_error("baxter_coeffs: sigma2 must be positive");
    std::vector<double> a(n_max + 1, 0.0), b(n_max + 1, 0.0);
    for (std::size_t k = 1; k <= n_max; ++k)
        a[k] = 0.5 * erfcx(std::sqrt(static_cast<double>(k) * sigma2 / 2.0));
    b[0] = 1.0;
    for (std::size_t n = 1; n <= n_max; ++n) {
        double acc = 0.0;
        for (std::size_t k = 1; k <= n; ++k) acc += a[k] * b[n - k];
        b[n] = acc / static_cast<double>(n);
    }
    return b;
}

struct SumEGResult {
    double value = 0.0, se = 0.0;
    double head = 0.0, head_se = 0.0;  // j = 0 term plus j <= j_cut
    double tail = 0.0, tail_se = 0.0;  // rho_hat * sum_{j > j_cut} b_j
    double rho_hat = 0.0;
    std::uint64_t j_cut = 0, paths = 0;

    json to_json() const {
        return json{{"value", value}, {"se", se},       {"head", head},     {"head_se", head_se},
                    {"tail", tail},   {"tail_se", tail_se}, {"rho_hat", rho_hat}, {"j_cut", j_cut},
                    {"paths", paths}};
    }
};

// sum_j E[G_j(H)] over iid H samples: one shared path ensemble supplies all
// j at once, with g(P) = E_H[1/(H+P)] tabulated on a logarithmic grid. The
// truncated tail is restored through the Baxter weights b_j, scaled by the
// ratio rho observed over the last quarter of retained j. Gaussian step law
// only (the tail weights have no closed form otherwise).
inline SumEGResult sum_EG(const StepLaw& step, const std::vector<double>& h_samples,
                          std::uint64_t j_cut, std::uint64_t paths, std::uint64_t seed) {
    if (!step.gaussian) throw ConfigError("sum_EG: gaussian step family required");
    if (h_samples.empty()) throw ConfigError("sum_EG: no H samples");
    if (j_cut < 8) throw ConfigError("sum_EG: j_cut too small");

    // g(P) on a log grid covering every reachable prefix value
    const int GN = 200;
    const double lo = std::log(1e-9), hi = std::log(static_cast<double>(j_cut) + 1.0);
    std::vector<double> gtab(GN);
    for (int i = 0; i < GN; ++i) {
        double p = std::exp(lo + (hi - lo) * static_cast<double>(i) / (GN - 1));
        double acc = 0.0;
        for (double h : h_samples) acc += 1.0 / (h + p);
        gtab[i] = acc / static_cast<double>(h_samples.size());
    }
    auto g_of = [&](double p) {
        double t = (std::log(std::max(p, 1e-12)) - lo) / (hi - lo) * (GN - 1);
        if (t <= 0.0) return gtab.front();
        if (t >= GN - 1) return gtab.back();
        int i = static_cast<int>(t);
        double w = t - i;
        return gtab[i] * (1.0 - w) + gtab[i + 1] * w;
    };

    const std::uint64_t win_lo = j_cut - j_cut / 4 + 1;  // last quarter of j
    Welford total, window;
    Rng rng(derive_key(seed, 0x73756d67ULL));
    for (std::uint64_t r = 0; r < paths; ++r) {
        double s = 0.0, pref = 0.0, acc = 0.0, acc_win = 0.0;
        for (std::uint64_t j = 1; j <= j_cut; ++j) {
            s += step.sample(rng);
            if (s > 0.0) break;
            pref += std::exp(s);
            double c = std::exp(s) * g_of(pref);
            acc += c;
            if (j >= win_lo) acc_win += c;
        }
        total.add(acc);
        window.add(acc_win);
    }

    const std::size_t BN = 8192;
    std::vector<double> b = baxter_coeffs(BN, step.g_var);
    double b_win = 0.0, b_tail = 0.0;
    for (std::uint64_t j = win_lo; j <= j_cut; ++j) b_win += b[j];
    for (std::size_t j = j_cut + 1; j <= BN; ++j) b_tail += b[j];
    b_tail += 2.0 * b[BN] * static_cast<double>(BN);  // integral continuation of c j^{-3/2}
    // (sum_{j>N} c j^{-3/2} ~ 2 c / sqrt(N), with c = N^{3/2} b_N)

    SumEGResult out;
    out.j_cut = j_cut;
    out.paths = paths;
    out.rho_hat = window.mean() / b_win;
    out.tail = out.rho_hat * b_tail;
    out.tail_se = window.se() / b_win * b_tail;

    Welford hinv;
    for (double h : h_samples) hinv.add(1.0 / h);
    out.head = hinv.mean() + total.mean();
    out.head_se = std::hypot(hinv.se(), total.se());
    out.value = out.head + out.tail;
    out.se = std::hypot(out.head_se, out.tail_se);
    return out;
}

// --------------------------------------- killed-particle survival estimator

// P(S_n = min_{1..n} S >= -alpha). By time reversal this equals
// P(max_{1..n-1} R <= 0, R_n >= -alpha) for a walk R with the same step law;
// estimated by killing particles above 0, resampling survivors each level,
// multiplying the per-level survival fractions, and closing the last step
// with the exact step tail. Unbiased; SE from independent repeats.
inline Estimate final_min_prob(const StepLaw& step, std::uint64_t n, double alpha,
                               std::uint64_t particles, std::uint64_t repeats, std::uint64_t seed) {
    if (n == 0 || particles == 0 || repeats < 2)
        throw ConfigError("final_min_prob: need n >= 1, particles >= 1, repeats >= 2");
    Welford w;
    std::vector<double> x(particles), keep;
    for (std::uint64_t rep = 0; rep < repeats; ++rep) {
        Rng rng(derive_key(seed, 0x736d7362ULL, rep));
        std::fill(x.begin(), x.end(), 0.0);
        double logprod = 0.0;
        bool extinct = false;
        for (std::uint64_t t = 1; t + 1 <= n; ++t) {
            keep.clear();
            for (double& xi : x) {
                double y = xi + step.sample(rng);
                if (y <= 0.0) keep.push_back(y);
            }
            if (keep.empty()) { extinct = true; break; }
            logprod += std::log(static_cast<double>(keep.size()) / static_cast<double>(particles));
            for (double& xi : x) xi = keep[rng.below(keep.size())];
        }
        if (extinct) { w.add(0.0); continue; }
        double tail = 0.0;
        for (double xi : x) tail += step.tail_ge(-alpha - xi);
        tail /= static_cast<double>(particles);
        w.add(std::exp(logprod) * tail);
    }
    return {w.mean(), w.se()};
}

// ------------------------------------------- tilted sequential estimator

// E[e^{S_n}; max_{1..n} S <= barrier (, min_{1..n} S >= floor)] by a
// population of particles under the e^x tilt: each level multiplies the
// running estimate by the population mean of the band's tilted mass,
// resamples particles in proportion to it, and moves every survivor with the
// tilted step restricted to the band. Resampling is what keeps the weight
// variance bounded; a single-path product of the per-step masses blows up on
// rare deep excursions. Unbiased for the normalizing mass; SE over repeats.
struct TiltedEstimate {
    double value = 0.0, se = 0.0;
    std::vector<double> level_mass;  // mass with the endpoint in [-(k+1), -k) below the barrier

    json to_json() const {
        return json{{"value", value}, {"se", se}, {"level_mass", level_mass}};
    }
};

namespace detail {

// systematic resampling: one uniform, evenly strided picks through the
// cumulative weights; far less replication noise than a multinomial draw
inline void systematic_resample(const std::vector<double>& w, double total, Rng& rng,
                                std::vector<std::size_t>& idx) {
    const std::size_t n = w.size();
    const double stride = total / static_cast<double>(n);
    double target = rng.u01() * stride;
    std::size_t j = 0;
    double cum = w[0];
    for (std::size_t i = 0; i < n; ++i) {
        while (cum < target && j + 1 < n) cum += w[++j];
        idx[i] = j;
        target += stride;
    }
}

} // namespace detail

inline TiltedEstimate tilted_exp_barrier(const StepLaw& step, std::uint64_t n, double barrier,
                                         std::optional<double> floor_pos, std::uint64_t particles,
                                         std::uint64_t repeats, std::uint64_t seed) {
    if (n == 0 || particles < 2 || repeats < 2)
        throw ConfigError("tilted_exp_barrier: need n >= 1, particles >= 2, repeats >= 2");
    if (floor_pos && *floor_pos >= barrier)
        throw ConfigError("tilted_exp_barrier: floor must sit below the barrier");
    const std::size_t LEVELS = 64;
    TiltedEstimate out;
    out.level_mass.assign(LEVELS + 1, 0.0);
    Welford acc;
    std::vector<double> x(particles), xs(particles), w(particles);
    std::vector<std::size_t> idx(particles);
    for (std::uint64_t rep = 0; rep < repeats; ++rep) {
        Rng rng(derive_key(seed, 0x74696c74ULL, rep));
        std::fill(x.begin(), x.end(), 0.0);
        std::fill(w.begin(), w.end(), 1.0);
        double logz = 0.0;
        bool dead = false;
        for (std::uint64_t t = 1; t <= n && !dead; ++t) {
            double wsum = 0.0, wsq = 0.0;
            for (std::uint64_t i = 0; i < particles; ++i) {
                if (w[i] == 0.0) continue;
                double mass = step.tilt_mass_below(x[i], barrier);
                if (floor_pos) mass -= step.tilt_mass_below(x[i], *floor_pos);
                w[i] *= std::max(mass, 0.0);
                wsum += w[i];
                wsq += w[i] * w[i];
            }
            if (!(wsum > 0.0)) { dead = true; break; }
            // refresh the population once the effective size drops below half
            if (t < n && wsum * wsum < wsq * static_cast<double>(particles) / 2.0) {
                logz += std::log(wsum / static_cast<double>(particles));
                detail::systematic_resample(w, wsum, rng, idx);
                for (std::uint64_t i = 0; i < particles; ++i) xs[i] = x[idx[i]];
                x.swap(xs);
                std::fill(w.begin(), w.end(), 1.0);
            }
            for (std::uint64_t i = 0; i < particles; ++i) {
                if (w[i] == 0.0) continue;
                double y;
                if (floor_pos) {
                    int tries = 0;
                    do {
                        y = x[i] + step.tilt_sample_below(x[i], barrier, rng);
                        if (++tries > 100000)
                            throw EfficiencyError(
                                "tilted_exp_barrier: band rejection stuck at the floor");
                    } while (y < *floor_pos);
                } else {
                    y = x[i] + step.tilt_sample_below(x[i], barrier, rng);
                }
                x[i] = y;
            }
        }
        if (dead) { acc.add(0.0); continue; }
        double wsum = 0.0;
        for (std::uint64_t i = 0; i < particles; ++i) wsum += w[i];
        double z = std::exp(logz) * wsum / static_cast<double>(particles);
        acc.add(z);
        if (z > 0.0) {
            // final particles carry their residual weight shares of z
            for (std::uint64_t i = 0; i < particles; ++i) {
                if (w[i] == 0.0) continue;
                double depth = barrier - x[i];
                std::size_t lvl = depth <= 0.0
                                      ? 0
                                      : std::min<std::size_t>(LEVELS, static_cast<std::size_t>(depth));
                out.level_mass[lvl] += std::exp(logz) * w[i] / static_cast<double>(particles * repeats);
            }
        }
    }
    out.value = acc.mean();
    out.se = acc.se();
    return out;
}

// --------------------------------------------------------- fact harness

enum class FactId {
    mSbd, mSSbd, mSMSbd, mSMSSbd, mSMSSbd0, mSMSSbdPlus, SmSbd, mSeSsum, mSeS,
    eSMSbd, eSMSbdPlus, eSbd, mSmSbd, LDP, Last1, eSMSmSbd, eSMSMMSmSbd, eSMSMSmSbd
};

inline const std::vector<std::pair<FactId, const char*>>& fact_catalog() {
    static const std::vector<std::pair<FactId, const char*>> v = {
        {FactId::mSbd, "mSbd"},           {FactId::mSSbd, "mSSbd"},
        {FactId::mSMSbd, "mSMSbd"},       {FactId::mSMSSbd, "mSMSSbd"},
        {FactId::mSMSSbd0, "mSMSSbd0"},   {FactId::mSMSSbdPlus, "mSMSSbd+"},
        {FactId::SmSbd, "SmSbd"},         {FactId::mSeSsum, "mSeSsum"},
        {FactId::mSeS, "mSeS"},           {FactId::eSMSbd, "eSMSbd"},
        {FactId::eSMSbdPlus, "eSMSbd+"},  {FactId::eSbd, "eSbd"},
        {FactId::mSmSbd, "mSmSbd"},       {FactId::LDP, "LDP"},
        {FactId::Last1, "Last1"},         {FactId::eSMSmSbd, "eSMSmSbd"},
        {FactId::eSMSMMSmSbd, "eSMSMMSmSbd"}, {FactId::eSMSMSmSbd, "eSMSMSmSbd"}};
    return v;
}

inline std::string fact_to_string(FactId id) {
    for (const auto& [f, name] : fact_catalog())
        if (f == id) return name;
    throw std::domain_error("unknown fact id");
}

inline FactId fact_from_string(const std::string& name) {
    for (const auto& [f, n] : fact_catalog())
        if (name == n) return f;
    throw std::domain_error("unknown fact id: " + name);
}

inline std::string fact_describe(FactId id) {
    switch (id) {
        case FactId::mSbd: return "P(min S >= -u) and P(max S <= u) are O((1+u)/sqrt(n))";
        case FactId::mSSbd: return "P(min S >= -u, S_n in [a,b]) = O((1+u)(1+b+u)(1+b-a)/n^{3/2})";
        case FactId::mSMSbd: return "P_u(min S >= -alpha, S_n = max S) = O((1+alpha+u)/n)";
        case FactId::mSMSSbd: return "P_u(min S >= -alpha, S_n = max S in [a,b]) = O((1+alpha+u)(b-a)/n^{3/2})";
        case FactId::mSMSSbd0: return "P(min S >= -alpha, S_n = max S >= A) = O((1+alpha)/(A sqrt(n)))";
        case FactId::mSMSSbdPlus:
            return "P(min S >= -alpha, S_n = max S, max_m S - S_n >= -A, max_m S - S_m <= a) = "
                   "O((1+A)(1+a+A)(1+alpha)/(m^{1/2}(n-m)^{3/2}))";
        case FactId::SmSbd: return "P(S_n = min S >= -alpha) = O((1+alpha)^2/n^{3/2})";
        case FactId::mSeSsum:
            return "P(sum e^{S_i-S_n} in [a,b], min S >= -alpha) = "
                   "O((1+alpha)(1+log b)(1+log b-log a+log n)/n)";
        case FactId::mSeS:
            return "E[e^{S_n}; S_n in [a,b], min S >= -alpha] = O(e^b(b+alpha+1)(1+b-a)(1+alpha)/n^{3/2})";
        case FactId::eSMSbd: return "E[e^{S_n}; max S <= 0] = O(1/n^{3/2})";
        case FactId::eSMSbdPlus: return "E[e^{S_n}; max S <= A] = O((1+A)e^A/n^{3/2})";
        case FactId::eSbd: return "E[e^{S_n}/sum_i e^{S_i}] = O(1/sqrt(n))";
        case FactId::mSmSbd:
            return "P(min over [k1,k2] S <= A, min over (1+delta)n S >= 0) = O((1+A)/sqrt(delta n k1))";
        case FactId::LDP: return "P(max S >= n^{1+delta}) <= c e^{-theta n^{1+delta}/2}";
        case FactId::Last1: return "P(max S >= a sqrt(n log n), min S >= -alpha) = O(n^{-a^2 c2})";
        case FactId::eSMSmSbd:
            return "E[e^{S_l}; max S <= A, min S >= -alpha] = O(e^A(1+alpha)(1+A+alpha)/l^{3/2})";
        case FactId::eSMSMMSmSbd:
            return "E[e^{S_l - max S}; running drawdown <= A, min S >= -alpha] = "
                   "O((1+alpha)/l^{7/6} + (1+alpha) e^{-c l/A^2}/l)";
        case FactId::eSMSMSmSbd:
            return "E[e^{S_l - max S}; max S >= A, min S >= -alpha] = O((1+alpha)/(sqrt(l) A))";
    }
    throw std::domain_error("unknown fact id");
}

struct FactParams {
    double u = 2.0;       // lower barrier offset / start point, fact-dependent
    double alpha = 2.0;   // lower barrier
    double a = 0.0;       // window lower edge
    double b = 2.0;       // window upper edge
    double A = 1.0;       // level parameter
    double delta = 1.0;   // horizon stretch / LDP exponent offset
    double m_frac = 0.5;  // intermediate epoch as a fraction of n
    double k1_frac = 0.25, k2_frac = 0.5;  // dip window as fractions of n

    json to_json() const {
        return json{{"u", u}, {"alpha", alpha}, {"a", a},           {"b", b},
                    {"A", A}, {"delta", delta}, {"m_frac", m_frac}, {"k1_frac", k1_frac},
                    {"k2_frac", k2_frac}};
    }
};

inline FactParams default_fact_params(FactId id) {
    FactParams p;
    switch (id) {
        case FactId::mSbd: p.u = 2.0; break;
        case FactId::mSSbd: p.u = 2.0; p.a = 0.0; p.b = 2.0; break;
        case FactId::mSMSbd: p.u = 0.0; p.alpha = 2.0; break;
        case FactId::mSMSSbd: p.u = 0.0; p.alpha = 2.0; p.a = 0.5; p.b = 1.5; break;
        case FactId::mSMSSbd0: p.u = 0.0; p.alpha = 2.0; p.A = 1.0; break;
        case FactId::mSMSSbdPlus: p.alpha = 2.0; p.A = 1.0; p.a = 1.0; p.m_frac = 0.5; break;
        case FactId::SmSbd: p.alpha = 2.0; break;
        case FactId::mSeSsum: p.alpha = 2.0; p.a = 2.0; p.b = 20.0; break;
        case FactId::mSeS: p.alpha = 2.0; p.a = 0.0; p.b = 1.0; break;
        case FactId::eSMSbd: break;
        case FactId::eSMSbdPlus: p.A = 1.0; break;
        case FactId::eSbd: break;
        case FactId::mSmSbd: p.A = 1.0; p.delta = 1.0; p.k1_frac = 0.25; p.k2_frac = 0.5; break;
        case FactId::LDP: p.delta = 0.2; break;
        case FactId::Last1: p.a = 1.0; p.alpha = 2.0; break;
        case FactId::eSMSmSbd: p.A = 1.0; p.alpha = 2.0; break;
        case FactId::eSMSMMSmSbd: p.A = 16.0; p.alpha = 2.0; break;
        case FactId::eSMSMSmSbd: p.A = 2.0; p.alpha = 2.0; break;
    }
    return p;
}

inline std::vector<std::uint64_t> default_fact_grid(FactId id) {
    auto pow2 = [](int lo, int hi) {
        std::vector<std::uint64_t> v;
        for (int e = lo; e <= hi; ++e) v.push_back(1ULL << e);
        return v;
    };
    switch (id) {
        case FactId::mSbd:
        case FactId::SmSbd:
        case FactId::eSMSbd:
        case FactId::eSbd: return pow2(6, 14);
        case FactId::mSMSSbd:
        case FactId::mSeS: return pow2(6, 10);
        case FactId::mSMSSbdPlus: return pow2(7, 9);
        case FactId::eSMSMMSmSbd: return pow2(5, 8);
        case FactId::mSmSbd:
        case FactId::Last1:
        case FactId::eSMSMSmSbd: return pow2(7, 10);
        case FactId::LDP: return {32, 64, 128};
        default: return pow2(7, 11);
    }
}

inline std::uint64_t default_fact_replicas(FactId id) {
    switch (id) {
        case FactId::mSbd: return 100000;
        case FactId::SmSbd: return 16384;  // split into particles x repeats
        case FactId::eSMSbd: return 10000;
        case FactId::eSMSbdPlus: return 10000;
        case FactId::eSMSmSbd: return 10000;
        case FactId::eSbd: return 30000;
        case FactId::LDP: return 1000000;
        case FactId::mSeSsum: return 200000;
        case FactId::mSmSbd: return 200000;
        case FactId::eSMSMMSmSbd: return 200000;
        case FactId::eSMSMSmSbd: return 200000;
        case FactId::Last1: return 300000;
        case FactId::mSMSSbd:
        case FactId::mSMSSbdPlus:
        case FactId::mSeS: return 600000;
        default: return 400000;
    }
}

struct FactPoint {
    std::uint64_t n = 0;
    double lhs = 0.0, lhs_se = 0.0;
    double shape = 0.0;
    double ratio = 0.0, ratio_se = 0.0;
};

struct FactReport {
    FactId id{};
    std::string name;
    FactParams params;
    std::vector<FactPoint> points;
    double c_hat = 0.0, c_hat_se = 0.0;
    double slope = 0.0, slope_se = 0.0;  // ratio drift per octave over the top half
    bool stable = true;
    std::string note;

    json to_json() const {
        json pts = json::array();
        for (const auto& p : points)
            pts.push_back({{"n", p.n}, {"lhs", p.lhs}, {"lhs_se", p.lhs_se}, {"shape", p.shape},
                           {"ratio", p.ratio}, {"ratio_se", p.ratio_se}});
        return json{{"fact", name},       {"statement", fact_describe(id)},
                    {"params", params.to_json()}, {"points", std::move(pts)},
                    {"c_hat", c_hat},     {"c_hat_se", c_hat_se},
                    {"slope", slope},     {"slope_se", slope_se},
                    {"stable", stable},   {"note", note}};
    }
};

namespace detail {

// weighted LS slope of y against x with per-point SEs; returns {slope, se}
inline std::pair<double, double> weighted_slope(const std::vector<double>& x,
                                                const std::vector<double>& y,
                                                const std::vector<double>& se) {
    double wsum = 0.0, xw = 0.0;
    std::vector<double> wts(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (se[i] <= 0.0) continue;
        wts[i] = 1.0 / (se[i] * se[i]);
        wsum += wts[i];
        xw += wts[i] * x[i];
    }
    if (wsum <= 0.0) return {0.0, 0.0};
    xw /= wsum;
    double sxx = 0.0, sxy = 0.0, yw = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) yw += wts[i] * y[i];
    yw /= wsum;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += wts[i] * (x[i] - xw) * (x[i] - xw);
        sxy += wts[i] * (x[i] - xw) * (y[i] - yw);
    }
    if (sxx <= 0.0) return {0.0, 0.0};
    return {sxy / sxx, std::sqrt(1.0 / sxx)};
}

} // namespace detail

// One grid point of one fact: the LHS estimate. The shape normalization and
// the drift fit happen in appendix_check.
inline Estimate fact_lhs(const StepLaw& step, FactId id, std::uint64_t n, const FactParams& p,
                         std::uint64_t replicas, Rng& rng) {
    auto binom = [&](std::uint64_t hits) -> Estimate {
        double k = static_cast<double>(replicas);
        double pr = static_cast<double>(hits) / k;
        return {pr, std::sqrt(std::max(pr * (1.0 - pr), 1.0 / k) / k)};
    };
    switch (id) {
        case FactId::mSbd: {
            std::uint64_t below = 0, above = 0;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0;
                bool ok = true;
                for (std::uint64_t t = 0; t < n && ok; ++t) ok = (s += step.sample(rng)) >= -p.u;
                below += ok;
            }
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0;
                bool ok = true;
                for (std::uint64_t t = 0; t < n && ok; ++t) ok = (s += step.sample(rng)) <= p.u;
                above += ok;
            }
            return binom(std::max(below, above));
        }
        case FactId::mSSbd: {
            std::uint64_t hits = 0;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0;
                bool ok = true;
                for (std::uint64_t t = 0; t < n && ok; ++t) ok = (s += step.sample(rng)) >= -p.u;
                hits += ok && s >= p.a && s <= p.b;
            }
            return binom(hits);
        }
        case FactId::mSMSbd:
        case FactId::mSMSSbd:
        case FactId::mSMSSbd0: {
            std::uint64_t hits = 0;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = p.u;  // start point; barrier and window are absolute
                double prevmax = -std::numeric_limits<double>::infinity();
                bool ok = true;
                for (std::uint64_t t = 1; t <= n && ok; ++t) {
                    if (t > 1) prevmax = std::max(prevmax, s);
                    s += step.sample(rng);
                    ok = s >= -p.alpha;
                }
                bool at_max = ok && s >= prevmax;
                if (id == FactId::mSMSbd) hits += at_max;
                else if (id == FactId::mSMSSbd) hits += at_max && s >= p.a && s <= p.b;
                else hits += at_max && s >= p.A;
            }
            return binom(hits);
        }
        case FactId::mSMSSbdPlus: {
            const std::uint64_t m = std::max<std::uint64_t>(1, std::min<std::uint64_t>(n - 1,
                static_cast<std::uint64_t>(p.m_frac * static_cast<double>(n))));
            std::uint64_t hits = 0;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0, prevmax = -std::numeric_limits<double>::infinity();
                double s_m = 0.0, max_m = 0.0;
                bool ok = true;
                for (std::uint64_t t = 1; t <= n && ok; ++t) {
                    if (t > 1) prevmax = std::max(prevmax, s);
                    s += step.sample(rng);
                    ok = s >= -p.alpha;
                    if (t == m) { s_m = s; max_m = std::max(prevmax, s); }
                }
                hits += ok && s >= prevmax && max_m - s >= -p.A && max_m - s_m <= p.a;
            }
            return binom(hits);
        }
        case FactId::SmSbd: {
            const std::uint64_t particles = 2048;
            const std::uint64_t repeats = std::max<std::uint64_t>(4, replicas / particles);
            return final_min_prob(step, n, p.alpha, particles, repeats, rng.next_u64());
        }
        case FactId::mSeSsum: {
            std::uint64_t hits = 0;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0, pref = 0.0;
                bool ok = true;
                for (std::uint64_t t = 0; t < n && ok; ++t) {
                    s += step.sample(rng);
                    ok = s >= -p.alpha;
                    if (ok) pref += std::exp(s);
                }
                if (ok) {
                    double ratio = pref * std::exp(-s);
                    hits += ratio >= p.a && ratio <= p.b;
                }
            }
            return binom(hits);
        }
        case FactId::mSeS: {
            Welford w;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0;
                bool ok = true;
                for (std::uint64_t t = 0; t < n && ok; ++t) ok = (s += step.sample(rng)) >= -p.alpha;
                w.add(ok && s >= p.a && s <= p.b ? std::exp(s) : 0.0);
            }
            return {w.mean(), w.se()};
        }
        case FactId::eSMSbd: {
            const std::uint64_t parts = std::clamp<std::uint64_t>(replicas / 8, 64, 4096);
            TiltedEstimate t = tilted_exp_barrier(step, n, 0.0, std::nullopt, parts,
                                                  std::max<std::uint64_t>(4, replicas / parts),
                                                  rng.next_u64());
            return {t.value, t.se};
        }
        case FactId::eSMSbdPlus: {
            const std::uint64_t parts = std::clamp<std::uint64_t>(replicas / 8, 64, 4096);
            TiltedEstimate t = tilted_exp_barrier(step, n, p.A, std::nullopt, parts,
                                                  std::max<std::uint64_t>(4, replicas / parts),
                                                  rng.next_u64());
            return {t.value, t.se};
        }
        case FactId::eSbd: {
            Welford w;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0, shift = -std::numeric_limits<double>::infinity(), pref = 0.0;
                for (std::uint64_t t = 0; t < n; ++t) {
                    s += step.sample(rng);
                    if (s > shift) {  // rescale the running prefix so exp never overflows
                        pref = pref * std::exp(shift - s) + 1.0;
                        shift = s;
                    } else {
                        pref += std::exp(s - shift);
                    }
                }
                w.add(std::exp(s - shift) / pref);
            }
            return {w.mean(), w.se()};
        }
        case FactId::mSmSbd: {
            const std::uint64_t horizon =
                static_cast<std::uint64_t>((1.0 + p.delta) * static_cast<double>(n));
            const std::uint64_t k1 = std::max<std::uint64_t>(1,
                static_cast<std::uint64_t>(p.k1_frac * static_cast<double>(n)));
            const std::uint64_t k2 = std::max<std::uint64_t>(k1,
                static_cast<std::uint64_t>(p.k2_frac * static_cast<double>(n)));
            std::uint64_t hits = 0;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0, winmin = std::numeric_limits<double>::infinity();
                bool ok = true;
                for (std::uint64_t t = 1; t <= horizon && ok; ++t) {
                    s += step.sample(rng);
                    ok = s >= 0.0;
                    if (t >= k1 && t <= k2) winmin = std::min(winmin, s);
                }
                hits += ok && winmin <= p.A;
            }
            return binom(hits);
        }
        case FactId::LDP: {
            const double thr = std::pow(static_cast<double>(n), 1.0 + p.delta);
            std::uint64_t hits = 0;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0;
                for (std::uint64_t t = 0; t < n; ++t) {
                    s += step.sample(rng);
                    if (s >= thr) { ++hits; break; }
                }
            }
            return binom(hits);
        }
        case FactId::Last1: {
            const double thr = p.a * std::sqrt(static_cast<double>(n) * std::log(static_cast<double>(n)));
            std::uint64_t hits = 0;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0, mx = -std::numeric_limits<double>::infinity();
                bool ok = true;
                for (std::uint64_t t = 0; t < n && ok; ++t) {
                    s += step.sample(rng);
                    ok = s >= -p.alpha;
                    mx = std::max(mx, s);
                }
                hits += ok && mx >= thr;
            }
            return binom(hits);
        }
        case FactId::eSMSmSbd: {
            const std::uint64_t parts = std::clamp<std::uint64_t>(replicas / 8, 64, 4096);
            TiltedEstimate t = tilted_exp_barrier(step, n, p.A, -p.alpha, parts,
                                                  std::max<std::uint64_t>(4, replicas / parts),
                                                  rng.next_u64());
            return {t.value, t.se};
        }
        case FactId::eSMSMMSmSbd: {
            Welford w;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0, mx = 0.0;
                bool ok = true;
                for (std::uint64_t t = 0; t < n && ok; ++t) {
                    s += step.sample(rng);
                    mx = std::max(mx, s);
                    ok = s >= -p.alpha && mx - s <= p.A;
                }
                w.add(ok ? std::exp(s - mx) : 0.0);
            }
            return {w.mean(), w.se()};
        }
        case FactId::eSMSMSmSbd: {
            Welford w;
            for (std::uint64_t r = 0; r < replicas; ++r) {
                double s = 0.0, mx = -std::numeric_limits<double>::infinity();
                bool ok = true;
                for (std::uint64_t t = 0; t < n && ok; ++t) {
                    s += step.sample(rng);
                    mx = std::max(mx, s);
                    ok = s >= -p.alpha;
                }
                w.add(ok && mx >= p.A ? std::exp(s - mx) : 0.0);
            }
            return {w.mean(), w.se()};
        }
    }
    throw std::domain_error("unknown fact id");
}

// the bound's shape at n, without the constant
inline double fact_shape(const StepLaw& step, FactId id, std::uint64_t n, const FactParams& p) {
    const double dn = static_cast<double>(n);
    switch (id) {
        case FactId::mSbd: return (1.0 + p.u) / std::sqrt(dn);
        case FactId::mSSbd:
            return (1.0 + p.u) * (1.0 + p.b + p.u) * (1.0 + p.b - p.a) / std::pow(dn, 1.5);
        case FactId::mSMSbd: return (1.0 + p.alpha + p.u) / dn;
        case FactId::mSMSSbd: return (1.0 + p.alpha + p.u) * (p.b - p.a) / std::pow(dn, 1.5);
        case FactId::mSMSSbd0: return (1.0 + p.alpha) / (p.A * std::sqrt(dn));
        case FactId::mSMSSbdPlus: {
            double m = std::max(1.0, std::floor(p.m_frac * dn));
            return (1.0 + p.A) * (1.0 + p.a + p.A) * (1.0 + p.alpha) /
                   (std::sqrt(m) * std::pow(dn - m, 1.5));
        }
        case FactId::SmSbd: return (1.0 + p.alpha) * (1.0 + p.alpha) / std::pow(dn, 1.5);
        case FactId::mSeSsum:
            return (1.0 + p.alpha) * (1.0 + std::log(p.b)) *
                   (1.0 + std::log(p.b) - std::log(p.a) + std::log(dn)) / dn;
        case FactId::mSeS:
            return std::exp(p.b) * (p.b + p.alpha + 1.0) * (1.0 + p.b - p.a) * (1.0 + p.alpha) /
                   std::pow(dn, 1.5);
        case FactId::eSMSbd: return 1.0 / std::pow(dn, 1.5);
        case FactId::eSMSbdPlus: return (1.0 + p.A) * std::exp(p.A) / std::pow(dn, 1.5);
        case FactId::eSbd: return 1.0 / std::sqrt(dn);
        case FactId::mSmSbd: {
            double k1 = std::max(1.0, std::floor(p.k1_frac * dn));
            return (1.0 + p.A) / std::sqrt(p.delta * dn * k1);
        }
        case FactId::LDP: return std::exp(-std::pow(dn, 1.0 + p.delta) / 2.0);
        case FactId::Last1: return 1.0;  // exponent fitted from the data, see appendix_check
        case FactId::eSMSmSbd:
            return std::exp(p.A) * (1.0 + p.alpha) * (1.0 + p.A + p.alpha) / std::pow(dn, 1.5);
        case FactId::eSMSMMSmSbd: {
            // tube decay surrogate: first eigenvalue of the drawdown chain
            double rate = step.variance() * M_PI * M_PI / (8.0 * p.A * p.A);
            return (1.0 + p.alpha) * (std::pow(dn, -7.0 / 6.0) + std::exp(-rate * dn) / dn);
        }
        case FactId::eSMSMSmSbd: return (1.0 + p.alpha) / (std::sqrt(dn) * p.A);
    }
    throw std::domain_error("unknown fact id");
}

inline FactReport appendix_check(const StepLaw& step, FactId id, std::vector<std::uint64_t> n_grid,
                                 std::uint64_t replicas, std::uint64_t seed,
                                 std::optional<FactParams> params = std::nullopt) {
    if (n_grid.empty()) n_grid = default_fact_grid(id);
    if (!std::is_sorted(n_grid.begin(), n_grid.end()))
        throw ConfigError("appendix_check: n grid must be increasing");
    if (replicas == 0) replicas = default_fact_replicas(id);
    FactReport rep;
    rep.id = id;
    rep.name = fact_to_string(id);
    rep.params = params.value_or(default_fact_params(id));

    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        Rng rng(derive_key(seed, static_cast<std::uint64_t>(id), n_grid[gi]));
        Estimate lhs = fact_lhs(step, id, n_grid[gi], rep.params, replicas, rng);
        FactPoint pt;
        pt.n = n_grid[gi];
        pt.lhs = lhs.value;
        pt.lhs_se = lhs.se;
        pt.shape = fact_shape(step, id, n_grid[gi], rep.params);
        rep.points.push_back(pt);
    }

    if (id == FactId::Last1) {
        // the bound's exponent is itself existential: fit it, then normalize
        std::vector<double> lx, ly;
        for (const auto& pt : rep.points)
            if (pt.lhs > 0.0) {
                lx.push_back(std::log2(static_cast<double>(pt.n)));
                ly.push_back(std::log2(pt.lhs));
            }
        if (lx.size() >= 2) {
            LinFit f = fit_line(lx, ly);
            double c2 = -f.slope / (rep.params.a * rep.params.a);
            rep.note = "fitted decay exponent c2 = " + fmt_double(c2);
            for (auto& pt : rep.points) {
                pt.shape = std::pow(static_cast<double>(pt.n), f.slope);
                pt.ratio = pt.lhs / pt.shape;
                pt.ratio_se = pt.lhs_se / pt.shape;
            }
            rep.stable = c2 > 0.0;
            rep.slope = -c2;
        } else {
            rep.note = "insufficient nonzero points to fit the decay";
            rep.stable = true;
        }
    } else {
        for (auto& pt : rep.points) {
            pt.ratio = pt.lhs / pt.shape;
            pt.ratio_se = pt.lhs_se / pt.shape;
        }
        std::vector<double> x, y, se;
        const std::size_t half = rep.points.size() / 2;
        for (std::size_t i = half; i < rep.points.size(); ++i) {
            x.push_back(std::log2(static_cast<double>(rep.points[i].n)));
            y.push_back(rep.points[i].ratio);
            se.push_back(rep.points[i].ratio_se);
        }
        auto [slope, slope_se] = detail::weighted_slope(x, y, se);
        rep.slope = slope;
        rep.slope_se = slope_se;
        rep.stable = slope_se == 0.0 ? true : slope <= 3.0 * slope_se;
        if (id == FactId::LDP) {
            std::uint64_t hits = 0;
            for (const auto& pt : rep.points) hits += pt.lhs > 0.0;
            rep.note = hits == 0 ? "no exceedances observed" : "exceedances observed";
            rep.stable = true;
            for (const auto& pt : rep.points)
                if (pt.lhs > pt.shape) rep.stable = false;
        }
    }

    for (const auto& pt : rep.points)
        if (pt.ratio > rep.c_hat) {
            rep.c_hat = pt.ratio;
            rep.c_hat_se = pt.ratio_se;
        }
    return rep;
}

} // namespace bcrw
