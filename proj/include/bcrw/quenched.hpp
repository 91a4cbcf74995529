#pragma once
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "bcrw/errors.hpp"
#include "bcrw/tree.hpp"

namespace bcrw {

// Probability of leaving the root toward its virtual parent, from the same
// normalized weights the walker uses.
inline double p_root_reflect(EnvTree& tree) {
    tree.expand_children(tree.root());
    const EnvNode& r = tree.node(tree.root());
    double denom = 1.0;  // e^{-V(root)} = 1
    for (uint32_t i = 0; i < r.n_children; ++i)
        denom += std::exp(-tree.node(r.first_child + i).V);
    return 1.0 / denom;
}

// Probability that an excursion from the root hits z before returning:
// p(root, parent) divided by the resistance prefix sum e^{V} along the path.
inline double az(EnvTree& tree, NodeHandle h) {
    if (h == tree.root()) throw std::domain_error("az: undefined at the root");
    return p_root_reflect(tree) / tree.node(h).prefix_exp;
}

struct HittingSolve {
    std::vector<double> h;  // per arena node: P_x(T_targets < T_root)
    double from_root;       // P(excursion from the root hits a target first)
};

// Exact absorbing-set solve by leaf-to-root elimination. Unexpanded nodes act
// as reflecting leaves, which is exact for hitting probabilities: subtrees
// containing neither root nor targets carry no current.
inline HittingSolve hitting_oracle(EnvTree& tree, const std::vector<NodeHandle>& targets) {
    const size_t n = tree.size();
    if (n > 10000)
        throw ResourceError("hitting_oracle: tree too large (" + std::to_string(n) + " nodes)");
    std::vector<char> absorbing(n, 0);
    for (NodeHandle t : targets) {
        if (t == tree.root()) throw std::domain_error("hitting_oracle: root cannot be a target");
        absorbing[t] = 1;
    }

    // upward sweep: h(x) = alpha[x] + beta[x] * h(parent(x)); children always
    // sit after their parent in the arena, so reverse order is leaf-to-root
    std::vector<double> alpha(n, 0.0), beta(n, 0.0);
    for (size_t x = n; x-- > 1;) {
        if (absorbing[x]) {
            alpha[x] = 1.0;
            beta[x] = 0.0;
            continue;
        }
        const EnvNode& nd = tree.node(static_cast<NodeHandle>(x));
        const double wpar = std::exp(-nd.V);
        double total = wpar, s_alpha = 0.0, s_beta = 0.0;
        if (nd.expanded())
            for (uint32_t i = 0; i < nd.n_children; ++i) {
                const NodeHandle c = nd.first_child + i;
                const double w = std::exp(-tree.node(c).V);
                total += w;
                s_alpha += w * alpha[c];
                s_beta += w * beta[c];
            }
        const double denom = total - s_beta;  // total * (1 - sum p_c beta_c)
        alpha[x] = s_alpha / denom;
        beta[x] = wpar / denom;
    }

    // downward fill with h(root) = 0
    HittingSolve out;
    out.h.assign(n, 0.0);
    for (size_t x = 1; x < n; ++x)
        out.h[x] = absorbing[x] ? 1.0 : alpha[x] + beta[x] * out.h[tree.node(x).parent];

    const EnvNode& r = tree.node(tree.root());
    double total = 1.0, acc = 0.0;
    for (uint32_t i = 0; i < r.n_children; ++i) {
        const NodeHandle c = r.first_child + i;
        const double w = std::exp(-tree.node(c).V);
        total += w;
        acc += w * out.h[c];
    }
    out.from_root = acc / total;
    return out;
}

namespace detail {

inline bool in_all(const EnvTree& tree, NodeHandle h, const std::vector<SetId>& sets,
                   const RestrictionParams& params) {
    for (SetId s : sets)
        if (!tree.in_set(h, s, params)) return false;
    return true;
}

// (1 - a)^k without cancellation for tiny a
inline double pow1m(double a, uint64_t k) {
    return std::exp(static_cast<double>(k) * std::log1p(-a));
}

inline NodeHandle lca(const EnvTree& tree, NodeHandle u, NodeHandle v) {
    while (u != v) {
        if (tree.node(u).depth >= tree.node(v).depth)
            u = tree.node(u).parent;
        else
            v = tree.node(v).parent;
    }
    return u;
}

}  // namespace detail

struct QuenchedMoments {
    double k_mean = 0.0;   // sum of 1 - (1-a_z)^n over the set
    double k_tilde = 0.0;  // n * sum of a_z
};

// Truncated quenched means of the generation-ell visited-site count before
// the n-th return. Empty `sets` means no restriction.
inline QuenchedMoments quenched_mean(EnvTree& tree, uint32_t ell, uint64_t n,
                                     const std::vector<SetId>& sets,
                                     const RestrictionParams& params,
                                     uint64_t max_nodes = EnvTree::DEFAULT_NODE_CAP) {
    QuenchedMoments out;
    const double p = p_root_reflect(tree);
    for (NodeHandle h : tree.enumerate_generation(ell, max_nodes)) {
        if (!detail::in_all(tree, h, sets, params)) continue;
        const double a = p / tree.node(h).prefix_exp;
        out.k_mean += -std::expm1(static_cast<double>(n) * std::log1p(-a));
        out.k_tilde += static_cast<double>(n) * a;
    }
    return out;
}

struct QuenchedVariance {
    double exact = 0.0;
    double upper_bound = 0.0;
};

// Exact quenched variance of the restricted generation-ell count, plus its
// closed-form upper bound. Quadratic in the generation size: pair terms use
// one absorbing solve per pair, the bound only resistance prefix ratios at
// the latest common ancestor.
inline QuenchedVariance quenched_variance(EnvTree& tree, uint32_t ell, uint64_t n,
                                          const std::vector<SetId>& sets,
                                          const RestrictionParams& params) {
    std::vector<NodeHandle> members;
    for (NodeHandle h : tree.enumerate_generation(ell))
        if (detail::in_all(tree, h, sets, params)) members.push_back(h);
    if (members.size() > 1024)
        throw ResourceError("quenched_variance: generation too large (" +
                            std::to_string(members.size()) + " members)");

    const double p = p_root_reflect(tree);
    auto a_of = [&](NodeHandle h) { return p / tree.node(h).prefix_exp; };

    QuenchedVariance out;
    for (NodeHandle z : members) {
        const double a = a_of(z);
        out.exact += detail::pow1m(a, n) - detail::pow1m(a, 2 * n);
        out.upper_bound += static_cast<double>(n) * a;
    }
    for (size_t i = 0; i < members.size(); ++i)
        for (size_t j = i + 1; j < members.size(); ++j) {
            const NodeHandle v = members[i], z = members[j];
            const double av = a_of(v), azz = a_of(z);
            const double avz = hitting_oracle(tree, {v, z}).from_root;
            out.exact += 2.0 * (detail::pow1m(avz, n) - detail::pow1m(av, n) * detail::pow1m(azz, n));
            const double pre_lca = tree.node(detail::lca(tree, v, z)).prefix_exp;
            out.upper_bound += static_cast<double>(n) * azz * pre_lca / tree.node(v).prefix_exp +
                               static_cast<double>(n) * av * pre_lca / tree.node(z).prefix_exp;
        }

    if (out.exact > out.upper_bound * (1.0 + 1e-9) + 1e-12)
        throw std::logic_error("quenched_variance: exact value exceeded its upper bound");
    return out;
}

struct WFunctionals {
    double w = 0.0;                // sum e^{-V} over the generation
    double d = 0.0;                // sum V e^{-V}
    double w_f = 0.0;              // barrier functional, e^{±V} cancelled
    double w_f_restricted = 0.0;   // with the min-potential floor indicator
    double d_alpha = 0.0;          // floor-restricted derivative sum, renewal-weighted
};

// Generation-m sums of the additive and derivative weights and of the
// barrier functional sqrt(m) e^{V}/prefix * 1{vbar >= b} 1{drawdown <= a}.
// The e^{-V} weight cancels the e^{V} in the functional, leaving
// sqrt(m)/prefix_exp. alpha adds the 1{vmin >= -alpha} floor; R (a renewal
// table) additionally weights d_alpha by R(alpha + V).
inline WFunctionals w_functionals(EnvTree& tree, uint32_t m, double a, double b,
                                  std::optional<double> alpha = std::nullopt,
                                  const std::function<double(double)>& R = nullptr,
                                  uint64_t max_nodes = EnvTree::DEFAULT_NODE_CAP) {
    WFunctionals out;
    const double root_m = std::sqrt(static_cast<double>(m));
    for (NodeHandle h : tree.enumerate_generation(m, max_nodes)) {
        const EnvNode& nd = tree.node(h);
        const double e = std::exp(-nd.V);
        out.w += e;
        out.d += nd.V * e;
        // degenerate drawdown budget: empty by convention
        const bool in_f = a > 0.0 && nd.vbar >= b && nd.dd_max <= a && m >= 1;
        if (in_f) out.w_f += root_m / nd.prefix_exp;
        if (alpha && nd.vmin >= -*alpha) {
            if (in_f) out.w_f_restricted += root_m / nd.prefix_exp;
            if (R) out.d_alpha += R(*alpha + nd.V) * e;
        }
    }
    if (!alpha) out.w_f_restricted = out.w_f;
    return out;
}

}  // namespace bcrw
