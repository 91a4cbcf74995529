#pragma once
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "bcrw/errors.hpp"
#include "bcrw/rng.hpp"
#include "bcrw/tree.hpp"

namespace bcrw {

// The reflecting parent of the root: a virtual position, never a tree node,
// never counted in range or generation statistics. Every step spent there
// still counts toward the step budget.
inline constexpr NodeHandle REFLECTOR = 0xFFFFFFFDu;

enum class WalkMode { fixed_steps, excursions };

// A set of restriction predicates whose intersection is tallied per
// generation at first-visit time.
struct TrackedSet {
    std::string label;
    std::vector<SetId> members;
};

struct WalkConfig {
    WalkMode mode = WalkMode::fixed_steps;
    uint64_t n = 1000;             // steps, or excursion count
    uint64_t seed = 1;             // walk stream, independent of the tree seed
    uint64_t max_steps = 0;        // 0 = unlimited; guard for excursion mode
    uint64_t return_times_cap = 100000;
    bool collect_full_front = false;
    std::vector<TrackedSet> tracked;
    RestrictionParams params;      // used by tracked-set predicates
};

struct WalkRecord {
    WalkMode mode;
    uint64_t n = 0;
    uint64_t steps_taken = 0;
    std::vector<uint64_t> return_times;  // first return_times_cap of them
    uint64_t returns_total = 0;
    std::map<uint32_t, uint64_t> first_visit_gen_counts;
    uint64_t range = 0;
    uint32_t max_depth = 0;
    std::optional<uint32_t> full_front;
    std::map<std::string, std::map<uint32_t, uint64_t>> restricted_counts;

    bool operator==(const WalkRecord&) const = default;
};

// Budget abort that still hands back everything collected so far.
struct WalkBudgetError : ResourceError {
    WalkRecord partial;
    explicit WalkBudgetError(std::string msg, WalkRecord rec)
        : ResourceError(std::move(msg)), partial(std::move(rec)) {}
};

// Transition distribution out of a node: the parent edge carries weight
// e^{-V(z)}, each child v weight e^{-V(v)}. First entry is the parent move.
inline std::vector<std::pair<NodeHandle, double>> step_distribution(EnvTree& tree, NodeHandle h) {
    tree.expand_children(h);
    const EnvNode& nd = tree.node(h);
    std::vector<std::pair<NodeHandle, double>> out;
    out.reserve(nd.n_children + 1);
    double total = std::exp(-nd.V);
    out.emplace_back(h == tree.root() ? REFLECTOR : nd.parent, total);
    for (uint32_t i = 0; i < nd.n_children; ++i) {
        double w = std::exp(-tree.node(nd.first_child + i).V);
        out.emplace_back(nd.first_child + i, w);
        total += w;
    }
    for (auto& e : out) e.second /= total;
    return out;
}

// One step of the quenched walk. Weights are recomputed from stored
// potentials on every visit; nothing is cached per node.
inline NodeHandle step(EnvTree& tree, NodeHandle pos, Rng& rng) {
    if (pos == REFLECTOR) return tree.root();
    tree.expand_children(pos);
    const EnvNode& nd = tree.node(pos);
    const double wpar = std::exp(-nd.V);
    double total = wpar;
    const NodeHandle fc = nd.first_child;
    const uint32_t nc = nd.n_children;
    for (uint32_t i = 0; i < nc; ++i) total += std::exp(-tree.node(fc + i).V);
    double r = rng.u01() * total;
    if (r < wpar || nc == 0) return pos == tree.root() ? REFLECTOR : nd.parent;
    r -= wpar;
    for (uint32_t i = 0; i + 1 < nc; ++i) {
        const double w = std::exp(-tree.node(fc + i).V);
        if (r < w) return fc + i;
        r -= w;
    }
    return fc + nc - 1;
}

namespace detail {

// Largest generation entirely visited, checked by enumerating generations of
// visited parents. Bounded: beyond depth 64 (or a dead end) we stop.
inline std::optional<uint32_t> full_front(EnvTree& tree, uint32_t epoch) {
    uint32_t best = 0;
    for (uint32_t g = 1; g <= 64; ++g) {
        std::vector<NodeHandle> gen = tree.enumerate_generation(g);
        if (gen.empty()) break;
        bool all = true;
        for (NodeHandle h : gen)
            if (tree.node(h).visit_epoch != epoch) {
                all = false;
                break;
            }
        if (!all) break;
        best = g;
    }
    return best;
}

}  // namespace detail

inline WalkRecord run_walk(EnvTree& tree, const WalkConfig& cfg) {
    WalkRecord rec;
    rec.mode = cfg.mode;
    rec.n = cfg.n;
    for (const TrackedSet& ts : cfg.tracked) rec.restricted_counts[ts.label];

    const uint32_t epoch = tree.next_epoch();
    Rng rng(derive_key(cfg.seed, 0x77616c6bULL));  // walk stream salt
    NodeHandle pos = tree.root();
    uint64_t m = 0;

    const bool excursion_mode = cfg.mode == WalkMode::excursions;
    while (true) {
        if (excursion_mode ? rec.returns_total >= cfg.n : m >= cfg.n) break;
        if (cfg.max_steps && m >= cfg.max_steps)
            throw WalkBudgetError("walk step budget of " + std::to_string(cfg.max_steps) +
                                      " exhausted",
                                  rec);
        pos = step(tree, pos, rng);
        ++m;
        rec.steps_taken = m;
        if (pos == REFLECTOR) continue;

        EnvNode& nd = tree.node(pos);
        if (nd.depth > rec.max_depth) rec.max_depth = nd.depth;

        bool terminal;
        if (pos == tree.root()) {
            ++rec.returns_total;
            if (rec.return_times.size() < cfg.return_times_cap) rec.return_times.push_back(m);
            terminal = excursion_mode ? rec.returns_total >= cfg.n : m >= cfg.n;
        } else {
            terminal = !excursion_mode && m >= cfg.n;
        }

        if (nd.visit_epoch != epoch) {
            nd.visit_epoch = epoch;
            // a site discovered on the terminal step is occupied but not part
            // of the visited-site counts (strict first-visit-time convention)
            if (!terminal) {
                ++rec.range;
                ++rec.first_visit_gen_counts[nd.depth];
                for (const TrackedSet& ts : cfg.tracked) {
                    bool in = true;
                    for (SetId s : ts.members)
                        if (!tree.in_set(pos, s, cfg.params)) {
                            in = false;
                            break;
                        }
                    if (in) ++rec.restricted_counts[ts.label][nd.depth];
                }
            }
        }
    }

    if (cfg.collect_full_front) rec.full_front = detail::full_front(tree, epoch);
    return rec;
}

// Partition of the visited-site counts against the critical generation
// window [eps (log n)^2, (log n)^2 / eps].
inline std::tuple<uint64_t, uint64_t, uint64_t> critical_window_mass(const WalkRecord& rec,
                                                                     double eps, uint64_t n) {
    if (eps <= 0.0) throw std::domain_error("critical_window_mass: eps must be > 0");
    const double l2 = std::pow(std::log(static_cast<double>(n)), 2);
    const double lo = eps * l2, hi = l2 / eps;
    uint64_t inside = 0, below = 0, above = 0;
    for (const auto& [gen, cnt] : rec.first_visit_gen_counts) {
        if (gen < lo)
            below += cnt;
        else if (gen > hi)
            above += cnt;
        else
            inside += cnt;
    }
    return {inside, below, above};
}

}  // namespace bcrw
