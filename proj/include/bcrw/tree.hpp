#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "bcrw/errors.hpp"
#include "bcrw/law.hpp"
#include "bcrw/rng.hpp"

namespace bcrw {

using NodeHandle = uint32_t;
inline constexpr NodeHandle NO_NODE = 0xFFFFFFFFu;
inline constexpr NodeHandle UNEXPANDED = 0xFFFFFFFEu;

// Per-node potential statistics, all maintained by one-step recursions at
// expansion time. "Path" means the ancestors strictly below the root up to
// and including the node itself.
struct EnvNode {
    double disp;        // displacement relative to parent
    double V;           // potential: sum of displacements along the path
    double vbar;        // running max of V over the path (-inf at root)
    double vmin;        // running min of V over the path (+inf at root)
    double dd_max;      // max drawdown: max over path of (vbar(y) - V(y))
    double prefix_exp;  // sum of e^{V(y)} over the path
    double cond_max;    // max over path of prefix_exp(y) * e^{-V(y)}
    uint64_t key;       // per-node RNG key, a pure function of the path
    NodeHandle parent;  // NO_NODE at root
    NodeHandle first_child;  // UNEXPANDED until realized; NO_NODE if childless
    uint32_t n_children;
    uint32_t depth;
    uint32_t visit_epoch;  // walker bookkeeping; 0 = never visited

    bool expanded() const { return first_child != UNEXPANDED; }
};

enum class SetId { U, L_delta, B1, B2, B2_delta, A1, A2, A3 };

// Knobs shared by every restriction-set predicate. n is the walk horizon the
// sets are tuned to, not a tree property.
struct RestrictionParams {
    uint64_t n = 1000;
    double alpha = 5.0;
    double delta = 0.5;
    double a0 = 2.0;       // must be > 1
    double a1 = 10.0;
    double g_of_n = 0.0;   // 0 = use default 2*loglog(n)

    double log_n() const { return std::log(static_cast<double>(n)); }
    double loglog_n() const { return std::log(log_n()); }
    double g() const { return g_of_n > 0.0 ? g_of_n : 2.0 * loglog_n(); }
    double s_n() const { return static_cast<double>(n) * std::pow(log_n(), -1.0 - delta); }

    void validate() const {
        if (n < 3) throw ConfigError("restriction params: n too small (log log n undefined)");
        if (alpha < 0.0) throw ConfigError("restriction params: alpha must be >= 0");
        if (delta <= 0.0) throw ConfigError("restriction params: delta must be > 0");
        if (a0 <= 1.0) throw ConfigError("restriction params: a0 must be > 1");
        if (a1 <= 0.0) throw ConfigError("restriction params: a1 must be > 0");
        if (s_n() <= 1.0) throw ConfigError("restriction params: s_n <= 1, n too small for this delta");
    }
};

class FrozenTreeBuilder;

// Lazily expanded branching-potential tree. Node randomness is counter-based:
// each node's key is derived from its parent's key and child index, so the
// subtree below any node is a pure function of (seed, path), independent of
// expansion order. Handles are indices into a grow-only arena.
class EnvTree {
  public:
    static constexpr uint64_t DEFAULT_NODE_CAP = uint64_t(1) << 28;

    EnvTree(OffspringLaw law, uint64_t seed, uint64_t node_cap = DEFAULT_NODE_CAP)
        : law_(std::move(law)), seed_(seed), node_cap_(node_cap) {
        if (!law_.calibrated) throw ConfigError("EnvTree: law must be boundary-calibrated");
        EnvNode root{};
        root.disp = 0.0;
        root.V = 0.0;
        root.vbar = -std::numeric_limits<double>::infinity();
        root.vmin = std::numeric_limits<double>::infinity();
        root.dd_max = 0.0;
        root.prefix_exp = 0.0;
        root.cond_max = 0.0;
        root.key = derive_key(seed, 0x74726565ULL);  // tree root salt
        root.parent = NO_NODE;
        root.first_child = UNEXPANDED;
        root.n_children = 0;
        root.depth = 0;
        root.visit_epoch = 0;
        nodes_.push_back(root);
    }

    NodeHandle root() const { return 0; }
    size_t size() const { return nodes_.size(); }
    uint64_t seed() const { return seed_; }
    const OffspringLaw& law() const { return law_; }

    EnvNode& node(NodeHandle h) { return nodes_[h]; }
    const EnvNode& node(NodeHandle h) const { return nodes_[h]; }

    // Realize the children of h (idempotent). Returns [first, first+count).
    std::pair<NodeHandle, uint32_t> expand_children(NodeHandle h) {
        EnvNode& nd = nodes_[h];
        if (nd.expanded()) return {nd.first_child, nd.n_children};
        Rng litter_rng(derive_key(nd.key, 0x6c697474ULL));  // litter salt
        std::vector<double> disps = sample_offspring(law_, litter_rng);
        uint32_t count = static_cast<uint32_t>(disps.size());
        if (nodes_.size() + count > node_cap_)
            throw ResourceError("tree arena cap of " + std::to_string(node_cap_) +
                                " nodes exceeded at depth " + std::to_string(nd.depth + 1));
        NodeHandle first = count ? static_cast<NodeHandle>(nodes_.size()) : NO_NODE;
        // capture parent stats by value: push_back may reallocate
        const double pV = nd.V, pvbar = nd.vbar, pvmin = nd.vmin;
        const double pdd = nd.dd_max, ppre = nd.prefix_exp;
        const double pcm = nd.cond_max;
        const uint64_t pkey = nd.key;
        const uint32_t pdepth = nd.depth;
        for (uint32_t i = 0; i < count; ++i) {
            EnvNode c{};
            c.disp = disps[i];
            c.V = pV + disps[i];
            c.vbar = std::max(pvbar, c.V);
            c.vmin = std::min(pvmin, c.V);
            c.dd_max = std::max(pdd, c.vbar - c.V);
            c.prefix_exp = ppre + std::exp(c.V);
            c.cond_max = std::max(pcm, c.prefix_exp * std::exp(-c.V));
            c.key = derive_key(pkey, i + 1);
            c.parent = h;
            c.first_child = UNEXPANDED;
            c.n_children = 0;
            c.depth = pdepth + 1;
            c.visit_epoch = 0;
            nodes_.push_back(c);
        }
        EnvNode& nd2 = nodes_[h];
        nd2.first_child = first;
        nd2.n_children = count;
        return {first, count};
    }

    // All nodes at depth m in child-index lexicographic order.
    std::vector<NodeHandle> enumerate_generation(uint32_t m, uint64_t max_nodes = DEFAULT_NODE_CAP) {
        std::vector<NodeHandle> cur{root()};
        for (uint32_t d = 0; d < m; ++d) {
            std::vector<NodeHandle> next;
            next.reserve(cur.size() * 2);
            for (NodeHandle h : cur) {
                auto [first, count] = expand_children(h);
                for (uint32_t i = 0; i < count; ++i) next.push_back(first + i);
                if (next.size() > max_nodes)
                    throw ResourceError("enumerate_generation: budget of " +
                                        std::to_string(max_nodes) + " nodes exceeded at depth " +
                                        std::to_string(d + 1));
            }
            cur = std::move(next);
            if (cur.empty()) break;  // lineage died out
        }
        return cur;
    }

    bool in_set(NodeHandle h, SetId set, const RestrictionParams& p) const {
        const EnvNode& nd = nodes_[h];
        const double ln = p.log_n(), lln = p.loglog_n();
        switch (set) {
            case SetId::U:
                return nd.vbar >= ln + lln;
            case SetId::L_delta:
                return nd.dd_max <= ln - (1.0 + p.delta) * lln;
            case SetId::B1:
                return nd.vmin >= -p.alpha;
            case SetId::B2:
                return nd.cond_max <= static_cast<double>(p.n);
            case SetId::B2_delta:
                return nd.cond_max <= p.s_n();
            case SetId::A1:
                return nd.dd_max >= ln / p.a0 && nd.dd_max <= ln + p.g();
            case SetId::A2:
                return nd.vbar >= ln + lln && nd.vbar <= p.a1 * ln * std::sqrt(lln);
            case SetId::A3: {
                // compare vbar against the prefix max at a mid-path cutoff
                const double z = static_cast<double>(nd.depth);
                const uint32_t cutoff = static_cast<uint32_t>(std::floor(z - std::cbrt(z)));
                const EnvNode* a = &nd;
                while (a->depth > cutoff) a = &nodes_[a->parent];
                return nd.vbar > a->vbar;
            }
        }
        return false;  // unreachable
    }

    // Child-index path from the root, e.g. "/" for the root, "/1/0" below it.
    std::string path_string(NodeHandle h) const {
        if (h == root()) return "/";
        std::vector<uint32_t> idx;
        for (NodeHandle cur = h; cur != root(); cur = nodes_[cur].parent)
            idx.push_back(cur - nodes_[nodes_[cur].parent].first_child);
        std::string out;
        for (auto it = idx.rbegin(); it != idx.rend(); ++it)
            out += "/" + std::to_string(*it);
        return out;
    }

    // One expanded node per line: path, displacement, V.
    void dump(std::ostream& os) const {
        for (NodeHandle h = 0; h < nodes_.size(); ++h)
            os << path_string(h) << ", " << nodes_[h].disp << ", " << nodes_[h].V << "\n";
    }

    // Sums used everywhere: W_m = sum e^{-V}, D_m = sum V e^{-V} over depth m.
    std::pair<double, double> wd_sums(uint32_t m, uint64_t max_nodes = DEFAULT_NODE_CAP) {
        double w = 0.0, d = 0.0;
        for (NodeHandle h : enumerate_generation(m, max_nodes)) {
            const EnvNode& nd = nodes_[h];
            const double e = std::exp(-nd.V);
            w += e;
            d += nd.V * e;
        }
        return {w, d};
    }

    bool frozen() const { return frozen_; }

    // Visit-flag epochs: walkers stamp nodes with the current epoch instead of
    // clearing flags, so many walks can share one environment cheaply.
    uint32_t next_epoch() { return ++walk_epoch_; }
    uint32_t current_epoch() const { return walk_epoch_; }

  private:
    friend class FrozenTreeBuilder;
    EnvTree(OffspringLaw law, std::vector<EnvNode> arena)
        : law_(std::move(law)), seed_(0), node_cap_(DEFAULT_NODE_CAP),
          nodes_(std::move(arena)), frozen_(true) {}

    OffspringLaw law_;
    uint64_t seed_;
    uint64_t node_cap_;
    std::vector<EnvNode> nodes_;
    bool frozen_ = false;
    uint32_t walk_epoch_ = 0;
};

// Hand-built finite environments with explicit potentials, for oracle tests
// and trap constructions. build() lays the nodes out breadth-first (children
// contiguous) and returns a fully expanded tree; handle(b) translates a
// builder handle into the tree handle.
class FrozenTreeBuilder {
  public:
    FrozenTreeBuilder() {
        recs_.push_back({0.0, NO_NODE, {}});
    }

    // Add a child with absolute potential V; returns its builder handle.
    NodeHandle add(NodeHandle parent, double V) {
        NodeHandle h = static_cast<NodeHandle>(recs_.size());
        recs_[parent].children.push_back(h);
        recs_.push_back({V, parent, {}});
        return h;
    }

    // Chain below `from` with the given absolute potentials; deepest handle.
    NodeHandle add_chain(NodeHandle from, const std::vector<double>& Vs) {
        NodeHandle cur = from;
        for (double v : Vs) cur = add(cur, v);
        return cur;
    }

    EnvTree build() const {
        const size_t n = recs_.size();
        std::vector<NodeHandle> order;  // BFS over builder handles
        order.reserve(n);
        order.push_back(0);
        map_.assign(n, NO_NODE);
        map_[0] = 0;
        for (size_t i = 0; i < order.size(); ++i)
            for (NodeHandle c : recs_[order[i]].children) {
                map_[c] = static_cast<NodeHandle>(order.size());
                order.push_back(c);
            }
        std::vector<EnvNode> arena(n);
        for (size_t i = 0; i < n; ++i) {
            const Rec& r = recs_[order[i]];
            EnvNode& nd = arena[i];
            nd.key = 0;
            nd.visit_epoch = 0;
            nd.n_children = static_cast<uint32_t>(r.children.size());
            nd.first_child = r.children.empty() ? NO_NODE : map_[r.children.front()];
            if (r.parent == NO_NODE) {
                nd.disp = 0.0;
                nd.V = 0.0;
                nd.vbar = -std::numeric_limits<double>::infinity();
                nd.vmin = std::numeric_limits<double>::infinity();
                nd.dd_max = 0.0;
                nd.prefix_exp = 0.0;
                nd.cond_max = 0.0;
                nd.parent = NO_NODE;
                nd.depth = 0;
            } else {
                const EnvNode& p = arena[map_[r.parent]];
                nd.V = r.V;
                nd.disp = r.V - p.V;
                nd.vbar = std::max(p.vbar, nd.V);
                nd.vmin = std::min(p.vmin, nd.V);
                nd.dd_max = std::max(p.dd_max, nd.vbar - nd.V);
                nd.prefix_exp = p.prefix_exp + std::exp(nd.V);
                nd.cond_max = std::max(p.cond_max, nd.prefix_exp * std::exp(-nd.V));
                nd.parent = map_[r.parent];
                nd.depth = p.depth + 1;
            }
        }
        return EnvTree(reference_law(), std::move(arena));
    }

    // Builder handle -> tree handle; valid after build().
    NodeHandle handle(NodeHandle builder_handle) const { return map_[builder_handle]; }

    size_t size() const { return recs_.size(); }

  private:
    struct Rec {
        double V;
        NodeHandle parent;
        std::vector<NodeHandle> children;
    };
    std::vector<Rec> recs_;
    mutable std::vector<NodeHandle> map_;
};

}  // namespace bcrw
