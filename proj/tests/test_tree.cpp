#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bcrw/stats.hpp"
#include "bcrw/tree.hpp"

using namespace bcrw;

namespace {

// Recompute every path statistic of a node the slow way: collect the path
// potentials root-exclusive, then fold.
struct SlowStats {
    double V, vbar, vmin, dd, pre, cond;
};

SlowStats slow_stats(const EnvTree& t, NodeHandle h) {
    std::vector<double> path;  // V(y) for phi < y <= z, root-to-node order
    for (NodeHandle cur = h; cur != t.root(); cur = t.node(cur).parent)
        path.push_back(t.node(cur).V);
    std::reverse(path.begin(), path.end());
    SlowStats s{0.0, -INFINITY, INFINITY, 0.0, 0.0, 0.0};
    double runmax = -INFINITY;
    for (double v : path) {
        s.V = v;
        runmax = std::max(runmax, v);
        s.vbar = runmax;
        s.vmin = std::min(s.vmin, v);
        s.dd = std::max(s.dd, runmax - v);
        s.pre += std::exp(v);
        s.cond = std::max(s.cond, s.pre * std::exp(-v));
    }
    return s;
}

}  // namespace

TEST_CASE("path statistic recursions hold at every node of a depth-12 tree") {
    EnvTree t(reference_law(), 20240822);
    for (uint32_t m = 0; m <= 12; ++m) t.enumerate_generation(m);
    size_t checked = 0;
    for (NodeHandle h = 1; h < t.size(); ++h) {
        const EnvNode& nd = t.node(h);
        SlowStats s = slow_stats(t, h);
        REQUIRE(nd.V == Catch::Approx(s.V).margin(1e-12));
        REQUIRE(nd.vbar == Catch::Approx(s.vbar).margin(1e-12));
        REQUIRE(nd.vmin == Catch::Approx(s.vmin).margin(1e-12));
        REQUIRE(nd.dd_max == Catch::Approx(s.dd).margin(1e-12));
        REQUIRE(nd.prefix_exp == Catch::Approx(s.pre).epsilon(1e-12));
        REQUIRE(nd.cond_max == Catch::Approx(s.cond).epsilon(1e-12));
        REQUIRE(nd.V == t.node(nd.parent).V + nd.disp);
        ++checked;
    }
    REQUIRE(checked == t.size() - 1);
    // root conventions
    const EnvNode& r = t.node(t.root());
    REQUIRE(r.V == 0.0);
    REQUIRE(std::isinf(r.vbar));
    REQUIRE(r.vbar < 0);
    REQUIRE(std::isinf(r.vmin));
    REQUIRE(r.vmin > 0);
    REQUIRE(r.prefix_exp == 0.0);
}

TEST_CASE("expansion is deterministic and idempotent") {
    EnvTree a(reference_law(), 99);
    EnvTree b(reference_law(), 99);

    // a: straight breadth-first; b: poke a path down first, then enumerate
    auto ga = a.enumerate_generation(6);
    NodeHandle cur = b.root();
    for (int d = 0; d < 6; ++d) cur = b.expand_children(cur).first;
    auto gb = b.enumerate_generation(6);

    REQUIRE(ga.size() == gb.size());
    for (size_t i = 0; i < ga.size(); ++i) {
        REQUIRE(a.node(ga[i]).V == b.node(gb[i]).V);
        REQUIRE(a.node(ga[i]).cond_max == b.node(gb[i]).cond_max);
    }

    // expanding twice returns the same range
    auto r1 = a.expand_children(a.root());
    auto r2 = a.expand_children(a.root());
    REQUIRE(r1 == r2);

    // different seed, different displacements
    EnvTree c(reference_law(), 100);
    auto rc = c.expand_children(c.root());
    REQUIRE(c.node(rc.first).disp != a.node(r1.first).disp);
}

TEST_CASE("gaussian-binary expansion yields exactly 2 children") {
    EnvTree t(reference_law(), 7);
    auto [first, count] = t.expand_children(t.root());
    REQUIRE(count == 2);
    REQUIRE(first == 1);
    REQUIRE(t.node(1).depth == 1);
    REQUIRE(t.node(2).depth == 1);
}

TEST_CASE("child displacements match the offspring sampler marginals (KS)") {
    EnvTree t(reference_law(), 4242);
    auto gen = t.enumerate_generation(17);  // 2^17 leaf displacements
    std::vector<double> from_tree;
    from_tree.reserve(gen.size());
    for (NodeHandle h : gen) from_tree.push_back(t.node(h).disp);

    Rng rng(777);
    OffspringLaw law = reference_law();
    std::vector<double> from_sampler;
    from_sampler.reserve(100000);
    while (from_sampler.size() < 100000)
        for (double d : sample_offspring(law, rng)) from_sampler.push_back(d);

    double p = ks_test_2s(from_tree, from_sampler);
    INFO("KS p=" << p);
    REQUIRE(p > 0.01);
}

TEST_CASE("generation weight sums average to 1 (mean-one martingale)") {
    // W_m is heavy-tailed (most trees tiny, rare huge ones carry the mean), so
    // the sample SE is badly biased low with 10^3 trees. Use the exact second
    // moment instead: E[W_{m+1}^2] = a E[W_m^2] + b with a = E[sum_c e^{-2A_c}]
    // and b = N(N-1)(E e^{-A})^2 for the reference law.
    const OffspringLaw law = reference_law();
    const double mu = 2.0 * std::log(2.0), s2 = mu;
    const double a = 2.0 * std::exp(-2.0 * mu + 2.0 * s2);
    const double b = 2.0 * std::pow(std::exp(-mu + 0.5 * s2), 2);
    const int m = 10;
    const double ew2 = std::pow(a, m) + b * (std::pow(a, m) - 1.0) / (a - 1.0);
    const size_t trees = 1000;
    const double se_true = std::sqrt((ew2 - 1.0) / static_cast<double>(trees));

    Welford w10;
    for (uint64_t s = 0; s < trees; ++s) {
        EnvTree t(law, derive_key(31415, s));
        w10.add(t.wd_sums(m).first);
    }
    INFO("mean W_10 = " << w10.mean() << ", exact SE " << se_true
                        << ", sample SE " << w10.se());
    REQUIRE(std::abs(w10.mean() - 1.0) <= 3.0 * se_true);
}

TEST_CASE("enumerate_generation counts and budgets") {
    EnvTree t(reference_law(), 5);
    REQUIRE(t.enumerate_generation(0).size() == 1);
    REQUIRE(t.enumerate_generation(0)[0] == t.root());
    REQUIRE(t.enumerate_generation(10).size() == 1024);
    REQUIRE_THROWS_AS(t.enumerate_generation(12, 100), ResourceError);

    EnvTree tiny(reference_law(), 5, 4);  // arena cap: root + 2 children ok, no more
    tiny.expand_children(tiny.root());
    REQUIRE_THROWS_AS(tiny.expand_children(1), ResourceError);
}

TEST_CASE("restriction set predicates on hand-built chains") {
    FrozenTreeBuilder fb;
    NodeHandle z1 = fb.add(0, 1.0);
    NodeHandle z2 = fb.add(z1, 2.0);
    EnvTree t = fb.build();
    NodeHandle h1 = fb.handle(z1), h2 = fb.handle(z2);

    // conductance stats: e^1*e^{-1} = 1 and (e^1+e^2)*e^{-2} = 1 + 1/e
    REQUIRE(t.node(h1).cond_max == Catch::Approx(1.0));
    REQUIRE(t.node(h2).cond_max == Catch::Approx(1.0 + std::exp(-1.0)));

    RestrictionParams p;
    p.n = 3;
    REQUIRE(t.in_set(h2, SetId::B2, p));

    // V-bar = 0 at a root-adjacent node is below log n + loglog n for n >= 15
    FrozenTreeBuilder fb2;
    NodeHandle flat = fb2.add(0, 0.0);
    EnvTree t2 = fb2.build();
    RestrictionParams pu;
    pu.n = 15;
    REQUIRE_FALSE(t2.in_set(fb2.handle(flat), SetId::U, pu));

    // nonnegative path potential is in B1 for alpha = 1
    RestrictionParams pb;
    pb.n = 100;
    pb.alpha = 1.0;
    REQUIRE(t.in_set(h2, SetId::B1, pb));
    REQUIRE(t.in_set(h1, SetId::B1, pb));

    // dipping below -alpha leaves B1
    FrozenTreeBuilder fb3;
    NodeHandle deep = fb3.add_chain(0, {0.5, -1.5, 0.0});
    EnvTree t3 = fb3.build();
    REQUIRE_FALSE(t3.in_set(fb3.handle(deep), SetId::B1, pb));
}

TEST_CASE("A-set predicates") {
    RestrictionParams p;
    p.n = 100000;              // log n ~ 11.5, loglog n ~ 2.44
    p.a0 = 2.0;
    p.a1 = 10.0;
    const double ln = p.log_n(), lln = p.loglog_n();

    // A1 wants drawdown in [log n / a0, log n + g(n)]
    FrozenTreeBuilder fb;
    // run up to 8, then drop by 7: drawdown 7 >= 11.5/2 = 5.76, <= 11.5+2*0.89
    NodeHandle a = fb.add_chain(0, {4.0, 8.0, 1.0});
    // drawdown too small on a monotone chain
    NodeHandle b = fb.add_chain(0, {1.0, 2.0, 3.0});
    EnvTree t = fb.build();
    REQUIRE(t.in_set(fb.handle(a), SetId::A1, p));
    REQUIRE_FALSE(t.in_set(fb.handle(b), SetId::A1, p));

    // A2 is a band on vbar
    FrozenTreeBuilder fb2;
    NodeHandle mid = fb2.add_chain(0, {ln + lln + 0.5, ln + lln});
    NodeHandle low = fb2.add_chain(0, {0.5, 0.2});
    NodeHandle high = fb2.add_chain(0, {p.a1 * ln * std::sqrt(lln) + 1.0, 1.0});
    EnvTree t2 = fb2.build();
    REQUIRE(t2.in_set(fb2.handle(mid), SetId::A2, p));
    REQUIRE_FALSE(t2.in_set(fb2.handle(low), SetId::A2, p));
    REQUIRE_FALSE(t2.in_set(fb2.handle(high), SetId::A2, p));

    // A3: the running max must be refreshed after depth |z| - |z|^{1/3}
    FrozenTreeBuilder fb3;
    // depth 8, cutoff floor(8 - 2) = 6; max attained at depth 7 -> in A3
    NodeHandle fresh = fb3.add_chain(0, {1, 2, 3, 4, 5, 6, 7, 6.5});
    // max attained at depth 2, flat after -> not in A3
    NodeHandle stale = fb3.add_chain(0, {1, 5, 1, 1, 1, 1, 1, 1});
    EnvTree t3 = fb3.build();
    REQUIRE(t3.in_set(fb3.handle(fresh), SetId::A3, p));
    REQUIRE_FALSE(t3.in_set(fb3.handle(stale), SetId::A3, p));
}

TEST_CASE("drawdown set nesting: L_{delta+2} inside B2^delta inside L_delta") {
    EnvTree t(reference_law(), 987);
    for (uint32_t m = 0; m <= 12; ++m) t.enumerate_generation(m);

    RestrictionParams base;
    base.n = 10000;
    base.delta = 0.5;
    RestrictionParams tight = base;
    tight.delta = base.delta + 2.0;

    size_t in_tight = 0, in_b2d = 0;
    for (NodeHandle h = 1; h < t.size(); ++h) {
        if (t.in_set(h, SetId::L_delta, tight)) {
            ++in_tight;
            REQUIRE(t.in_set(h, SetId::B2_delta, base));
        }
        if (t.in_set(h, SetId::B2_delta, base)) {
            ++in_b2d;
            REQUIRE(t.in_set(h, SetId::L_delta, base));
        }
    }
    INFO("nodes in L_{delta+2}: " << in_tight << ", in B2^delta: " << in_b2d);
    REQUIRE(in_tight > 0);  // the test must actually exercise the inclusion
}

TEST_CASE("restriction params validation") {
    RestrictionParams p;
    p.n = 2;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p.n = 1000;
    p.a0 = 1.0;
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p.a0 = 2.0;
    p.delta = 8.0;  // s_n < 1
    REQUIRE_THROWS_AS(p.validate(), ConfigError);
    p.delta = 0.5;
    p.validate();
    REQUIRE(p.g() == Catch::Approx(2.0 * std::log(std::log(1000.0))));
    p.g_of_n = 3.0;
    REQUIRE(p.g() == 3.0);
}

TEST_CASE("tree dump lists path, displacement, potential") {
    FrozenTreeBuilder fb;
    NodeHandle c0 = fb.add(0, 0.5);
    fb.add(0, -0.25);
    fb.add(c0, 1.5);
    EnvTree t = fb.build();
    std::ostringstream os;
    t.dump(os);
    std::string out = os.str();
    REQUIRE(out.find("/, 0, 0\n") != std::string::npos);
    REQUIRE(out.find("/0, 0.5, 0.5") != std::string::npos);
    REQUIRE(out.find("/1, -0.25, -0.25") != std::string::npos);
    REQUIRE(out.find("/0/0, 1, 1.5") != std::string::npos);
}

TEST_CASE("frozen trees fold the same statistics as sampled ones") {
    FrozenTreeBuilder fb;
    NodeHandle deep = fb.add_chain(0, {0.3, -0.7, 0.9, 0.1});
    fb.add(0, 2.0);
    EnvTree t = fb.build();
    REQUIRE(t.frozen());
    NodeHandle h = fb.handle(deep);
    SlowStats s = slow_stats(t, h);
    const EnvNode& nd = t.node(h);
    REQUIRE(nd.V == Catch::Approx(s.V).margin(1e-15));
    REQUIRE(nd.vbar == Catch::Approx(s.vbar).margin(1e-15));
    REQUIRE(nd.vmin == Catch::Approx(s.vmin).margin(1e-15));
    REQUIRE(nd.dd_max == Catch::Approx(s.dd).margin(1e-15));
    REQUIRE(nd.prefix_exp == Catch::Approx(s.pre).epsilon(1e-15));
    REQUIRE(nd.cond_max == Catch::Approx(s.cond).epsilon(1e-15));
    // leaves are expanded with no children; walker treats them as dead ends
    REQUIRE(t.node(h).expanded());
    REQUIRE(t.node(h).n_children == 0);
}
