#include "descan/rng.hpp"
#include "descan/stattests.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace descan;

namespace {

std::vector<std::vector<double>> random_groups(CounterRng& rng, std::size_t k, std::size_t max_size, int levels) {
    std::vector<std::vector<double>> g(k);
    for (auto& v : g) {
        const std::size_t n = 1 + rng.below(max_size);
        for (std::size_t i = 0; i < n; ++i) v.push_back(static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))));
    }
    return g;
}

std::vector<std::vector<double>> random_dist(CounterRng& rng, std::size_t n) {
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = rng.uniform();
    return d;
}

}  // namespace

TEST_SUITE("stattests") {

TEST_CASE("midranks and tie term") {
    const std::vector<double> v{3, 1, 3, 2, 3};
    CHECK(midranks(v) == std::vector<double>{4, 1, 4, 2, 4});
    CHECK(tie_term(v) == 24.0);
    CHECK(midranks(std::vector<double>{}).empty());
    CounterRng rng(3, 0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x;
        for (int i = 0; i < 30; ++i) x.push_back(static_cast<double>(rng.below(7)));
        CHECK(midranks(x) == oracle::midranks_by_counting(x));
    }
}

TEST_CASE("Kruskal-Wallis: {1,2,3},{4,5,6},{7,8,9} gives H = 7.2 exactly") {
    const auto r = kruskal_wallis({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
    CHECK(r.statistic == 7.2);
    CHECK(r.df == 2);
    CHECK(r.n == 9);
    CHECK(r.p_value == doctest::Approx(std::exp(-3.6)).epsilon(1e-12));  // chi-square df 2 tail
    CHECK(r.method == "kruskal_wallis");
}

TEST_CASE("Kruskal-Wallis: identical groups and all-equal values") {
    const auto same = kruskal_wallis({{1, 2, 3}, {1, 2, 3}});
    CHECK(same.statistic == doctest::Approx(0.0));
    CHECK(same.p_value == doctest::Approx(1.0));
    const auto flat = kruskal_wallis({{5, 5}, {5, 5, 5}});
    CHECK(flat.statistic == 0.0);
    CHECK(flat.p_value == 1.0);
    CHECK_THROWS_AS(kruskal_wallis({{1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(kruskal_wallis({{1, 2}, {}}), std::invalid_argument);
    CHECK_THROWS_AS(kruskal_wallis({{1, 2}, {std::nan("")}}), std::invalid_argument);
}

TEST_CASE("Kruskal-Wallis with ties matches the naive variance-ratio form") {
    CounterRng rng(11, 0);
    for (int t = 0; t < 100; ++t) {
        const auto g = random_groups(rng, 2 + rng.below(4), 8, 5);
        const double expected = oracle::kruskal_h(g);
        if (!std::isfinite(expected)) continue;
        CHECK(kruskal_wallis(g).statistic == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("rank tests are invariant under monotone transforms") {
    CounterRng rng(12, 0);
    const auto g = random_groups(rng, 4, 10, 20);
    auto h = g;
    for (auto& v : h)
        for (auto& x : v) x = std::exp(x / 3.0) + 7.0;
    CHECK(kruskal_wallis(g).statistic == doctest::Approx(kruskal_wallis(h).statistic).epsilon(1e-12));
    const auto d1 = dunn_posthoc(g), d2 = dunn_posthoc(h);
    CHECK(d1.p.isApprox(d2.p, 1e-12));

    const auto dist = random_dist(rng, 12);
    std::vector<int> labels{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
    AnosimOptions opt;
    opt.permutations = 99;
    const auto a = anosim(12, [&](std::size_t i, std::size_t j) { return dist[i][j]; }, labels, opt);
    const auto b = anosim(12, [&](std::size_t i, std::size_t j) { return std::pow(dist[i][j], 3) * 5; }, labels, opt);
    CHECK(a.statistic == b.statistic);
    CHECK(a.p_value == b.p_value);
}

TEST_CASE("Dunn: identical groups give p = 1; separated groups p < 0.001") {
    const auto same = dunn_posthoc({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
    CHECK((same.p.array() == 1.0).all());
    std::vector<double> a, b;
    for (int i = 1; i <= 10; ++i) {
        a.push_back(i);
        b.push_back(100 + i);
    }
    const auto sep = dunn_posthoc({a, b});
    CHECK(sep.p(0, 1) < 0.001);
    // closed form: mean ranks 5.5 and 15.5, se = sqrt(20*21/12 * (1/10 + 1/10))
    const double z = -10.0 / std::sqrt(35.0 * 0.2);
    CHECK(sep.z(0, 1) == doctest::Approx(z).epsilon(1e-12));
    CHECK(sep.z(1, 0) == doctest::Approx(-z).epsilon(1e-12));
    CHECK(sep.p_raw(0, 1) == doctest::Approx(std::erfc(std::fabs(z) / std::sqrt(2.0))).epsilon(1e-12));
    CHECK(dunn_posthoc({a, b}, Correction::none).p(0, 1) == dunn_posthoc({a, b}, Correction::bonferroni).p(0, 1));
    CHECK_THROWS_AS(dunn_posthoc({a}), std::invalid_argument);
}

TEST_CASE("p-value adjustment") {
    const std::vector<double> p{0.01, 0.04, 0.03, 0.5};
    CHECK(adjust_p_values(p, Correction::none) == p);
    const auto bonf = adjust_p_values(p, Correction::bonferroni);
    CHECK(bonf[0] == doctest::Approx(0.04));
    CHECK(bonf[3] == 1.0);
    const auto holm = adjust_p_values(p, Correction::holm);
    CHECK(holm[0] == doctest::Approx(0.04));
    CHECK(holm[2] == doctest::Approx(0.09));
    CHECK(holm[1] == doctest::Approx(0.09));  // monotone step-down
    CHECK(holm[3] == doctest::Approx(0.5));
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(holm[i] <= bonf[i]);
}

TEST_CASE("ANOSIM: constant dissimilarities give R = 0") {
    const std::vector<int> labels{0, 0, 1, 1, 2, 2};
    const auto r = anosim(6, [](std::size_t, std::size_t) { return 0.3; }, labels);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == 1.0);
}

TEST_CASE("ANOSIM: separated 2x2 fixture gives R = 1") {
    const std::vector<int> labels{0, 0, 1, 1};
    auto dis = [](std::size_t i, std::size_t j) { return (i < 2) == (j < 2) ? 0.1 : 0.9; };
    const auto r = anosim(4, dis, labels);
    CHECK(r.statistic == 1.0);
    // 3 distinct labelings of 2+2; the observed one and its mirror give R = 1.
    CHECK(r.p_value >= 1.0 / 1000.0);
    CHECK(r.p_value <= 1.0);
    CHECK(*r.permutations == 999);
    const auto h = anosim(4, dis, labels, {999, 0, AnosimRanking::histogram});
    CHECK(h.statistic == 1.0);
}

TEST_CASE("ANOSIM: matches the pair-list oracle and stays in [-1, 1]") {
    CounterRng rng(21, 0);
    for (int t = 0; t < 30; ++t) {
        const std::size_t n = 4 + rng.below(16);
        const auto d = random_dist(rng, n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % (2 + rng.below(2)));
        AnosimOptions opt;
        opt.permutations = 0;
        const auto r = anosim(n, [&](std::size_t i, std::size_t j) { return d[i][j]; }, labels, opt);
        CHECK(r.statistic == doctest::Approx(oracle::anosim_r(d, labels)).epsilon(1e-12));
        CHECK(r.statistic >= -1.0);
        CHECK(r.statistic <= 1.0);
    }
}

TEST_CASE("ANOSIM: tied dissimilarities use midranks") {
    CounterRng rng(22, 0);
    const std::size_t n = 10;
    std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = static_cast<double>(rng.below(3));
    std::vector<int> labels{0, 0, 0, 1, 1, 1, 2, 2, 2, 2};
    AnosimOptions opt;
    opt.permutations = 0;
    const auto r = anosim(n, [&](std::size_t i, std::size_t j) { return d[i][j]; }, labels, opt);
    CHECK(r.statistic == doctest::Approx(oracle::anosim_r(d, labels)).epsilon(1e-12));
}

TEST_CASE("ANOSIM: random labelings average R near 0") {
    CounterRng rng(23, 0);
    const std::size_t n = 30;
    const auto d = random_dist(rng, n);
    double sum = 0.0;
    AnosimOptions opt;
    opt.permutations = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 3);
        CounterRng shuffle(99, static_cast<std::uint64_t>(t));
        shuffle.shuffle(std::span<int>(labels));
        sum += anosim(n, [&](std::size_t i, std::size_t j) { return d[i][j]; }, labels, opt).statistic;
    }
    CHECK(std::fabs(sum / 1000.0) < 0.05);
}

TEST_CASE("ANOSIM: seed reproducibility, thread independence, p bounds") {
    CounterRng rng(24, 0);
    const std::size_t n = 40;
    const auto d = random_dist(rng, n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / 10);
    auto dis = [&](std::size_t i, std::size_t j) { return d[i][j] + ((labels[i] == labels[j]) ? 0.0 : 0.05); };
    AnosimOptions opt;
    opt.permutations = 199;
    opt.seed = 5;
    const auto a = anosim(n, dis, labels, opt);
    opt.threads = 4;
    const auto b = anosim(n, dis, labels, opt);
    CHECK(a.p_value == b.p_value);
    CHECK(a.statistic == b.statistic);
    CHECK(a.p_value >= 1.0 / 200.0);
    CHECK(*a.seed == 5);
    opt.seed = 6;
    const auto c = anosim(n, dis, labels, opt);
    CHECK(c.statistic == a.statistic);
    const auto j = to_json(a);
    CHECK(j["method"] == "anosim");
    CHECK(j["permutations"] == 199);
    CHECK(j["seed"] == 5);
}

TEST_CASE("ANOSIM: histogram ranking agrees with exact ranking") {
    CounterRng rng(25, 0);
    const std::size_t n = 300;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 7);
    const auto d = random_dist(rng, n);
    auto dis = [&](std::size_t i, std::size_t j) { return d[i][j] - ((labels[i] == labels[j]) ? 0.1 : 0.0); };
    AnosimOptions ex;
    ex.permutations = 0;
    AnosimOptions hist = ex;
    hist.ranking = AnosimRanking::histogram;
    const auto a = anosim(n, dis, labels, ex);
    const auto b = anosim(n, dis, labels, hist);
    CHECK(std::fabs(a.statistic - b.statistic) < 1e-3);
    CHECK(b.method == "anosim_histogram");
}

TEST_CASE("ANOSIM errors") {
    auto dis = [](std::size_t, std::size_t) { return 1.0; };
    CHECK_THROWS_AS(anosim(3, dis, std::vector<int>{0, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(anosim(4, dis, std::vector<int>{0, 0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(anosim(4, dis, std::vector<int>{0, 1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(anosim(4, dis, std::vector<int>{0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(anosim(4, [](std::size_t, std::size_t) { return std::nan(""); }, std::vector<int>{0, 0, 1, 1}),
                    std::invalid_argument);
}

TEST_CASE("signed-rank distribution for n = 10 matches published tables") {
    CHECK(signed_rank_cdf(10, 0) == 1.0 / 1024.0);
    CHECK(2.0 * signed_rank_cdf(10, 8) <= 0.05);
    CHECK(2.0 * signed_rank_cdf(10, 9) > 0.05);
    CHECK(2.0 * signed_rank_cdf(10, 3) <= 0.01);
    CHECK(2.0 * signed_rank_cdf(10, 4) > 0.01);
    CHECK(signed_rank_cdf(10, 55) == 1.0);
    CHECK(signed_rank_cdf(10, -1) == 0.0);
}

TEST_CASE("Wilcoxon: all differences positive, n = 10") {
    std::vector<std::pair<double, double>> pairs;
    for (int i = 1; i <= 10; ++i) pairs.emplace_back(i + 0.5 * i, 0.0);
    const auto r = wilcoxon_signed_rank(pairs);
    CHECK(r.statistic == 0.0);
    CHECK(r.method == "wilcoxon_exact");
    CHECK(r.p_value == 2.0 / 1024.0);
    CHECK(r.p_value < 0.01);
    REQUIRE(r.effect_size);
    CHECK(*r.effect_size == doctest::Approx(std::fabs(*r.z) / std::sqrt(10.0)).epsilon(1e-15));
    // z = (55 - 27.5 - 0.5) / sqrt(10*11*21/24)
    CHECK(*r.z == doctest::Approx(27.0 / std::sqrt(96.25)).epsilon(1e-12));
}

TEST_CASE("Wilcoxon: exact p agrees with full enumeration") {
    CounterRng rng(31, 0);
    for (int t = 0; t < 20; ++t) {
        const std::size_t n = 6 + rng.below(10);
        std::vector<std::pair<double, double>> pairs;
        std::vector<double> diffs;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = (rng.uniform() - 0.3) * 10.0;
            diffs.push_back(d);
            pairs.emplace_back(d, 0.0);
        }
        CHECK(wilcoxon_signed_rank(pairs).p_value == doctest::Approx(oracle::signed_rank_exact_p(diffs)).epsilon(1e-12));
    }
}

TEST_CASE("Wilcoxon: symmetric pairs give p near 1; zeros are dropped; ties use the normal form") {
    CounterRng rng(32, 0);
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 100; ++i) {
        const double a = rng.uniform(), b = rng.uniform();
        pairs.emplace_back(a, b);
        pairs.emplace_back(b, a);
    }
    const auto sym = wilcoxon_signed_rank(pairs);
    CHECK(sym.method == "wilcoxon_normal");
    CHECK(sym.p_value > 0.9);

    std::vector<std::pair<double, double>> with_zeros{{1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}, {6, 0}, {7, 7}, {8, 8}};
    CHECK(wilcoxon_signed_rank(with_zeros).n == 6);
    std::vector<std::pair<double, double>> tied{{1, 0}, {1, 0}, {2, 0}, {-2, 0}, {3, 0}, {3, 0}, {4, 0}};
    const auto t = wilcoxon_signed_rank(tied);
    CHECK(t.method == "wilcoxon_normal");
    CHECK(t.p_value >= 0.0);
    CHECK(t.p_value <= 1.0);
}

TEST_CASE("Wilcoxon errors") {
    std::vector<std::pair<double, double>> zeros(10, {1.0, 1.0});
    CHECK_THROWS_WITH_AS(wilcoxon_signed_rank(zeros), doctest::Contains("degenerate"), std::invalid_argument);
    std::vector<std::pair<double, double>> few{{1, 0}, {2, 0}, {3, 0}};
    CHECK_THROWS_AS(wilcoxon_signed_rank(few), std::invalid_argument);
}

TEST_CASE("chi-square and normal tails") {
    CHECK(chi_square_sf(0.0, 3) == 1.0);
    CHECK(chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(normal_two_sided(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(normal_two_sided(0.0) == 1.0);
}

}
