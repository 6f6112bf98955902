#include "descan/stattests.hpp"

#include "descan/common.hpp"
#include "descan/rng.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace descan {

nlohmann::ordered_json to_json(const StatResult& r) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["statistic"] = r.statistic;
    j["p_value"] = r.p_value;
    j["effect_size"] = r.effect_size ? nlohmann::ordered_json(*r.effect_size) : nlohmann::ordered_json(nullptr);
    j["n"] = r.n;
    if (r.df) j["df"] = *r.df;
    if (r.z) j["z"] = *r.z;
    j["permutations"] = r.permutations ? nlohmann::ordered_json(*r.permutations) : nlohmann::ordered_json(nullptr);
    j["seed"] = r.seed ? nlohmann::ordered_json(*r.seed) : nlohmann::ordered_json(nullptr);
    return j;
}

std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
        i = j;
    }
    return ranks;
}

double tie_term(std::span<const double> values) {
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    double t = 0.0;
    for (std::size_t i = 0; i < v.size();) {
        std::size_t j = i + 1;
        while (j < v.size() && v[j] == v[i]) ++j;
        const double c = static_cast<double>(j - i);
        t += c * c * c - c;
        i = j;
    }
    return t;
}

double chi_square_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

double normal_two_sided(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

namespace {

struct Pooled {
    std::vector<double> values;
    std::vector<std::size_t> group;
    std::vector<double> ranks;
    std::vector<double> rank_sum;
    std::vector<std::size_t> sizes;
};

Pooled pool(const std::vector<std::vector<double>>& groups, const char* who) {
    if (groups.size() < 2) throw std::invalid_argument(std::string(who) + ": need at least 2 groups");
    Pooled p;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty()) throw std::invalid_argument(std::string(who) + ": empty group");
        for (double v : groups[g]) {
            if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite value");
            p.values.push_back(v);
            p.group.push_back(g);
        }
        p.sizes.push_back(groups[g].size());
    }
    p.ranks = midranks(p.values);
    p.rank_sum.assign(groups.size(), 0.0);
    for (std::size_t i = 0; i < p.values.size(); ++i) p.rank_sum[p.group[i]] += p.ranks[i];
    return p;
}

}  // namespace

StatResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    const Pooled p = pool(groups, "kruskal_wallis");
    const double n = static_cast<double>(p.values.size());
    StatResult r;
    r.method = "kruskal_wallis";
    r.n = p.values.size();
    r.df = static_cast<int>(groups.size()) - 1;
    const double correction = 1.0 - tie_term(p.values) / (n * n * n - n);
    if (!(correction > 0.0)) {
        r.statistic = 0.0;
        r.p_value = 1.0;
        return r;
    }
    double weighted = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) weighted += p.rank_sum[g] * p.rank_sum[g] / static_cast<double>(p.sizes[g]);
    const double h = (12.0 * weighted - 3.0 * n * (n + 1.0) * (n + 1.0)) / (n * (n + 1.0));
    r.statistic = std::max(0.0, h / correction);
    r.p_value = chi_square_sf(r.statistic, static_cast<double>(*r.df));
    // Eta-squared on ranks.
    r.effect_size = std::max(0.0, (r.statistic - static_cast<double>(groups.size()) + 1.0) / (n - static_cast<double>(groups.size())));
    return r;
}

std::vector<double> adjust_p_values(std::span<const double> p, Correction correction) {
    const std::size_t m = p.size();
    std::vector<double> out(p.begin(), p.end());
    if (correction == Correction::none || m == 0) return out;
    if (correction == Correction::bonferroni) {
        for (auto& v : out) v = std::min(1.0, v * static_cast<double>(m));
        return out;
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    double running = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double adj = std::min(1.0, static_cast<double>(m - i) * p[order[i]]);
        running = std::max(running, adj);
        out[order[i]] = running;
    }
    return out;
}

PairwiseResult dunn_posthoc(const std::vector<std::vector<double>>& groups, Correction correction) {
    const Pooled p = pool(groups, "dunn_posthoc");
    const std::size_t k = groups.size();
    const double n = static_cast<double>(p.values.size());
    const double variance = n * (n + 1.0) / 12.0 - tie_term(p.values) / (12.0 * (n - 1.0));
    PairwiseResult out;
    out.z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    out.p_raw = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    std::vector<double> raw;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> where;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const double diff = p.rank_sum[i] / static_cast<double>(p.sizes[i]) - p.rank_sum[j] / static_cast<double>(p.sizes[j]);
            const double se = std::sqrt(std::max(0.0, variance) *
                                        (1.0 / static_cast<double>(p.sizes[i]) + 1.0 / static_cast<double>(p.sizes[j])));
            const double z = se > 0.0 ? diff / se : 0.0;
            const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
            out.z(a, b) = z;
            out.z(b, a) = -z;
            const double pv = normal_two_sided(z);
            out.p_raw(a, b) = out.p_raw(b, a) = pv;
            raw.push_back(pv);
            where.emplace_back(a, b);
        }
    }
    const auto adj = adjust_p_values(raw, correction);
    out.p = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t t = 0; t < adj.size(); ++t) out.p(where[t].first, where[t].second) = out.p(where[t].second, where[t].first) = adj[t];
    return out;
}

// ---------------------------------------------------------------------------
// ANOSIM

namespace {

inline std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) {
    // i < j, row-major over the strict upper triangle
    return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

/// Doubled midranks (2 * rank) so every rank sum is an exact integer.
struct PairRanks {
    std::vector<std::uint64_t> exact;       // per pair, exact mode
    std::vector<std::uint32_t> bin;         // per pair, histogram mode
    std::vector<std::uint64_t> bin_rank2;   // per bin, histogram mode

    std::uint64_t rank2(std::size_t pair) const { return exact.empty() ? bin_rank2[bin[pair]] : exact[pair]; }
};

PairRanks rank_exact(std::size_t n, std::size_t m, const std::function<double(std::size_t, std::size_t)>& dis,
                     unsigned threads) {
    std::vector<double> d(m);
    parallel_tasks(n, threads, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) d[pair_index(i, j, n)] = dis(i, j);
    });
    for (double v : d)
        if (!std::isfinite(v)) throw std::invalid_argument("anosim: non-finite dissimilarity");
    std::vector<std::uint32_t> order(m);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return d[a] < d[b] || (d[a] == d[b] && a < b); });
    PairRanks pr;
    pr.exact.resize(m);
    for (std::size_t i = 0; i < m;) {
        std::size_t j = i + 1;
        while (j < m && d[order[j]] == d[order[i]]) ++j;
        const std::uint64_t r2 = i + 1 + j;  // 2 * average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) pr.exact[order[k]] = r2;
        i = j;
    }
    return pr;
}

PairRanks rank_histogram(std::size_t n, std::size_t m, const std::function<double(std::size_t, std::size_t)>& dis,
                         std::size_t bins, unsigned threads) {
    if (bins < 1 || bins > (std::size_t{1} << 31)) throw std::invalid_argument("anosim: bad histogram bin count");
    // Pass 1: range.
    std::vector<double> lo(n, std::numeric_limits<double>::infinity()), hi(n, -std::numeric_limits<double>::infinity());
    parallel_tasks(n, threads, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = dis(i, j);
            if (!std::isfinite(v)) throw std::invalid_argument("anosim: non-finite dissimilarity");
            lo[i] = std::min(lo[i], v);
            hi[i] = std::max(hi[i], v);
        }
    });
    const double dmin = *std::min_element(lo.begin(), lo.end());
    const double dmax = *std::max_element(hi.begin(), hi.end());
    const double scale = dmax > dmin ? static_cast<double>(bins) / (dmax - dmin) : 0.0;
    // Pass 2: bin every pair.
    PairRanks pr;
    pr.bin.resize(m);
    parallel_tasks(n, threads, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = dis(i, j);
            auto b = static_cast<std::size_t>((v - dmin) * scale);
            if (b >= bins) b = bins - 1;
            pr.bin[pair_index(i, j, n)] = static_cast<std::uint32_t>(b);
        }
    });
    std::vector<std::uint64_t> counts(bins, 0);
    for (auto b : pr.bin) ++counts[b];
    pr.bin_rank2.resize(bins);
    std::uint64_t before = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        pr.bin_rank2[b] = 2 * before + counts[b] + 1;  // 2 * midrank of ranks before+1..before+count
        before += counts[b];
    }
    return pr;
}

/// Doubled within-group rank sum for a labelling.
std::uint64_t within_rank_sum(const PairRanks& pr, std::span<const int> labels, std::size_t n,
                              std::vector<std::vector<std::size_t>>& members) {
    for (auto& m : members) m.clear();
    for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
    std::uint64_t sum = 0;
    for (const auto& g : members)
        for (std::size_t a = 0; a < g.size(); ++a)
            for (std::size_t b = a + 1; b < g.size(); ++b) sum += pr.rank2(pair_index(g[a], g[b], n));
    return sum;
}

}  // namespace

StatResult anosim(std::size_t n, const std::function<double(std::size_t, std::size_t)>& dissimilarity,
                  std::span<const int> labels, const AnosimOptions& options) {
    if (n < 4) throw std::invalid_argument("anosim: need at least 4 items");
    if (labels.size() != n) throw std::invalid_argument("anosim: label count mismatch");
    // Compact labels to 0..g-1.
    std::vector<int> distinct(labels.begin(), labels.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) throw std::invalid_argument("anosim: degenerate grouping (a single group holds all items)");
    std::vector<int> compact(n);
    std::vector<std::size_t> sizes(distinct.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        compact[i] = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), labels[i]) - distinct.begin());
        ++sizes[static_cast<std::size_t>(compact[i])];
    }
    std::uint64_t n_within = 0;
    for (auto s : sizes) n_within += s * (s - 1) / 2;
    const std::uint64_t m = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    if (n_within == 0) throw std::invalid_argument("anosim: no group has two or more members");
    if (m > std::numeric_limits<std::uint32_t>::max() && options.ranking == AnosimRanking::exact)
        throw std::invalid_argument("anosim: too many pairs for exact ranking; use histogram mode");

    const PairRanks pr = options.ranking == AnosimRanking::exact
                             ? rank_exact(n, m, dissimilarity, options.threads)
                             : rank_histogram(n, m, dissimilarity, options.histogram_bins, options.threads);

    const double total2 = static_cast<double>(m) * static_cast<double>(m + 1);  // doubled sum of all ranks
    const auto r_stat = [&](std::uint64_t within2) {
        const double rw = static_cast<double>(within2) / 2.0 / static_cast<double>(n_within);
        const double rb = (total2 - static_cast<double>(within2)) / 2.0 / static_cast<double>(m - n_within);
        return (rb - rw) / (static_cast<double>(m) / 2.0);
    };

    std::vector<std::vector<std::size_t>> members(distinct.size());
    const std::uint64_t observed = within_rank_sum(pr, compact, n, members);

    std::atomic<std::size_t> at_least{0};
    const std::size_t perms = options.permutations;
    const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(std::max<std::size_t>(perms, 1))));
    parallel_for(perms, workers, [&](std::size_t b, std::size_t e, unsigned) {
        std::vector<int> shuffled(compact.size());
        std::vector<std::vector<std::size_t>> local(distinct.size());
        std::size_t hits = 0;
        for (std::size_t k = b; k < e; ++k) {
            shuffled = compact;
            CounterRng rng(options.seed, k);
            rng.shuffle(std::span<int>(shuffled));
            // Smaller within-group rank sum <=> larger R (group sizes are fixed).
            if (within_rank_sum(pr, shuffled, n, local) <= observed) ++hits;
        }
        at_least += hits;
    });

    StatResult r;
    r.method = options.ranking == AnosimRanking::exact ? "anosim" : "anosim_histogram";
    r.statistic = r_stat(observed);
    r.effect_size = r.statistic;
    r.n = n;
    r.permutations = perms;
    r.seed = options.seed;
    r.p_value = static_cast<double>(at_least.load() + 1) / static_cast<double>(perms + 1);
    return r;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

double signed_rank_cdf(std::size_t n, double w) {
    if (w < 0) return 0.0;
    const std::size_t max_sum = n * (n + 1) / 2;
    // counts[s] = number of sign assignments with positive-rank sum s
    std::vector<double> counts(max_sum + 1, 0.0);
    counts[0] = 1.0;
    for (std::size_t r = 1; r <= n; ++r)
        for (std::size_t s = r * (r + 1) / 2; s >= r; --s) counts[s] += counts[s - r];
    const auto upto = static_cast<std::size_t>(std::floor(std::min<double>(w, static_cast<double>(max_sum))));
    double c = 0.0;
    for (std::size_t s = 0; s <= upto; ++s) c += counts[s];
    return c / std::ldexp(1.0, static_cast<int>(n));
}

StatResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs) {
    std::vector<double> diffs;
    for (const auto& [x, y] : pairs) {
        const double d = x - y;
        if (!std::isfinite(d)) throw std::invalid_argument("wilcoxon: non-finite value");
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty()) throw std::invalid_argument("wilcoxon: degenerate (all differences are zero)");
    if (diffs.size() < 6) throw std::invalid_argument("wilcoxon: need at least 6 non-zero differences");
    const std::size_t n = diffs.size();
    std::vector<double> absd(n);
    for (std::size_t i = 0; i < n; ++i) absd[i] = std::fabs(diffs[i]);
    const auto ranks = midranks(absd);
    double w_plus = 0.0, w_minus = 0.0;
    for (std::size_t i = 0; i < n; ++i) (diffs[i] > 0 ? w_plus : w_minus) += ranks[i];

    const double nd = static_cast<double>(n);
    const double mean = nd * (nd + 1.0) / 4.0;
    const double ties = tie_term(absd);
    const double sigma = std::sqrt(nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - ties / 48.0);
    const double dev = w_plus - mean;
    double z = 0.0;
    if (sigma > 0.0 && std::fabs(dev) > 0.5) z = (dev - std::copysign(0.5, dev)) / sigma;

    StatResult r;
    r.statistic = std::min(w_plus, w_minus);
    r.n = n;
    r.z = z;
    r.effect_size = std::fabs(z) / std::sqrt(nd);
    if (n <= 50 && ties == 0.0) {
        r.method = "wilcoxon_exact";
        r.p_value = std::min(1.0, 2.0 * signed_rank_cdf(n, r.statistic));
    } else {
        r.method = "wilcoxon_normal";
        r.p_value = normal_two_sided(z);
    }
    return r;
}

}  // namespace descan
