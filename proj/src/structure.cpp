#include "descan/structure.hpp"

#include "descan/common.hpp"
#include "descan/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace descan {

std::vector<std::pair<std::size_t, int>> attribute_ranks(const ProcessedDescription& description,
                                                         const AttributeSet& attrs) {
    std::vector<std::size_t> first(attrs.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t t = 0; t < description.lemmas.size(); ++t) {
        for (auto a : attrs.attributes_of(description.lemmas[t]))
            if (first[a] > t) first[a] = t;
    }
    std::vector<std::size_t> present;
    for (std::size_t a = 0; a < first.size(); ++a)
        if (first[a] != std::numeric_limits<std::size_t>::max()) present.push_back(a);
    // attribute indices follow name order, so a stable sort settles equal positions by name
    std::stable_sort(present.begin(), present.end(), [&](std::size_t x, std::size_t y) { return first[x] < first[y]; });
    std::vector<std::pair<std::size_t, int>> out;
    out.reserve(present.size());
    for (std::size_t i = 0; i < present.size(); ++i) out.emplace_back(present[i], static_cast<int>(i) + 1);
    return out;
}

RankTable rank_table(const std::vector<ProcessedDescription>& corpus, const AttributeSet& attrs, unsigned threads) {
    std::vector<std::vector<std::pair<std::size_t, int>>> per(corpus.size());
    parallel_for(corpus.size(), threads, [&](std::size_t b, std::size_t e, unsigned) {
        for (std::size_t i = b; i < e; ++i) per[i] = attribute_ranks(corpus[i], attrs);
    });
    RankTable t;
    t.descriptions = corpus.size();
    for (const auto& a : attrs.attributes()) t.attributes.push_back(a.name);
    t.ranks.resize(attrs.size());
    for (const auto& d : per)
        for (auto [a, r] : d) t.ranks[a].push_back(r);
    return t;
}

std::vector<std::optional<double>> rank_product(const RankTable& table) {
    std::vector<std::optional<double>> psi(table.attributes.size());
    for (std::size_t a = 0; a < psi.size(); ++a) {
        const auto& r = table.ranks[a];
        if (r.empty()) continue;
        double s = 0.0;
        for (int v : r) s += std::log(static_cast<double>(v));
        psi[a] = std::exp(s / static_cast<double>(r.size()));
    }
    return psi;
}

StructureResult structure_test(const RankTable& table, double alpha, Correction correction) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("structure_test: alpha must be in (0, 1)");
    StructureResult out;
    out.psi = rank_product(table);
    out.group.assign(table.attributes.size(), std::nullopt);
    for (std::size_t a = 0; a < table.attributes.size(); ++a)
        if (!table.ranks[a].empty()) out.tested.push_back(a);
    if (out.tested.size() < 2) throw std::invalid_argument("structure_test: need at least 2 attributes that appear");
    std::stable_sort(out.tested.begin(), out.tested.end(), [&](std::size_t x, std::size_t y) { return *out.psi[x] < *out.psi[y]; });

    std::vector<std::vector<double>> samples;
    for (auto a : out.tested) samples.emplace_back(table.ranks[a].begin(), table.ranks[a].end());
    out.kruskal = kruskal_wallis(samples);
    out.pairwise = dunn_posthoc(samples, correction);

    int gid = 1;
    std::vector<std::size_t> current{0};
    out.group[out.tested[0]] = gid;
    for (std::size_t i = 1; i < out.tested.size(); ++i) {
        bool joins = false;
        for (auto m : current)
            if (out.pairwise.p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) >= alpha) {
                joins = true;
                break;
            }
        if (!joins) {
            ++gid;
            current.clear();
        }
        current.push_back(i);
        out.group[out.tested[i]] = gid;
    }
    return out;
}

void write_rank_product_csv(const std::string& path, const RankTable& table, const StructureResult& result) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file", path);
    csv::write_row(out, {"attribute", "psi", "group_id"});
    for (auto a : result.tested)
        csv::write_row(out, {table.attributes[a], format_double(*result.psi[a]), std::to_string(*result.group[a])});
    for (std::size_t a = 0; a < table.attributes.size(); ++a)
        if (!result.psi[a]) csv::write_row(out, {table.attributes[a], "n/a", "n/a"});
}

}  // namespace descan
