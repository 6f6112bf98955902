#include "descan/lexistats.hpp"

#include "descan/common.hpp"
#include "descan/csv.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

namespace descan {

namespace {

std::vector<const ProcessedDescription*> id_order(const std::vector<ProcessedDescription>& corpus) {
    std::vector<const ProcessedDescription*> out;
    out.reserve(corpus.size());
    for (const auto& d : corpus) out.push_back(&d);
    std::stable_sort(out.begin(), out.end(), [](const auto* a, const auto* b) { return a->description_id < b->description_id; });
    return out;
}

}  // namespace

PositionIndex::PositionIndex(const std::vector<ProcessedDescription>& corpus) {
    for (const auto* d : id_order(corpus))
        for (const auto& l : d->lemmas) positions_[l].push_back(length_++);
}

const std::vector<std::size_t>& PositionIndex::positions(const std::string& lemma) const {
    auto it = positions_.find(lemma);
    if (it == positions_.end()) throw DataError("unknown lemma '" + lemma + "'");
    return it->second;
}

std::vector<std::pair<std::string, std::size_t>> frequency_table(const std::vector<ProcessedDescription>& corpus) {
    std::map<std::string, std::size_t> f;
    for (const auto& d : corpus)
        for (const auto& l : d.lemmas) ++f[l];
    return {f.begin(), f.end()};
}

double arf(std::span<const std::size_t> positions, std::size_t n) {
    const std::size_t f = positions.size();
    if (f == 0) throw DataError("unknown lemma");
    if (n < f) throw std::invalid_argument("arf: stream shorter than occurrence count");
    const double v = static_cast<double>(n) / static_cast<double>(f);
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < f; ++i)
        sum += std::min(static_cast<double>(positions[i + 1] - positions[i]), v);
    sum += std::min(static_cast<double>(n - positions[f - 1] + positions[0]), v);
    return sum / v;
}

double arf(const PositionIndex& index, const std::string& lemma) {
    return arf(index.positions(lemma), index.stream_length());
}

std::vector<LemmaStats> lemma_ranking(const std::vector<ProcessedDescription>& corpus, unsigned threads) {
    const PositionIndex index(corpus);
    std::vector<LemmaStats> out;
    out.reserve(index.all().size());
    for (const auto& [lemma, pos] : index.all()) out.push_back({lemma, pos.size(), 0.0});
    parallel_for(out.size(), threads, [&](std::size_t b, std::size_t e, unsigned) {
        for (std::size_t i = b; i < e; ++i) out[i].arf = arf(index.positions(out[i].lemma), index.stream_length());
    });
    std::sort(out.begin(), out.end(), [](const LemmaStats& a, const LemmaStats& b) {
        if (a.arf != b.arf) return a.arf > b.arf;
        if (a.f != b.f) return a.f > b.f;
        return a.lemma < b.lemma;
    });
    return out;
}

std::vector<CoveragePoint> coverage_curve(const std::vector<ProcessedDescription>& corpus,
                                          const std::vector<std::string>& ranking) {
    std::unordered_map<std::string, std::size_t> rank_of;
    for (std::size_t r = 0; r < ranking.size(); ++r) rank_of.emplace(ranking[r], r);
    const std::size_t kmax = ranking.size();

    // Integer prefix counts per description length keep cov exact at k = |ranking|.
    std::map<std::size_t, std::vector<std::size_t>> by_length;  // n_tot -> occurrences per rank
    std::size_t docs = 0;
    for (const auto& d : corpus) {
        const std::size_t n = d.lemmas.size();
        if (n == 0) continue;
        ++docs;
        auto& counts = by_length[n];
        if (counts.empty()) counts.assign(kmax, 0);
        for (const auto& l : d.lemmas) {
            auto it = rank_of.find(l);
            if (it != rank_of.end()) ++counts[it->second];
        }
    }
    std::vector<CoveragePoint> curve(kmax);
    if (docs == 0) {
        for (std::size_t k = 0; k < kmax; ++k) curve[k] = {k + 1, 0.0};
        return curve;
    }
    std::vector<std::size_t> prefix(by_length.size(), 0);
    for (std::size_t k = 0; k < kmax; ++k) {
        double sum = 0.0;
        std::size_t g = 0;
        for (const auto& [n, counts] : by_length) {
            prefix[g] += counts[k];
            sum += static_cast<double>(prefix[g]) / static_cast<double>(n);
            ++g;
        }
        curve[k] = {k + 1, sum / static_cast<double>(docs)};
    }
    return curve;
}

Lexicon select_lexicon(const std::vector<CoveragePoint>& curve, const std::vector<std::string>& ranking,
                       double target) {
    if (!(target > 0.0)) throw std::invalid_argument("select_lexicon: target must be > 0");
    if (target > 1.0) throw std::invalid_argument("select_lexicon: target coverage above 1 is unreachable");
    for (const auto& p : curve) {
        if (p.mean_coverage >= target) {
            if (p.k > ranking.size()) throw std::invalid_argument("select_lexicon: curve longer than ranking");
            Lexicon lex;
            lex.k = p.k;
            lex.coverage = p.mean_coverage;
            lex.lemmas.assign(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(p.k));
            return lex;
        }
    }
    throw std::invalid_argument("select_lexicon: target coverage not reached by curve");
}

void write_lexicon_csv(const std::string& path, const Lexicon& lexicon, const std::vector<LemmaStats>& ranking) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file", path);
    std::unordered_map<std::string, const LemmaStats*> by_lemma;
    for (const auto& s : ranking) by_lemma[s.lemma] = &s;
    csv::write_row(out, {"rank", "lemma", "arf", "f"});
    for (std::size_t i = 0; i < lexicon.lemmas.size(); ++i) {
        const auto it = by_lemma.find(lexicon.lemmas[i]);
        if (it == by_lemma.end()) throw std::invalid_argument("lexicon lemma missing from ranking");
        csv::write_row(out, {std::to_string(i + 1), it->second->lemma, format_double(it->second->arf),
                             std::to_string(it->second->f)});
    }
}

void write_curve_csv(const std::string& path, const std::vector<CoveragePoint>& curve) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file", path);
    csv::write_row(out, {"k", "mean_coverage"});
    for (const auto& p : curve) csv::write_row(out, {std::to_string(p.k), format_double(p.mean_coverage)});
}

std::vector<LemmaStats> read_lexicon_csv(const std::string& path) {
    const auto t = csv::read_table(path);
    std::vector<std::pair<std::size_t, LemmaStats>> rows;
    for (const auto& r : t.rows) {
        try {
            LemmaStats s;
            s.lemma = t.at(r, "lemma");
            s.arf = std::stod(t.at(r, "arf"));
            s.f = std::stoull(t.at(r, "f"));
            rows.emplace_back(std::stoull(t.at(r, "rank")), std::move(s));
        } catch (const std::logic_error& e) {
            throw DataError(std::string("bad lexicon row: ") + e.what(), path, r.line);
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<LemmaStats> out;
    for (auto& [rank, s] : rows) out.push_back(std::move(s));
    return out;
}

}  // namespace descan
