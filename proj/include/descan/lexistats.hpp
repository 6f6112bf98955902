#pragma once

#include "descan/textproc.hpp"

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace descan {

struct LemmaStats {
    std::string lemma;
    std::size_t f = 0;
    double arf = 0.0;
};

/// Lemma positions in the corpus stream: descriptions concatenated in
/// ascending description-id order.
class PositionIndex {
public:
    explicit PositionIndex(const std::vector<ProcessedDescription>& corpus);

    std::size_t stream_length() const noexcept { return length_; }
    /// Sorted 0-based positions; throws DataError("unknown lemma").
    const std::vector<std::size_t>& positions(const std::string& lemma) const;
    const std::map<std::string, std::vector<std::size_t>>& all() const noexcept { return positions_; }

private:
    std::map<std::string, std::vector<std::size_t>> positions_;
    std::size_t length_ = 0;
};

/// Absolute frequency per lemma, sorted by lemma.
std::vector<std::pair<std::string, std::size_t>> frequency_table(const std::vector<ProcessedDescription>& corpus);

/// Average reduced frequency from occurrence positions in a stream of
/// length n, with the last gap wrapping around to the first occurrence.
double arf(std::span<const std::size_t> positions, std::size_t n);
double arf(const PositionIndex& index, const std::string& lemma);

/// Frequency and ARF for every lemma, ordered by (arf desc, f desc, lemma asc).
std::vector<LemmaStats> lemma_ranking(const std::vector<ProcessedDescription>& corpus, unsigned threads = 1);

struct CoveragePoint {
    std::size_t k = 0;
    double mean_coverage = 0.0;
};

/// Mean over descriptions of the share of lemma occurrences covered by the
/// top-k ranked lemmas, for k = 1..|ranking|. Descriptions with no lemmas
/// are skipped.
std::vector<CoveragePoint> coverage_curve(const std::vector<ProcessedDescription>& corpus,
                                          const std::vector<std::string>& ranking);

struct Lexicon {
    std::vector<std::string> lemmas;  // in ranking order
    std::size_t k = 0;
    double coverage = 0.0;
};

/// Smallest k whose mean coverage reaches target.
Lexicon select_lexicon(const std::vector<CoveragePoint>& curve, const std::vector<std::string>& ranking,
                       double target);

void write_lexicon_csv(const std::string& path, const Lexicon& lexicon, const std::vector<LemmaStats>& ranking);
void write_curve_csv(const std::string& path, const std::vector<CoveragePoint>& curve);
/// Reads the "rank,lemma,arf,f" export back.
std::vector<LemmaStats> read_lexicon_csv(const std::string& path);

}  // namespace descan
