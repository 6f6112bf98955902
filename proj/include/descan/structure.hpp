#pragma once

#include "descan/attributes.hpp"
#include "descan/stattests.hpp"
#include "descan/textproc.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace descan {

/// (attribute index, rank) for the attributes present in one description,
/// ordered by the token index of each attribute's first member lemma.
std::vector<std::pair<std::size_t, int>> attribute_ranks(const ProcessedDescription& description,
                                                         const AttributeSet& attrs);

struct RankTable {
    std::vector<std::string> attributes;   // AttributeSet order
    std::vector<std::vector<int>> ranks;   // per attribute, one rank per description where it appears
    std::size_t descriptions = 0;

    std::size_t count(std::size_t a) const { return ranks[a].size(); }
};

RankTable rank_table(const std::vector<ProcessedDescription>& corpus, const AttributeSet& attrs, unsigned threads = 1);

/// Geometric mean of ranks per attribute; nullopt for attributes that never appear.
std::vector<std::optional<double>> rank_product(const RankTable& table);

struct StructureResult {
    StatResult kruskal;
    PairwiseResult pairwise;             // over `tested` attributes, in that order
    std::vector<std::size_t> tested;     // attribute indices with at least one rank, ordered by psi
    std::vector<std::optional<double>> psi;   // per attribute
    std::vector<std::optional<int>> group;    // per attribute, 1-based, nullopt when untested
};

/// Kruskal-Wallis over attribute rank samples, Dunn/Holm post-hoc and
/// single-linkage grouping in psi order: an attribute joins the current
/// group when its adjusted p against some member is >= alpha.
StructureResult structure_test(const RankTable& table, double alpha = 0.05, Correction correction = Correction::holm);

/// "attribute,psi,group_id", rows in psi order; absent attributes last with n/a.
void write_rank_product_csv(const std::string& path, const RankTable& table, const StructureResult& result);

}  // namespace descan
