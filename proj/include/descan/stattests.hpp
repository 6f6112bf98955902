#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace descan {

struct StatResult {
    std::string method;
    double statistic = 0.0;
    double p_value = 1.0;
    std::optional<double> effect_size;
    std::size_t n = 0;    // sample size (items, pairs or non-zero differences)
    std::optional<int> df;
    std::optional<double> z;
    std::optional<std::size_t> permutations;
    std::optional<std::uint64_t> seed;
};

nlohmann::ordered_json to_json(const StatResult& r);

/// Midranks (1-based) of values; ties share the average rank.
std::vector<double> midranks(std::span<const double> values);
/// Sum over tie groups of (t^3 - t).
double tie_term(std::span<const double> values);

/// Upper-tail chi-square probability.
double chi_square_sf(double x, double df);
/// Two-sided standard normal tail probability for |z|.
double normal_two_sided(double z);

StatResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

enum class Correction { none, bonferroni, holm };

struct PairwiseResult {
    Eigen::MatrixXd z;        // antisymmetric: (mean rank i - mean rank j) / se
    Eigen::MatrixXd p;        // corrected two-sided p, symmetric, diagonal 1
    Eigen::MatrixXd p_raw;    // uncorrected
};

PairwiseResult dunn_posthoc(const std::vector<std::vector<double>>& groups, Correction correction = Correction::holm);

/// Adjusts a list of p-values; order of the output matches the input.
std::vector<double> adjust_p_values(std::span<const double> p, Correction correction);

enum class AnosimRanking { exact, histogram };

struct AnosimOptions {
    std::size_t permutations = 999;
    std::uint64_t seed = 0;
    AnosimRanking ranking = AnosimRanking::exact;
    std::size_t histogram_bins = std::size_t{1} << 20;
    unsigned threads = 1;
};

/// ANOSIM R and permutation p-value. dissimilarity(i, j) is called for
/// i < j only, possibly from several threads.
StatResult anosim(std::size_t n, const std::function<double(std::size_t, std::size_t)>& dissimilarity,
                  std::span<const int> labels, const AnosimOptions& options = {});

/// Wilcoxon signed-rank test on paired samples. Exact null distribution when
/// n <= 50 and there are no tied |differences|; otherwise the normal
/// approximation with continuity correction. r = |Z|/sqrt(n).
StatResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs);

/// P(W <= w) under the signed-rank null for n untied ranks.
double signed_rank_cdf(std::size_t n, double w);

}  // namespace descan
