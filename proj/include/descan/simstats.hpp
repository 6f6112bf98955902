#pragma once

#include "descan/embeddings.hpp"
#include "descan/stattests.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace descan {

/// Mergeable count/mean/M2 accumulator (Welford, Chan et al. merge).
struct Moments {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    void merge(const Moments& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double total = static_cast<double>(n + o.n);
        const double d = o.mean - mean;
        mean += d * static_cast<double>(o.n) / total;
        m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
        n += o.n;
    }
    /// Population standard deviation.
    double std_dev() const { return n ? std::sqrt(m2 / static_cast<double>(n)) : 0.0; }
};

enum class AnosimSampling { stratified, full, none };

struct SimilarityOptions {
    std::size_t block_size = 256;
    unsigned threads = 1;
    AnosimSampling sampling = AnosimSampling::stratified;
    std::size_t per_image = 5;
    std::size_t max_images = 1000;
    AnosimOptions anosim;  // seed also drives the subsample
};

struct SimilaritySummary {
    double intra_mean = 0, intra_std = 0, inter_mean = 0, inter_std = 0;
    std::size_t n_intra_pairs = 0, n_inter_pairs = 0;
    std::optional<StatResult> anosim;
    std::size_t anosim_items = 0;
    std::size_t anosim_groups = 0;
};

/// Same-image vs different-image cosine statistics over every pair of the
/// labeled keys, streamed in tiles. labels maps description key -> image id.
SimilaritySummary intra_inter(const EmbeddingStore& store, const std::map<std::string, std::string>& labels,
                              const SimilarityOptions& options = {});

/// Stratified subsample: up to per_image keys from each of up to max_images
/// images, drawn with the seed. Returned sorted by key.
std::vector<std::string> stratified_sample(const std::map<std::string, std::string>& labels, std::size_t per_image,
                                           std::size_t max_images, std::uint64_t seed);

nlohmann::ordered_json to_json(const SimilaritySummary& s, const SimilarityOptions& options);

}  // namespace descan
