#pragma once

#include "descan/attributes.hpp"
#include "descan/corpus.hpp"
#include "descan/embeddings.hpp"
#include "descan/lexistats.hpp"
#include "descan/stattests.hpp"
#include "descan/textproc.hpp"

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace descan {

/// Rendered images with their material and scene metadata, keyed by image id
/// (which is also the image-embedding key).
class ImageCatalog {
public:
    ImageCatalog() = default;
    explicit ImageCatalog(std::vector<RenderImage> images);

    const std::vector<RenderImage>& images() const noexcept { return images_; }
    const RenderImage* find(const std::string& image_id) const;

private:
    std::vector<RenderImage> images_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// CSV "image_id,material_id,geometry,lighting".
ImageCatalog read_image_catalog_csv(const std::string& path);
ImageCatalog catalog_from_corpus(const Corpus& corpus);

struct CandidateFilter {
    std::optional<Geometry> geometry;
    std::optional<Lighting> lighting;

    bool accepts(const RenderImage& img) const {
        return (!geometry || img.geometry == *geometry) && (!lighting || img.lighting == *lighting);
    }
};

struct RetrievalCase {
    std::string query_key;
    std::string truth_material;
    CandidateFilter filter;
    std::optional<std::string> truth_image;
};

/// JSONL {"query_key","truth_material","candidate_filter":{"geometry","lighting"},"truth_image"?}.
std::vector<RetrievalCase> read_cases_jsonl(const std::string& path);

enum class RecallMode { material, image };

inline const std::vector<std::size_t> kDefaultKs{1, 5, 10, 20, 100};

struct RecallTable {
    std::vector<std::size_t> ks;
    std::vector<double> recall;           // parallel to ks
    std::vector<std::size_t> first_hit;   // per case, 1-based rank of the first correct candidate
};

/// Cosine between rows of two stores of equal dimension.
double cross_cosine(const EmbeddingStore& a, Eigen::Index i, const EmbeddingStore& b, Eigen::Index j);

RecallTable topk_recall(const EmbeddingStore& queries, const EmbeddingStore& images, const ImageCatalog& catalog,
                        const std::vector<RetrievalCase>& cases, const std::vector<std::size_t>& ks = kDefaultKs,
                        RecallMode mode = RecallMode::material, unsigned threads = 1);

void write_recall_csv(const std::string& path, const RecallTable& table);

struct SearchHit {
    std::string key;
    double similarity = 0.0;
};

/// Top-k candidates by cosine to the query, ties by key. An empty
/// candidate_keys list means every key of the candidate store.
std::vector<SearchHit> image_search(const EmbeddingStore& query_store, const std::string& query_key,
                                    const EmbeddingStore& candidates, std::size_t k,
                                    const std::vector<std::string>& candidate_keys = {});

enum class InvarianceMode { geometry, lighting };

struct InvarianceResult {
    double mean = 0.0;
    double std_dev = 0.0;  // population, across materials
    std::map<std::string, double> per_material;
    std::map<std::string, std::size_t> pairs;
    std::vector<std::string> skipped;  // materials without two variants under any fixed setting
};

/// Mean cosine between renderings of the same material that differ in the
/// varied dimension while the other dimension is held fixed.
InvarianceResult invariance(const EmbeddingStore& images, const ImageCatalog& catalog, InvarianceMode mode);

/// Wilcoxon signed-rank on per-material means of two runs over their shared materials.
StatResult compare_invariance(const InvarianceResult& first, const InvarianceResult& second);

struct Keyword {
    std::string lemma;
    std::string attribute;
    std::size_t descriptions = 0;  // how many of the inspected descriptions contain it
};

/// Lexicon lemmas belonging to an attribute, from the first max_descriptions
/// descriptions in id order; ordered by count desc, attribute psi asc, lemma asc.
std::vector<Keyword> extract_keywords(std::vector<ProcessedDescription> descriptions, const std::vector<std::string>& lexicon,
                                      const AttributeSet& attrs, const std::map<std::string, double>& psi,
                                      std::size_t max_descriptions = 5);

}  // namespace descan
