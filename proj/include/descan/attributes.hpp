#pragma once

#include "descan/embeddings.hpp"
#include "descan/textproc.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace descan {

// ---------------------------------------------------------------------------
// Affinity propagation

struct MedianPreference {};
using Preference = std::variant<double, MedianPreference>;

struct ApOptions {
    Preference preference = MedianPreference{};
    double damping = 0.9;
    int convergence_iterations = 50;
    int max_iterations = 1000;
};

struct ApResult {
    std::vector<Eigen::Index> exemplars;    // ascending item indices
    std::vector<Eigen::Index> assignments;  // exemplar item index per item
    bool converged = false;
    int iterations = 0;
};

/// Median of the off-diagonal entries.
double median_off_diagonal(const Eigen::MatrixXd& similarity);

/// Frey-Dueck message passing on a dense similarity matrix. The diagonal of
/// the input is ignored and replaced by the preference.
ApResult affinity_propagation(const Eigen::MatrixXd& similarity, const ApOptions& options = {});

// ---------------------------------------------------------------------------
// Attribute sets

struct Attribute {
    std::string name;
    std::set<std::string> members;
    Eigen::VectorXd centroid;
    std::string exemplar;
};

class AttributeSet {
public:
    AttributeSet() = default;
    /// Attributes are kept sorted by name. Throws when member sets overlap
    /// (unless allow_overlap) or a lemma is both outlier and member.
    AttributeSet(std::vector<Attribute> attributes, std::set<std::string> outliers, bool allow_overlap = false);

    const std::vector<Attribute>& attributes() const noexcept { return attributes_; }
    const std::set<std::string>& outliers() const noexcept { return outliers_; }
    std::size_t size() const noexcept { return attributes_.size(); }
    std::optional<std::size_t> index_of(const std::string& name) const;
    /// First attribute (by name) containing the lemma.
    std::optional<std::size_t> attribute_of(const std::string& lemma) const;
    /// Every attribute containing the lemma, ascending.
    const std::vector<std::size_t>& attributes_of(const std::string& lemma) const;

private:
    std::vector<Attribute> attributes_;
    std::set<std::string> outliers_;
    std::map<std::string, std::vector<std::size_t>> lemma_index_;
};

inline constexpr const char* kOutlier = "outlier";

/// lemma -> attribute name; "outlier" marks excluded lemmas.
using Curation = std::map<std::string, std::string>;

Curation read_curation_csv(const std::string& path);
void write_attribute_csv(const std::string& path, const AttributeSet& attrs);
/// Visualization export "lemma,attribute,x,y" with empty coordinates.
void write_cluster_csv(const std::string& path, const AttributeSet& attrs);

/// Without curation: one attribute per cluster named after its exemplar.
/// With curation: the curation alone defines attributes and outliers.
AttributeSet build_attribute_set(const std::vector<std::string>& lemmas, const ApResult& clusters,
                                 const std::optional<Curation>& curation, const EmbeddingStore& store);
AttributeSet build_attribute_set(const Curation& curation, const EmbeddingStore& store);
/// Membership only; centroids stay empty, so the set cannot classify.
AttributeSet build_attribute_set(const Curation& curation);

struct AttributeProbabilities {
    std::vector<std::string> names;
    Eigen::VectorXd p;            // p(a_i)
    Eigen::MatrixXd p_cond;       // (i, j) = p(a_i | a_j); NaN when a_j never occurs
    Eigen::MatrixXd joint_count;  // descriptions containing both
    std::size_t descriptions = 0;
};

AttributeProbabilities attribute_probabilities(const std::vector<ProcessedDescription>& corpus, const AttributeSet& attrs);

// ---------------------------------------------------------------------------
// Keyword classification

inline const std::set<std::string> kDefaultExcluded{"military", "sewing", "weight"};

/// Nearest non-excluded attribute centroid by cosine; ties by name.
std::optional<std::string> classify_vector(const Eigen::Ref<const Eigen::VectorXd>& v, const AttributeSet& attrs,
                                           const std::set<std::string>& excluded = kDefaultExcluded);
/// nullopt when the word has no embedding (unclassifiable).
std::optional<std::string> classify_keyword(const std::string& word, const AttributeSet& attrs,
                                            const EmbeddingStore& store,
                                            const std::set<std::string>& excluded = kDefaultExcluded);

struct LabeledKeyword {
    std::string word;
    std::string attribute;  // ground truth
    std::string klass;      // material class, e.g. wood
};

std::vector<LabeledKeyword> read_labeled_keywords(const std::string& path);

struct PrecisionCell {
    std::size_t true_positive = 0;
    std::size_t predicted = 0;
    std::optional<double> precision() const {
        if (predicted == 0) return std::nullopt;
        return static_cast<double>(true_positive) / static_cast<double>(predicted);
    }
};

struct PrecisionTable {
    std::vector<std::string> classes;
    std::vector<std::string> attributes;
    std::map<std::pair<std::string, std::string>, PrecisionCell> cells;  // (class, attribute)
    std::map<std::string, std::optional<double>> average;               // per attribute, mean over classes
    std::size_t unclassifiable = 0;
};

PrecisionTable generalization_precision(const std::vector<LabeledKeyword>& labeled, const AttributeSet& attrs,
                                        const EmbeddingStore& store,
                                        const std::set<std::string>& excluded = kDefaultExcluded);

}  // namespace descan
