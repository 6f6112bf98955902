#include "descan/attributes.hpp"

#include "descan/common.hpp"
#include "descan/csv.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

namespace descan {

double median_off_diagonal(const Eigen::MatrixXd& s) {
    const Eigen::Index n = s.rows();
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(n * (n - 1)));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) v.push_back(s(i, j));
    if (v.empty()) throw std::invalid_argument("median of an empty similarity set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

namespace {

void assign_to_exemplars(const Eigen::MatrixXd& s, ApResult& r) {
    const Eigen::Index n = s.rows();
    r.assignments.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = r.exemplars.front();
        for (auto k : r.exemplars) {
            if (k == i) {
                best = i;
                break;
            }
            if (s(i, k) > s(i, best)) best = k;
        }
        r.assignments[static_cast<std::size_t>(i)] = best;
    }
}

}  // namespace

ApResult affinity_propagation(const Eigen::MatrixXd& similarity, const ApOptions& options) {
    const Eigen::Index n = similarity.rows();
    if (similarity.cols() != n) throw std::invalid_argument("affinity_propagation: similarity must be square");
    if (n < 2) throw std::invalid_argument("affinity_propagation: need at least 2 items");
    if (!similarity.allFinite()) throw std::invalid_argument("affinity_propagation: non-finite similarity");
    if (!(options.damping >= 0.5 && options.damping < 1.0))
        throw std::invalid_argument("affinity_propagation: damping must be in [0.5, 1)");

    const double pref = std::holds_alternative<double>(options.preference) ? std::get<double>(options.preference)
                                                                           : median_off_diagonal(similarity);
    Eigen::MatrixXd s = similarity;
    s.diagonal().setConstant(pref);

    ApResult result;
    // All off-diagonal similarities equal: messages cannot break the symmetry.
    {
        const double first = similarity(0, 1);
        bool all_equal = true;
        for (Eigen::Index i = 0; i < n && all_equal; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (i != j && similarity(i, j) != first) {
                    all_equal = false;
                    break;
                }
        if (all_equal) {
            if (pref >= first) {
                for (Eigen::Index i = 0; i < n; ++i) result.exemplars.push_back(i);
            } else {
                result.exemplars.push_back(0);
            }
            assign_to_exemplars(s, result);
            result.converged = true;
            return result;
        }
    }

    const double lambda = options.damping;
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd next(n, n);
    std::vector<char> exemplar(static_cast<std::size_t>(n), 0);
    int stable = 0;

    int it = 0;
    for (; it < options.max_iterations; ++it) {
        // Responsibilities.
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = -std::numeric_limits<double>::infinity(), second = best;
            Eigen::Index best_k = 0;
            for (Eigen::Index k = 0; k < n; ++k) {
                const double v = a(i, k) + s(i, k);
                if (v > best) {
                    second = best;
                    best = v;
                    best_k = k;
                } else if (v > second) {
                    second = v;
                }
            }
            for (Eigen::Index k = 0; k < n; ++k) next(i, k) = s(i, k) - (k == best_k ? second : best);
        }
        r = lambda * r + (1.0 - lambda) * next;

        // Availabilities.
        for (Eigen::Index k = 0; k < n; ++k) {
            double col = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) col += i == k ? r(k, k) : std::max(0.0, r(i, k));
            for (Eigen::Index i = 0; i < n; ++i) {
                if (i == k) next(k, k) = col - r(k, k);
                else next(i, k) = std::min(0.0, col - std::max(0.0, r(i, k)));
            }
        }
        a = lambda * a + (1.0 - lambda) * next;

        bool changed = false;
        bool any = false;
        for (Eigen::Index k = 0; k < n; ++k) {
            const char e = (a(k, k) + r(k, k)) > 0.0;
            any = any || e;
            if (e != exemplar[static_cast<std::size_t>(k)]) {
                changed = true;
                exemplar[static_cast<std::size_t>(k)] = e;
            }
        }
        stable = changed ? 1 : stable + 1;
        if (any && stable >= options.convergence_iterations) {
            result.converged = true;
            ++it;
            break;
        }
    }
    result.iterations = it;

    for (Eigen::Index k = 0; k < n; ++k)
        if (exemplar[static_cast<std::size_t>(k)]) result.exemplars.push_back(k);
    if (result.exemplars.empty()) {
        Eigen::Index best = 0;
        (a.diagonal() + r.diagonal()).maxCoeff(&best);
        result.exemplars.push_back(best);
        result.converged = false;
    }
    assign_to_exemplars(s, result);
    return result;
}

// ---------------------------------------------------------------------------

AttributeSet::AttributeSet(std::vector<Attribute> attributes, std::set<std::string> outliers, bool allow_overlap)
    : attributes_(std::move(attributes)), outliers_(std::move(outliers)) {
    std::sort(attributes_.begin(), attributes_.end(), [](const Attribute& x, const Attribute& y) { return x.name < y.name; });
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
        if (i > 0 && attributes_[i - 1].name == attributes_[i].name)
            throw DataError("duplicate attribute name '" + attributes_[i].name + "'");
        for (const auto& m : attributes_[i].members) {
            auto& owners = lemma_index_[m];
            if (!owners.empty() && !allow_overlap) throw DataError("lemma '" + m + "' belongs to two attributes");
            owners.push_back(i);
            if (outliers_.count(m)) throw DataError("lemma '" + m + "' is both outlier and member");
        }
    }
}

std::optional<std::size_t> AttributeSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i)
        if (attributes_[i].name == name) return i;
    return std::nullopt;
}

std::optional<std::size_t> AttributeSet::attribute_of(const std::string& lemma) const {
    auto it = lemma_index_.find(lemma);
    if (it == lemma_index_.end()) return std::nullopt;
    return it->second.front();
}

const std::vector<std::size_t>& AttributeSet::attributes_of(const std::string& lemma) const {
    static const std::vector<std::size_t> none;
    auto it = lemma_index_.find(lemma);
    return it == lemma_index_.end() ? none : it->second;
}

Curation read_curation_csv(const std::string& path) {
    const auto t = csv::read_table(path);
    Curation c;
    for (const auto& r : t.rows) {
        try {
            const std::string lemma = trim(t.at(r, "lemma"));
            const std::string attr = trim(t.at(r, "attribute"));
            if (lemma.empty() || attr.empty()) throw DataError("empty lemma or attribute");
            auto [it, ok] = c.emplace(lemma, attr);
            if (!ok && it->second != attr) throw DataError("lemma '" + lemma + "' assigned twice");
        } catch (const DataError& e) {
            throw DataError(e.what(), path, r.line);
        }
    }
    return c;
}

void write_attribute_csv(const std::string& path, const AttributeSet& attrs) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file", path);
    std::set<std::pair<std::string, std::string>> rows;
    for (const auto& a : attrs.attributes())
        for (const auto& m : a.members) rows.emplace(m, a.name);
    for (const auto& o : attrs.outliers()) rows.emplace(o, kOutlier);
    csv::write_row(out, {"lemma", "attribute"});
    for (const auto& [lemma, attr] : rows) csv::write_row(out, {lemma, attr});
}

void write_cluster_csv(const std::string& path, const AttributeSet& attrs) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file", path);
    csv::write_row(out, {"lemma", "attribute", "x", "y"});
    for (const auto& a : attrs.attributes())
        for (const auto& m : a.members) csv::write_row(out, {m, a.name, "", ""});
}

namespace {

Attribute make_attribute(std::string name, std::set<std::string> members, const EmbeddingStore& store) {
    Attribute a;
    a.name = std::move(name);
    a.members = std::move(members);
    a.centroid = Eigen::VectorXd::Zero(store.dimension());
    for (const auto& m : a.members) a.centroid += store.raw(store.index(m)).cast<double>().transpose();
    a.centroid /= static_cast<double>(a.members.size());
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& m : a.members) {
        const double c = a.centroid.norm() > 0 ? cosine(store.raw(store.index(m)).transpose(), a.centroid) : 0.0;
        if (c > best) {
            best = c;
            a.exemplar = m;
        }
    }
    return a;
}

}  // namespace

AttributeSet build_attribute_set(const Curation& curation, const EmbeddingStore& store) {
    std::map<std::string, std::set<std::string>> groups;
    std::set<std::string> outliers;
    for (const auto& [lemma, attr] : curation) {
        if (!store.contains(lemma)) throw DataError("curated lemma '" + lemma + "' has no embedding");
        if (attr == kOutlier) outliers.insert(lemma);
        else groups[attr].insert(lemma);
    }
    std::vector<Attribute> attrs;
    for (auto& [name, members] : groups) attrs.push_back(make_attribute(name, std::move(members), store));
    return AttributeSet(std::move(attrs), std::move(outliers));
}

AttributeSet build_attribute_set(const Curation& curation) {
    std::map<std::string, Attribute> groups;
    std::set<std::string> outliers;
    for (const auto& [lemma, attr] : curation) {
        if (attr == kOutlier) {
            outliers.insert(lemma);
            continue;
        }
        auto& a = groups[attr];
        a.name = attr;
        a.members.insert(lemma);
    }
    std::vector<Attribute> attrs;
    for (auto& [name, a] : groups) attrs.push_back(std::move(a));
    return AttributeSet(std::move(attrs), std::move(outliers));
}

AttributeSet build_attribute_set(const std::vector<std::string>& lemmas, const ApResult& clusters,
                                 const std::optional<Curation>& curation, const EmbeddingStore& store) {
    if (curation && !curation->empty()) return build_attribute_set(*curation, store);
    if (clusters.assignments.size() != lemmas.size()) throw std::invalid_argument("cluster assignments do not match lemma list");
    std::map<Eigen::Index, std::set<std::string>> groups;
    for (std::size_t i = 0; i < lemmas.size(); ++i) {
        if (!store.contains(lemmas[i])) throw DataError("lemma '" + lemmas[i] + "' has no embedding");
        groups[clusters.assignments[i]].insert(lemmas[i]);
    }
    std::vector<Attribute> attrs;
    for (auto& [ex, members] : groups) {
        auto a = make_attribute(lemmas[static_cast<std::size_t>(ex)], std::move(members), store);
        a.exemplar = lemmas[static_cast<std::size_t>(ex)];
        attrs.push_back(std::move(a));
    }
    return AttributeSet(std::move(attrs), {});
}

AttributeProbabilities attribute_probabilities(const std::vector<ProcessedDescription>& corpus, const AttributeSet& attrs) {
    if (corpus.empty()) throw std::invalid_argument("attribute_probabilities: empty corpus");
    const auto k = static_cast<Eigen::Index>(attrs.size());
    AttributeProbabilities out;
    for (const auto& a : attrs.attributes()) out.names.push_back(a.name);
    out.descriptions = corpus.size();
    out.joint_count = Eigen::MatrixXd::Zero(k, k);
    std::vector<char> present(attrs.size());
    for (const auto& d : corpus) {
        std::fill(present.begin(), present.end(), 0);
        for (const auto& l : d.lemmas)
            for (auto a : attrs.attributes_of(l)) present[a] = 1;
        for (Eigen::Index i = 0; i < k; ++i) {
            if (!present[static_cast<std::size_t>(i)]) continue;
            for (Eigen::Index j = 0; j < k; ++j)
                if (present[static_cast<std::size_t>(j)]) out.joint_count(i, j) += 1.0;
        }
    }
    const double d = static_cast<double>(corpus.size());
    out.p = out.joint_count.diagonal() / d;
    out.p_cond.resize(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) {
            const double cj = out.joint_count(j, j);
            out.p_cond(i, j) = cj > 0 ? out.joint_count(i, j) / cj : std::numeric_limits<double>::quiet_NaN();
        }
    return out;
}

std::optional<std::string> classify_vector(const Eigen::Ref<const Eigen::VectorXd>& v, const AttributeSet& attrs,
                                           const std::set<std::string>& excluded) {
    std::optional<std::string> best;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (const auto& a : attrs.attributes()) {  // name-ascending, so strict > keeps the smallest name on ties
        if (excluded.count(a.name)) continue;
        if (a.centroid.size() == 0) throw std::invalid_argument("classify: attribute '" + a.name + "' has no centroid");
        if (a.centroid.size() != v.size()) throw std::invalid_argument("classify: dimension mismatch");
        const double c = cosine(v, a.centroid);
        if (c > best_sim) {
            best_sim = c;
            best = a.name;
        }
    }
    return best;
}

std::optional<std::string> classify_keyword(const std::string& word, const AttributeSet& attrs,
                                            const EmbeddingStore& store, const std::set<std::string>& excluded) {
    const auto row = store.find(word);
    if (!row) return std::nullopt;
    const Eigen::VectorXd v = store.raw(*row).cast<double>().transpose();
    return classify_vector(v, attrs, excluded);
}

std::vector<LabeledKeyword> read_labeled_keywords(const std::string& path) {
    const auto t = csv::read_table(path);
    std::vector<LabeledKeyword> out;
    for (const auto& r : t.rows) {
        try {
            out.push_back({trim(t.at(r, "word")), trim(t.at(r, "attribute")), trim(t.at(r, "class"))});
        } catch (const DataError& e) {
            throw DataError(e.what(), path, r.line);
        }
    }
    return out;
}

PrecisionTable generalization_precision(const std::vector<LabeledKeyword>& labeled, const AttributeSet& attrs,
                                        const EmbeddingStore& store, const std::set<std::string>& excluded) {
    PrecisionTable t;
    std::set<std::string> classes;
    for (const auto& a : attrs.attributes())
        if (!excluded.count(a.name)) t.attributes.push_back(a.name);
    for (const auto& kw : labeled) {
        classes.insert(kw.klass);
        const auto predicted = classify_keyword(kw.word, attrs, store, excluded);
        if (!predicted) {
            ++t.unclassifiable;
            continue;
        }
        auto& cell = t.cells[{kw.klass, *predicted}];
        ++cell.predicted;
        if (*predicted == kw.attribute) ++cell.true_positive;
    }
    t.classes.assign(classes.begin(), classes.end());
    for (const auto& a : t.attributes) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& c : t.classes) {
            auto it = t.cells.find({c, a});
            if (it == t.cells.end()) continue;
            if (auto p = it->second.precision()) {
                sum += *p;
                ++count;
            }
        }
        t.average[a] = count ? std::optional<double>(sum / static_cast<double>(count)) : std::nullopt;
    }
    return t;
}

}  // namespace descan
