#include "descan/retrieval.hpp"

#include "descan/common.hpp"
#include "descan/csv.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

namespace descan {

ImageCatalog::ImageCatalog(std::vector<RenderImage> images) : images_(std::move(images)) {
    std::sort(images_.begin(), images_.end(), [](const RenderImage& a, const RenderImage& b) { return a.image_id < b.image_id; });
    for (std::size_t i = 0; i < images_.size(); ++i)
        if (!index_.emplace(images_[i].image_id, i).second)
            throw DataError("duplicate image id '" + images_[i].image_id + "' in catalog");
}

const RenderImage* ImageCatalog::find(const std::string& image_id) const {
    auto it = index_.find(image_id);
    return it == index_.end() ? nullptr : &images_[it->second];
}

ImageCatalog read_image_catalog_csv(const std::string& path) {
    const auto t = csv::read_table(path);
    std::vector<RenderImage> images;
    for (const auto& r : t.rows) {
        try {
            RenderImage img;
            img.image_id = trim(t.at(r, "image_id"));
            img.material_id = trim(t.at(r, "material_id"));
            img.geometry = parse_geometry(trim(t.at(r, "geometry")));
            img.lighting = parse_lighting(trim(t.at(r, "lighting")));
            if (img.image_id.empty() || img.material_id.empty()) throw DataError("empty image or material id");
            images.push_back(std::move(img));
        } catch (const DataError& e) {
            throw DataError(e.what(), path, r.line);
        }
    }
    try {
        return ImageCatalog(std::move(images));
    } catch (const DataError& e) {
        throw DataError(e.what(), path);
    }
}

ImageCatalog catalog_from_corpus(const Corpus& corpus) { return ImageCatalog(corpus.images()); }

std::vector<RetrievalCase> read_cases_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file", path);
    std::vector<RetrievalCase> cases;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            RetrievalCase c;
            c.query_key = j.at("query_key").get<std::string>();
            c.truth_material = j.at("truth_material").get<std::string>();
            if (auto f = j.find("candidate_filter"); f != j.end() && !f->is_null()) {
                if (auto g = f->find("geometry"); g != f->end() && !g->is_null())
                    c.filter.geometry = parse_geometry(g->get<std::string>());
                if (auto l = f->find("lighting"); l != f->end() && !l->is_null())
                    c.filter.lighting = parse_lighting(l->get<std::string>());
            }
            if (auto ti = j.find("truth_image"); ti != j.end() && !ti->is_null()) c.truth_image = ti->get<std::string>();
            cases.push_back(std::move(c));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("bad case record: ") + e.what(), path, n);
        } catch (const DataError& e) {
            throw DataError(e.what(), path, n);
        }
    }
    return cases;
}

double cross_cosine(const EmbeddingStore& a, Eigen::Index i, const EmbeddingStore& b, Eigen::Index j) {
    return clamp_unit(ordered_dot(a.raw(i), b.raw(j)) / std::sqrt(a.squared_norm(i) * b.squared_norm(j)));
}

namespace {

struct Scored {
    double sim;
    const std::string* key;
    bool operator<(const Scored& o) const { return sim != o.sim ? sim > o.sim : *key < *o.key; }
};

}  // namespace

RecallTable topk_recall(const EmbeddingStore& queries, const EmbeddingStore& images, const ImageCatalog& catalog,
                        const std::vector<RetrievalCase>& cases, const std::vector<std::size_t>& ks, RecallMode mode,
                        unsigned threads) {
    if (cases.empty()) throw std::invalid_argument("topk_recall: no cases");
    if (ks.empty()) throw std::invalid_argument("topk_recall: no K values");
    for (auto k : ks)
        if (k == 0) throw std::invalid_argument("topk_recall: K must be >= 1");
    if (queries.dimension() != images.dimension())
        throw DataError("query and image embeddings differ in dimension (" + std::to_string(queries.dimension()) +
                        " vs " + std::to_string(images.dimension()) + ")");

    RecallTable t;
    t.ks = ks;
    std::sort(t.ks.begin(), t.ks.end());
    t.ks.erase(std::unique(t.ks.begin(), t.ks.end()), t.ks.end());
    t.first_hit.assign(cases.size(), 0);

    parallel_tasks(cases.size(), threads, [&](std::size_t c) {
        const auto& rc = cases[c];
        if (mode == RecallMode::image && !rc.truth_image)
            throw DataError("case " + std::to_string(c + 1) + " ('" + rc.query_key + "') has no truth_image");
        const Eigen::Index q = queries.index(rc.query_key);
        std::vector<Scored> scored;
        std::vector<char> truth;
        for (const auto& img : catalog.images()) {
            if (!rc.filter.accepts(img)) continue;
            const Eigen::Index row = images.index(img.image_id);
            scored.push_back({cross_cosine(queries, q, images, row), &img.image_id});
        }
        std::sort(scored.begin(), scored.end());
        std::size_t hit = 0;
        for (std::size_t i = 0; i < scored.size() && hit == 0; ++i) {
            const auto& key = *scored[i].key;
            const bool ok = mode == RecallMode::material ? catalog.find(key)->material_id == rc.truth_material
                                                         : key == *rc.truth_image;
            if (ok) hit = i + 1;
        }
        if (hit == 0)
            throw DataError("case " + std::to_string(c + 1) + " ('" + rc.query_key +
                            "'): ground truth missing from candidates");
        t.first_hit[c] = hit;
    });

    for (auto k : t.ks) {
        std::size_t hits = 0;
        for (auto h : t.first_hit) hits += h <= k;
        t.recall.push_back(static_cast<double>(hits) / static_cast<double>(cases.size()));
    }
    return t;
}

void write_recall_csv(const std::string& path, const RecallTable& table) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file", path);
    csv::write_row(out, {"K", "recall"});
    for (std::size_t i = 0; i < table.ks.size(); ++i)
        csv::write_row(out, {std::to_string(table.ks[i]), format_double(table.recall[i])});
}

std::vector<SearchHit> image_search(const EmbeddingStore& query_store, const std::string& query_key,
                                    const EmbeddingStore& candidates, std::size_t k,
                                    const std::vector<std::string>& candidate_keys) {
    const auto& keys = candidate_keys.empty() ? candidates.keys() : candidate_keys;
    if (keys.empty()) throw std::invalid_argument("image_search: empty candidate set");
    if (k == 0 || k > keys.size()) throw std::invalid_argument("image_search: k must be in [1, candidates]");
    if (query_store.dimension() != candidates.dimension()) throw DataError("query and candidate dimensions differ");
    const Eigen::Index q = query_store.index(query_key);
    std::vector<Scored> scored;
    scored.reserve(keys.size());
    for (const auto& key : keys) scored.push_back({cross_cosine(query_store, q, candidates, candidates.index(key)), &key});
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
    std::vector<SearchHit> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back({*scored[i].key, scored[i].sim});
    return out;
}

InvarianceResult invariance(const EmbeddingStore& images, const ImageCatalog& catalog, InvarianceMode mode) {
    // (material, fixed setting) -> rows of the renderings that vary
    std::map<std::string, std::map<int, std::vector<Eigen::Index>>> groups;
    for (const auto& img : catalog.images()) {
        const auto row = images.find(img.image_id);
        if (!row) continue;
        const int fixed = mode == InvarianceMode::geometry ? static_cast<int>(img.lighting) : static_cast<int>(img.geometry);
        groups[img.material_id][fixed].push_back(*row);
    }
    InvarianceResult r;
    for (const auto& [material, settings] : groups) {
        double sum = 0.0;
        std::size_t pairs = 0;
        for (const auto& [fixed, rows] : settings)
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t j = i + 1; j < rows.size(); ++j) {
                    sum += images.cosine_rows(rows[i], rows[j]);
                    ++pairs;
                }
        if (pairs == 0) {
            r.skipped.push_back(material);
            continue;
        }
        r.per_material[material] = sum / static_cast<double>(pairs);
        r.pairs[material] = pairs;
    }
    if (r.per_material.empty()) throw DataError("no material has two renderings differing only in the varied dimension");
    double sum = 0.0;
    for (const auto& [m, v] : r.per_material) sum += v;
    r.mean = sum / static_cast<double>(r.per_material.size());
    double ss = 0.0;
    for (const auto& [m, v] : r.per_material) ss += (v - r.mean) * (v - r.mean);
    r.std_dev = std::sqrt(ss / static_cast<double>(r.per_material.size()));
    return r;
}

StatResult compare_invariance(const InvarianceResult& first, const InvarianceResult& second) {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& [m, v] : first.per_material)
        if (auto it = second.per_material.find(m); it != second.per_material.end()) pairs.emplace_back(v, it->second);
    return wilcoxon_signed_rank(pairs);
}

std::vector<Keyword> extract_keywords(std::vector<ProcessedDescription> descriptions, const std::vector<std::string>& lexicon,
                                      const AttributeSet& attrs, const std::map<std::string, double>& psi,
                                      std::size_t max_descriptions) {
    std::sort(descriptions.begin(), descriptions.end(),
              [](const ProcessedDescription& a, const ProcessedDescription& b) { return a.description_id < b.description_id; });
    if (descriptions.size() > max_descriptions) descriptions.resize(max_descriptions);
    const std::set<std::string> lex(lexicon.begin(), lexicon.end());
    std::map<std::string, std::size_t> counts;
    for (const auto& d : descriptions) {
        std::set<std::string> seen;
        for (const auto& l : d.lemmas)
            if (lex.count(l) && attrs.attribute_of(l) && seen.insert(l).second) ++counts[l];
    }
    std::vector<Keyword> out;
    for (const auto& [lemma, n] : counts) out.push_back({lemma, attrs.attributes()[*attrs.attribute_of(lemma)].name, n});
    auto psi_of = [&](const std::string& a) {
        auto it = psi.find(a);
        return it == psi.end() ? std::numeric_limits<double>::infinity() : it->second;
    };
    std::sort(out.begin(), out.end(), [&](const Keyword& a, const Keyword& b) {
        if (a.descriptions != b.descriptions) return a.descriptions > b.descriptions;
        const double pa = psi_of(a.attribute), pb = psi_of(b.attribute);
        if (pa != pb) return pa < pb;
        return a.lemma < b.lemma;
    });
    return out;
}

}  // namespace descan
