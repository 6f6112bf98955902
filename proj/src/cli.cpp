#include "descan/cli.hpp"

#include "descan/attributes.hpp"
#include "descan/common.hpp"
#include "descan/corpus.hpp"
#include "descan/csv.hpp"
#include "descan/embeddings.hpp"
#include "descan/imagestats.hpp"
#include "descan/lexistats.hpp"
#include "descan/retrieval.hpp"
#include "descan/simstats.hpp"
#include "descan/stattests.hpp"
#include "descan/structure.hpp"
#include "descan/textproc.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#ifndef DESCAN_VERSION
#define DESCAN_VERSION "0.0.0"
#endif

namespace descan::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) throw std::runtime_error("SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    unsigned threads = default_threads();
};

/// One subcommand invocation: output directory, recorded inputs and outputs.
class Run {
public:
    Run(const std::string& name, const Globals& g, const CLI::App& sub)
        : name_(name), seed_(g.seed), dir_(fs::path(g.output_dir) / "artifacts" / name) {
        config_ = sub.config_to_str(true, false) + "seed=" + std::to_string(seed_) + "\n";
        hash_ = sha256_hex(config_);
        fs::create_directories(dir_);
    }

    const std::string& config_hash() const { return hash_; }
    std::uint64_t seed() const { return seed_; }
    const fs::path& dir() const { return dir_; }

    void input(const std::string& path) {
        if (!path.empty()) inputs_.push_back(path);
    }
    std::string output(const std::string& name) {
        outputs_.push_back(name);
        return (dir_ / name).string();
    }
    void write_json(const std::string& name, json j) {
        j["config_hash"] = hash_;
        j["seed"] = seed_;
        std::ofstream out(output(name));
        if (!out) throw DataError("cannot write file", (dir_ / name).string());
        out << j.dump(2) << '\n';
    }

    void finish() {
        json m;
        m["subcommand"] = name_;
        m["version"] = DESCAN_VERSION;
        m["seed"] = seed_;
        m["config_hash"] = hash_;
        m["config"] = config_;
        json in = json::array();
        for (const auto& p : inputs_) {
            json e;
            e["path"] = p;
            if (fs::is_regular_file(p)) e["sha256"] = sha256_file(p);
            else e["sha256"] = nullptr;
            in.push_back(e);
        }
        m["inputs"] = in;
        json out = json::array();
        for (const auto& n : outputs_) out.push_back({{"name", n}, {"sha256", sha256_file((dir_ / n).string())}});
        m["outputs"] = out;
        char stamp[32];
        const std::time_t now = std::time(nullptr);
        std::tm tm{};
        gmtime_r(&now, &tm);
        std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
        m["timestamp"] = stamp;
        std::ofstream f(dir_ / "manifest.json");
        f << m.dump(2) << '\n';
    }

private:
    std::string name_;
    std::uint64_t seed_;
    fs::path dir_;
    std::string config_;
    std::string hash_;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
};

json summary_json(const Summary& s) {
    return {{"mean", s.mean}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3},
            {"iqr", s.iqr},   {"min", s.min},       {"max", s.max}};
}

// ---------------------------------------------------------------------------
// Shared text options

struct TextInput {
    std::string corpus;
    std::string pos;
    std::string lemmas;
    std::string stopwords;
    bool no_spell = false;

    void add(CLI::App* sub) {
        sub->add_option("--input", corpus, "Corpus file (.jsonl or .csv)")->required()->check(CLI::ExistingFile);
        sub->add_option("--pos", pos, "POS annotation JSONL")->check(CLI::ExistingFile);
        sub->add_option("--lemmas", lemmas, "Inflection table TSV (default: bundled)")->check(CLI::ExistingFile);
        sub->add_option("--stopwords", stopwords, "Stop-word list (default: bundled)")->check(CLI::ExistingFile);
        sub->add_flag("--no-spell", no_spell, "Disable spelling correction");
    }

    Corpus load_corpus(Run& run) const {
        run.input(corpus);
        Corpus c = ingest(corpus, format_from_path(corpus));
        if (!pos.empty()) {
            run.input(pos);
            c = c.with_pos_annotations(load_pos_annotations(pos));
        }
        return c;
    }

    LemmaDictionary dictionary(Run& run) const {
        if (lemmas.empty() && stopwords.empty()) return bundled_dictionary();
        const std::string dir = bundled_data_dir();
        const std::string l = lemmas.empty() ? dir + "/lemmas.tsv" : lemmas;
        const std::string s = stopwords.empty() ? dir + "/stopwords.txt" : stopwords;
        run.input(l);
        run.input(s);
        return LemmaDictionary::load(l, s);
    }

    std::vector<ProcessedDescription> processed(Run& run, unsigned threads) const {
        const Corpus c = load_corpus(run);
        return process_corpus(c, dictionary(run), !no_spell, threads);
    }
};

std::vector<std::string> lexicon_lemmas(const std::string& path) {
    std::vector<std::string> out;
    for (const auto& s : read_lexicon_csv(path)) out.push_back(s.lemma);
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_ingest(Run& run, const std::string& input, const std::string& pos) {
    run.input(input);
    Corpus c = ingest(input, format_from_path(input));
    if (!pos.empty()) {
        run.input(pos);
        c = c.with_pos_annotations(load_pos_annotations(pos));
    }
    write_jsonl(c, run.output("corpus.jsonl"));
    json j;
    j["descriptions"] = c.size();
    j["images"] = c.images().size();
    j["describers"] = c.describers().size();
    j["valid"] = c.valid_count();
    std::map<std::string, std::size_t> by_status;
    for (const auto& d : c.descriptions()) ++by_status[std::string(to_string(d.status))];
    j["by_status"] = by_status;
    j["pos_annotated"] = c.pos_annotations().size();
    run.write_json("summary.json", j);
}

void cmd_validate(Run& run, const std::string& input, const std::string& audits, double threshold,
                  const ValidationPolicy& policy) {
    run.input(input);
    Corpus c = ingest(input, format_from_path(input));
    json j;
    if (!audits.empty()) {
        run.input(audits);
        const auto entries = load_audits(audits);
        c = audit_apply(c, entries, threshold);
        write_jsonl(c, run.output("corpus.jsonl"));
        j["audits_applied"] = entries.size();
        j["cascade_threshold"] = threshold;
    }
    const auto report = validate(c, policy);
    j["descriptions"] = c.size();
    j["valid"] = c.valid_count();
    j["clean"] = report.clean();
    json lf = json::array();
    for (const auto& f : report.length_flags)
        lf.push_back({{"description_id", f.description_id}, {"word_count", f.word_count}, {"kind", f.under ? "under" : "over"}});
    j["length_flags"] = lf;
    json df = json::array();
    for (const auto& f : report.describer_flags)
        df.push_back({{"describer_id", f.describer_id},
                      {"count", f.count},
                      {"share", f.share},
                      {"below_min_count", f.below_min_count},
                      {"over_share", f.over_share}});
    j["describer_flags"] = df;
    json imf = json::array();
    for (const auto& f : report.image_flags) imf.push_back({{"image_id", f.image_id}, {"valid_count", f.valid_count}});
    j["image_flags"] = imf;
    run.write_json("validation.json", j);
}

void cmd_stats(Run& run, const TextInput& text, int bin_width, unsigned threads) {
    const auto processed = text.processed(run, threads);
    const auto s = corpus_stats(processed, bin_width);
    json j;
    j["descriptions"] = s.descriptions;
    j["total_tokens"] = s.total_tokens;
    j["total_raw_tokens"] = s.total_raw_tokens;
    j["distinct_types"] = s.distinct_types;
    j["distinct_lemmas"] = s.distinct_lemmas;
    j["sum_types"] = s.sum_types;
    j["sum_lemmas"] = s.sum_lemmas;
    j["tokens"] = summary_json(s.tokens);
    j["types"] = summary_json(s.types);
    j["lemmas"] = summary_json(s.lemmas);
    j["pos_annotated"] = s.pos_annotated;
    json pos = json::object();
    for (const auto& [tag, sum] : s.pos_share) pos[std::string(to_string(tag))] = summary_json(sum);
    j["pos_share"] = pos;
    run.write_json("stats.json", j);

    std::ofstream out(run.output("length_histogram.csv"));
    csv::write_row(out, {"bin_start", "raw", "processed"});
    std::set<int> bins;
    for (const auto& [b, n] : s.length_histogram.raw) bins.insert(b);
    for (const auto& [b, n] : s.length_histogram.processed) bins.insert(b);
    auto get = [](const std::map<int, std::size_t>& m, int b) {
        auto it = m.find(b);
        return it == m.end() ? std::size_t{0} : it->second;
    };
    for (int b : bins)
        csv::write_row(out, {std::to_string(b), std::to_string(get(s.length_histogram.raw, b)),
                             std::to_string(get(s.length_histogram.processed, b))});
}

void cmd_lexicon(Run& run, const TextInput& text, double target, unsigned threads) {
    const auto processed = text.processed(run, threads);
    const auto ranking = lemma_ranking(processed, threads);
    std::vector<std::string> names;
    names.reserve(ranking.size());
    for (const auto& s : ranking) names.push_back(s.lemma);
    const auto curve = coverage_curve(processed, names);
    const auto lex = select_lexicon(curve, names, target);
    write_lexicon_csv(run.output("lexicon.csv"), lex, ranking);
    write_curve_csv(run.output("coverage.csv"), curve);
    Lexicon all{names, names.size(), curve.empty() ? 0.0 : curve.back().mean_coverage};
    write_lexicon_csv(run.output("ranking.csv"), all, ranking);
    json j;
    j["target"] = target;
    j["k"] = lex.k;
    j["coverage"] = lex.coverage;
    j["lemmas_total"] = names.size();
    j["descriptions"] = processed.size();
    run.write_json("lexicon.json", j);
}

struct AttributeArgs {
    std::string lexicon, vectors, curation, keywords;
    TextInput text;
    bool with_corpus = false;
    std::optional<double> preference;
    double damping = 0.9;
    int convergence = 50;
    int max_iterations = 1000;
    std::vector<std::string> exclude{kDefaultExcluded.begin(), kDefaultExcluded.end()};
};

void cmd_attributes(Run& run, const AttributeArgs& a, unsigned threads) {
    run.input(a.lexicon);
    run.input(a.vectors);
    const auto lemmas_all = lexicon_lemmas(a.lexicon);
    const EmbeddingStore store = load_vectors(a.vectors);
    std::vector<std::string> lemmas, missing;
    for (const auto& l : lemmas_all) (store.contains(l) ? lemmas : missing).push_back(l);
    if (lemmas.size() < 2) throw DataError("fewer than 2 lexicon lemmas have embeddings", a.vectors);

    std::optional<Curation> curation;
    if (!a.curation.empty()) {
        run.input(a.curation);
        curation = read_curation_csv(a.curation);
    }
    ApOptions opt;
    if (a.preference) opt.preference = *a.preference;
    opt.damping = a.damping;
    opt.convergence_iterations = a.convergence;
    opt.max_iterations = a.max_iterations;
    const Eigen::MatrixXd s = similarity_matrix(store, lemmas);
    const ApResult ap = affinity_propagation(s, opt);
    const AttributeSet attrs = build_attribute_set(lemmas, ap, curation, store);
    write_attribute_csv(run.output("attributes.csv"), attrs);
    write_cluster_csv(run.output("clusters.csv"), attrs);

    json j;
    j["lemmas"] = lemmas.size();
    j["missing_vectors"] = missing;
    j["preference"] = std::holds_alternative<double>(opt.preference) ? std::get<double>(opt.preference) : median_off_diagonal(s);
    j["damping"] = opt.damping;
    j["converged"] = ap.converged;
    j["iterations"] = ap.iterations;
    j["clusters"] = ap.exemplars.size();
    j["curated"] = curation.has_value();
    json list = json::array();
    for (const auto& at : attrs.attributes())
        list.push_back({{"name", at.name}, {"exemplar", at.exemplar}, {"size", at.members.size()}});
    j["attributes"] = list;
    j["outliers"] = attrs.outliers();

    if (a.with_corpus) {
        const auto processed = a.text.processed(run, threads);
        const auto p = attribute_probabilities(processed, attrs);
        std::ofstream out(run.output("probabilities.csv"));
        std::vector<std::string> head{"attribute", "p"};
        for (const auto& n : p.names) head.push_back("given_" + n);
        csv::write_row(out, head);
        for (Eigen::Index i = 0; i < p.p.size(); ++i) {
            std::vector<std::string> row{p.names[static_cast<std::size_t>(i)], format_double(p.p(i))};
            for (Eigen::Index k = 0; k < p.p.size(); ++k)
                row.push_back(std::isnan(p.p_cond(i, k)) ? "n/a" : format_double(p.p_cond(i, k)));
            csv::write_row(out, row);
        }
        j["descriptions"] = p.descriptions;
    }
    if (!a.keywords.empty()) {
        run.input(a.keywords);
        const std::set<std::string> excluded(a.exclude.begin(), a.exclude.end());
        const auto table = generalization_precision(read_labeled_keywords(a.keywords), attrs, store, excluded);
        std::ofstream out(run.output("precision.csv"));
        csv::write_row(out, {"class", "attribute", "true_positive", "predicted", "precision"});
        for (const auto& c : table.classes)
            for (const auto& at : table.attributes) {
                auto it = table.cells.find({c, at});
                const PrecisionCell cell = it == table.cells.end() ? PrecisionCell{} : it->second;
                const auto pr = cell.precision();
                csv::write_row(out, {c, at, std::to_string(cell.true_positive), std::to_string(cell.predicted),
                                     pr ? format_double(*pr) : "n/a"});
            }
        for (const auto& at : table.attributes) {
            const auto& avg = table.average.at(at);
            csv::write_row(out, {"avg", at, "", "", avg ? format_double(*avg) : "n/a"});
        }
        j["unclassifiable_keywords"] = table.unclassifiable;
    }
    run.write_json("attributes.json", j);
}

void cmd_structure(Run& run, const TextInput& text, const std::string& attributes, double alpha,
                   const std::string& correction, unsigned threads) {
    run.input(attributes);
    const AttributeSet attrs = build_attribute_set(read_curation_csv(attributes));
    const auto processed = text.processed(run, threads);
    const RankTable table = rank_table(processed, attrs, threads);
    const Correction corr = correction == "holm" ? Correction::holm
                            : correction == "bonferroni" ? Correction::bonferroni
                                                         : Correction::none;
    const StructureResult r = structure_test(table, alpha, corr);
    write_rank_product_csv(run.output("rank_product.csv"), table, r);
    json j;
    j["kruskal_wallis"] = to_json(r.kruskal);
    j["alpha"] = alpha;
    j["correction"] = correction;
    json order = json::array();
    for (auto a : r.tested)
        order.push_back({{"attribute", table.attributes[a]},
                         {"psi", *r.psi[a]},
                         {"descriptions", table.count(a)},
                         {"group", *r.group[a]}});
    j["attributes"] = order;
    json pairs = json::array();
    for (std::size_t i = 0; i < r.tested.size(); ++i)
        for (std::size_t k = i + 1; k < r.tested.size(); ++k) {
            const auto ii = static_cast<Eigen::Index>(i), kk = static_cast<Eigen::Index>(k);
            pairs.push_back({{"a", table.attributes[r.tested[i]]},
                             {"b", table.attributes[r.tested[k]]},
                             {"z", r.pairwise.z(ii, kk)},
                             {"p_raw", r.pairwise.p_raw(ii, kk)},
                             {"p", r.pairwise.p(ii, kk)}});
        }
    j["pairwise"] = pairs;
    run.write_json("structure.json", j);
}

struct SimArgs {
    std::string vectors, labels, corpus, sampling = "stratified", ranking = "exact";
    std::size_t permutations = 999, per_image = 5, max_images = 1000, block = 256;
};

void cmd_simstats(Run& run, const SimArgs& a, unsigned threads) {
    run.input(a.vectors);
    const EmbeddingStore store = load_vectors(a.vectors);
    std::map<std::string, std::string> labels;
    if (!a.labels.empty()) {
        run.input(a.labels);
        const auto t = csv::read_table(a.labels);
        for (const auto& r : t.rows) {
            const std::string key = trim(t.at(r, "description_id"));
            if (!labels.emplace(key, trim(t.at(r, "image_id"))).second)
                throw DataError("duplicate description id '" + key + "'", a.labels, r.line);
        }
    } else {
        run.input(a.corpus);
        const Corpus c = ingest(a.corpus, format_from_path(a.corpus));
        for (const auto& d : c.descriptions())
            if (is_valid(d.status)) labels.emplace(d.id, d.image_id);
    }
    SimilarityOptions opt;
    opt.block_size = a.block;
    opt.threads = threads;
    opt.sampling = a.sampling == "full" ? AnosimSampling::full
                   : a.sampling == "none" ? AnosimSampling::none
                                          : AnosimSampling::stratified;
    opt.per_image = a.per_image;
    opt.max_images = a.max_images;
    opt.anosim.permutations = a.permutations;
    opt.anosim.seed = run.seed();
    opt.anosim.ranking = a.ranking == "histogram" ? AnosimRanking::histogram : AnosimRanking::exact;
    opt.anosim.threads = threads;
    const auto s = intra_inter(store, labels, opt);
    run.write_json("similarity.json", to_json(s, opt));
}

struct RetrievalArgs {
    std::string queries, images, catalog, corpus, cases, mode = "material", baseline, search;
    std::vector<std::size_t> ks = kDefaultKs;
    std::size_t top = 10;
};

ImageCatalog load_catalog(Run& run, const std::string& catalog, const std::string& corpus) {
    if (!catalog.empty()) {
        run.input(catalog);
        return read_image_catalog_csv(catalog);
    }
    run.input(corpus);
    return catalog_from_corpus(ingest(corpus, format_from_path(corpus)));
}

int cmd_retrieval(Run& run, const RetrievalArgs& a, unsigned threads, std::ostream& err) {
    run.input(a.queries);
    run.input(a.images);
    const EmbeddingStore queries = load_vectors(a.queries);
    const EmbeddingStore images = load_vectors(a.images);
    int status = 0;
    json j;
    if (!a.cases.empty()) {
        const ImageCatalog catalog = load_catalog(run, a.catalog, a.corpus);
        run.input(a.cases);
        const auto cases = read_cases_jsonl(a.cases);
        const auto table = topk_recall(queries, images, catalog, cases, a.ks,
                                       a.mode == "image" ? RecallMode::image : RecallMode::material, threads);
        const std::string recall_path = run.output("recall.csv");
        write_recall_csv(recall_path, table);
        std::ofstream ranks(run.output("ranks.csv"));
        csv::write_row(ranks, {"query_key", "first_hit"});
        for (std::size_t i = 0; i < cases.size(); ++i)
            csv::write_row(ranks, {cases[i].query_key, std::to_string(table.first_hit[i])});
        j["cases"] = cases.size();
        j["mode"] = a.mode;
        json rec = json::array();
        for (std::size_t i = 0; i < table.ks.size(); ++i) rec.push_back({{"K", table.ks[i]}, {"recall", table.recall[i]}});
        j["recall"] = rec;
        if (!a.baseline.empty()) {
            run.input(a.baseline);
            ranks.close();
            const bool same = read_file(a.baseline) == read_file(recall_path);
            j["baseline_match"] = same;
            if (!same) {
                err << "recall table differs from baseline " << a.baseline << '\n';
                status = 1;
            }
        }
    }
    if (!a.search.empty()) {
        const auto hits = image_search(queries, a.search, images, std::min(a.top, images.size()));
        std::ofstream out(run.output("search.csv"));
        csv::write_row(out, {"rank", "key", "similarity"});
        for (std::size_t i = 0; i < hits.size(); ++i)
            csv::write_row(out, {std::to_string(i + 1), hits[i].key, format_double(hits[i].similarity)});
        j["search_query"] = a.search;
    }
    if (a.cases.empty() && a.search.empty()) throw UsageError("retrieval needs --cases or --search");
    run.write_json("retrieval.json", j);
    return status;
}

json invariance_json(const InvarianceResult& r) {
    json j;
    j["mean"] = r.mean;
    j["std"] = r.std_dev;
    j["materials"] = r.per_material.size();
    j["skipped"] = r.skipped;
    return j;
}

void cmd_invariance(Run& run, const std::string& images, const std::string& compare, const std::string& catalog,
                    const std::string& corpus, const std::string& mode) {
    run.input(images);
    const EmbeddingStore store = load_vectors(images);
    const ImageCatalog cat = load_catalog(run, catalog, corpus);
    const InvarianceMode m = mode == "lighting" ? InvarianceMode::lighting : InvarianceMode::geometry;
    const auto r = invariance(store, cat, m);
    json j;
    j["mode"] = mode;
    j["primary"] = invariance_json(r);
    std::optional<InvarianceResult> other;
    if (!compare.empty()) {
        run.input(compare);
        other = invariance(load_vectors(compare), cat, m);
        j["comparison"] = invariance_json(*other);
        j["wilcoxon"] = to_json(compare_invariance(r, *other));
    }
    std::ofstream out(run.output("per_material.csv"));
    if (other) csv::write_row(out, {"material_id", "pairs", "mean_cosine", "comparison_mean_cosine"});
    else csv::write_row(out, {"material_id", "pairs", "mean_cosine"});
    for (const auto& [mat, v] : r.per_material) {
        std::vector<std::string> row{mat, std::to_string(r.pairs.at(mat)), format_double(v)};
        if (other) {
            auto it = other->per_material.find(mat);
            row.push_back(it == other->per_material.end() ? "n/a" : format_double(it->second));
        }
        csv::write_row(out, row);
    }
    run.write_json("invariance.json", j);
}

void cmd_keywords(Run& run, const TextInput& text, const std::string& lexicon, const std::string& attributes,
                  const std::string& rank_products, const std::vector<std::string>& image_ids, std::size_t max_desc,
                  unsigned threads) {
    run.input(lexicon);
    run.input(attributes);
    run.input(rank_products);
    const auto lex = lexicon_lemmas(lexicon);
    const AttributeSet attrs = build_attribute_set(read_curation_csv(attributes));
    std::map<std::string, double> psi;
    {
        const auto t = csv::read_table(rank_products);
        for (const auto& r : t.rows) {
            const std::string v = trim(t.at(r, "psi"));
            if (v == "n/a") continue;
            try {
                psi[trim(t.at(r, "attribute"))] = std::stod(v);
            } catch (const std::logic_error&) {
                throw DataError("bad psi value '" + v + "'", rank_products, r.line);
            }
        }
    }
    const Corpus corpus = text.load_corpus(run);
    const auto processed = process_corpus(corpus, text.dictionary(run), !text.no_spell, threads);
    std::map<std::string, std::vector<ProcessedDescription>> by_image;
    for (const auto& p : processed) by_image[corpus.find_description(p.description_id)->image_id].push_back(p);
    std::vector<std::string> ids = image_ids;
    if (ids.empty())
        for (const auto& [id, v] : by_image) ids.push_back(id);
    std::ofstream out(run.output("keywords.csv"));
    csv::write_row(out, {"image_id", "rank", "lemma", "attribute", "descriptions"});
    for (const auto& id : ids) {
        if (!corpus.find_image(id)) throw DataError("unknown image id '" + id + "'");
        auto it = by_image.find(id);
        if (it == by_image.end()) continue;
        const auto kw = extract_keywords(it->second, lex, attrs, psi, max_desc);
        for (std::size_t i = 0; i < kw.size(); ++i)
            csv::write_row(out, {id, std::to_string(i + 1), kw[i].lemma, kw[i].attribute, std::to_string(kw[i].descriptions)});
    }
}

void cmd_imagestats(Run& run, const std::string& dir, const GlcmOptions& opt, unsigned threads) {
    run.input(dir);
    const auto values = directory_entropies(dir, opt, threads);
    std::vector<double> v;
    for (const auto& e : values) v.push_back(e.entropy);
    write_entropy_csv(run.output("entropy.csv"), values);
    write_histogram_csv(run.output("histogram.csv"), entropy_histogram(v, opt.bins, opt.levels));
    const Summary s = summarize(v);
    json j;
    j["images"] = values.size();
    j["levels"] = opt.levels;
    json offs = json::array();
    for (const auto& o : opt.offsets) offs.push_back({o.dx, o.dy});
    j["offsets"] = offs;
    j["symmetric"] = opt.symmetric;
    j["entropy"] = summary_json(s);
    run.write_json("entropy.json", j);
}

// ---------------------------------------------------------------------------
// Report

std::optional<json> read_json(const fs::path& p) {
    if (!fs::is_regular_file(p)) return std::nullopt;
    return json::parse(read_file(p.string()));
}

std::string fmt(const json& v, int digits = 3) {
    if (v.is_null()) return "n/a";
    if (v.is_number_float()) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(digits);
        s << v.get<double>();
        return s.str();
    }
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

void cmd_report(Run& run, const fs::path& root) {
    const fs::path art = root / "artifacts";
    json j;
    std::ostringstream md;
    md << "# Analysis report\n\n";
    std::vector<std::string> missing;

    if (auto s = read_json(art / "stats" / "stats.json")) {
        run.input((art / "stats" / "stats.json").string());
        j["corpus"] = {{"descriptions", (*s)["descriptions"]},
                       {"total_tokens", (*s)["total_tokens"]},
                       {"distinct_types", (*s)["distinct_types"]},
                       {"distinct_lemmas", (*s)["distinct_lemmas"]},
                       {"tokens", (*s)["tokens"]},
                       {"types", (*s)["types"]},
                       {"lemmas", (*s)["lemmas"]}};
        md << "## Corpus\n\n| measure | total | mean | median | IQR |\n|---|---|---|---|---|\n";
        for (const char* k : {"tokens", "types", "lemmas"}) {
            const auto& sum = (*s)[k];
            const char* total = std::string(k) == "tokens" ? "total_tokens"
                                : std::string(k) == "types" ? "distinct_types"
                                                            : "distinct_lemmas";
            md << "| " << k << " | " << fmt((*s)[total]) << " | " << fmt(sum["mean"], 2) << " | " << fmt(sum["median"], 1)
               << " | " << fmt(sum["iqr"], 1) << " |\n";
        }
        md << "\n" << (*s)["descriptions"].get<std::size_t>() << " descriptions.\n\n";
    } else {
        missing.push_back("stats");
    }

    if (auto l = read_json(art / "lexicon" / "lexicon.json")) {
        run.input((art / "lexicon" / "lexicon.json").string());
        j["lexicon"] = {{"target", (*l)["target"]}, {"k", (*l)["k"]}, {"coverage", (*l)["coverage"]}};
        md << "## Lexicon\n\n" << fmt((*l)["k"]) << " lemmas reach mean coverage " << fmt((*l)["coverage"], 4)
           << " (target " << fmt((*l)["target"], 2) << ").\n\n";
    } else {
        missing.push_back("lexicon");
    }

    if (auto st = read_json(art / "structure" / "structure.json")) {
        run.input((art / "structure" / "structure.json").string());
        j["rank_product"] = {{"kruskal_wallis", (*st)["kruskal_wallis"]}, {"attributes", (*st)["attributes"]}};
        md << "## Attributes by rank product\n\n| attribute | psi | group |\n|---|---|---|\n";
        for (const auto& a : (*st)["attributes"])
            md << "| " << fmt(a["attribute"]) << " | " << fmt(a["psi"], 2) << " | " << fmt(a["group"]) << " |\n";
        const auto& kw = (*st)["kruskal_wallis"];
        md << "\nKruskal-Wallis H(" << fmt(kw["df"]) << ") = " << fmt(kw["statistic"], 2) << ", p = " << fmt(kw["p_value"], 4)
           << ".\n\n";
    } else {
        missing.push_back("structure");
    }

    if (auto sm = read_json(art / "simstats" / "similarity.json")) {
        run.input((art / "simstats" / "similarity.json").string());
        json t = *sm;
        t.erase("config_hash");
        t.erase("seed");
        j["similarity"] = t;
        md << "## Description similarity\n\n| intra-image | inter-image | ANOSIM R | p |\n|---|---|---|---|\n";
        const json& an = (*sm)["anosim"];
        md << "| " << fmt((*sm)["intra_mean"]) << " (" << fmt((*sm)["intra_std"]) << ") | " << fmt((*sm)["inter_mean"])
           << " (" << fmt((*sm)["inter_std"]) << ") | " << (an.is_null() ? "n/a" : fmt(an["statistic"]))
           << " | " << (an.is_null() ? "n/a" : fmt(an["p_value"])) << " |\n\n";
    } else {
        missing.push_back("simstats");
    }

    if (fs::is_regular_file(art / "retrieval" / "recall.csv")) {
        const std::string p = (art / "retrieval" / "recall.csv").string();
        run.input(p);
        const auto t = csv::read_table(p);
        json rec = json::array();
        md << "## Top-K retrieval\n\n| K | recall (%) |\n|---|---|\n";
        for (const auto& r : t.rows) {
            const double v = std::stod(t.at(r, "recall"));
            rec.push_back({{"K", std::stoul(t.at(r, "K"))}, {"recall", v}});
            md << "| " << t.at(r, "K") << " | " << fmt(json(100.0 * v), 2) << " |\n";
        }
        md << "\n";
        j["retrieval"] = rec;
    } else {
        missing.push_back("retrieval");
    }

    if (auto in = read_json(art / "invariance" / "invariance.json")) {
        run.input((art / "invariance" / "invariance.json").string());
        json t = *in;
        t.erase("config_hash");
        t.erase("seed");
        j["invariance"] = t;
        md << "## Invariance (" << fmt((*in)["mode"]) << ")\n\n| store | mean | std |\n|---|---|---|\n";
        md << "| primary | " << fmt((*in)["primary"]["mean"]) << " | " << fmt((*in)["primary"]["std"]) << " |\n";
        if (in->contains("comparison")) {
            md << "| comparison | " << fmt((*in)["comparison"]["mean"]) << " | " << fmt((*in)["comparison"]["std"]) << " |\n";
            md << "\nWilcoxon signed-rank: r = " << fmt((*in)["wilcoxon"]["effect_size"]) << ", p = "
               << fmt((*in)["wilcoxon"]["p_value"], 6) << ".\n";
        }
        md << "\n";
    } else {
        missing.push_back("invariance");
    }

    if (auto e = read_json(art / "imagestats" / "entropy.json")) {
        run.input((art / "imagestats" / "entropy.json").string());
        j["image_entropy"] = {{"images", (*e)["images"]}, {"entropy", (*e)["entropy"]}};
        md << "## GLCM entropy\n\n" << fmt((*e)["images"]) << " images, mean " << fmt((*e)["entropy"]["mean"])
           << " bits, IQR " << fmt((*e)["entropy"]["iqr"]) << ".\n\n";
    } else {
        missing.push_back("imagestats");
    }

    j["missing_sections"] = missing;
    if (!missing.empty()) {
        md << "Sections without artifacts: ";
        for (std::size_t i = 0; i < missing.size(); ++i) md << (i ? ", " : "") << missing[i];
        md << ".\n";
    }
    run.write_json("report.json", j);
    std::ofstream out(run.output("report.md"));
    out << md.str();
}

Offset parse_offset(const std::string& s) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw UsageError("offset '" + s + "' must be dx,dy");
    try {
        return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
    } catch (const std::logic_error&) {
        throw UsageError("offset '" + s + "' must be dx,dy");
    }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Corpus statistics and retrieval evaluation for image-description datasets", "descan"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.allow_config_extras(false);
    app.set_config("--config", "", "key=value configuration file");
    app.set_version_flag("--version", DESCAN_VERSION);

    Globals g;
    app.add_option("--output-dir", g.output_dir, "Root directory for artifacts");
    app.add_option("--seed", g.seed, "Seed for randomized procedures");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

    std::function<int(Run&)> action;
    auto subcommand = [&](const std::string& name, const std::string& help) { return app.add_subcommand(name, help); };

    // ingest
    std::string ingest_input, ingest_pos;
    auto* ingest = subcommand("ingest", "Load and check a corpus, write canonical JSONL");
    ingest->add_option("--input", ingest_input)->required()->check(CLI::ExistingFile);
    ingest->add_option("--pos", ingest_pos)->check(CLI::ExistingFile);
    ingest->callback([&] { action = [&](Run& r) { cmd_ingest(r, ingest_input, ingest_pos); return 0; }; });

    // validate
    std::string val_input, val_audits, share_denominator = "valid";
    double cascade = 0.35;
    ValidationPolicy policy;
    auto* val = subcommand("validate", "Check collection constraints, optionally apply audits");
    val->add_option("--input", val_input)->required()->check(CLI::ExistingFile);
    val->add_option("--audits", val_audits, "Audit CSV: description_id,status,rating")->check(CLI::ExistingFile);
    val->add_option("--cascade-threshold", cascade, "Rejection rate above which unaudited work is rejected");
    val->add_option("--min-words", policy.min_words);
    val->add_option("--max-words", policy.max_words);
    val->add_option("--min-describer-count", policy.min_describer_count);
    val->add_option("--max-share", policy.max_share);
    val->add_option("--share-denominator", share_denominator)->check(CLI::IsMember({"valid", "all"}));
    val->add_option("--min-valid-per-image", policy.min_valid_per_image);
    val->callback([&] {
        action = [&](Run& r) {
            policy.share_denominator = share_denominator == "all" ? ShareDenominator::all : ShareDenominator::valid_only;
            cmd_validate(r, val_input, val_audits, cascade, policy);
            return 0;
        };
    });

    // stats
    TextInput stats_text;
    int bin_width = 5;
    auto* stats = subcommand("stats", "Token, type and lemma statistics");
    stats_text.add(stats);
    stats->add_option("--bin-width", bin_width)->check(CLI::PositiveNumber);
    stats->callback([&] { action = [&](Run& r) { cmd_stats(r, stats_text, bin_width, g.threads); return 0; }; });

    // lexicon
    TextInput lex_text;
    double target = 0.95;
    auto* lexicon = subcommand("lexicon", "Rank lemmas by ARF and select the coverage lexicon");
    lex_text.add(lexicon);
    lexicon->add_option("--target", target, "Mean coverage to reach");
    lexicon->callback([&] { action = [&](Run& r) { cmd_lexicon(r, lex_text, target, g.threads); return 0; }; });

    // attributes
    AttributeArgs attr;
    auto* attributes = subcommand("attributes", "Cluster lexicon lemmas into attributes");
    attributes->add_option("--lexicon", attr.lexicon)->required()->check(CLI::ExistingFile);
    attributes->add_option("--vectors", attr.vectors, "Word vectors (text or .bin)")->required()->check(CLI::ExistingFile);
    attributes->add_option("--curation", attr.curation, "Curated lemma,attribute CSV")->check(CLI::ExistingFile);
    attributes->add_option("--keywords", attr.keywords, "Labeled keywords CSV: word,attribute,class")->check(CLI::ExistingFile);
    attributes->add_option("--preference", attr.preference, "Self-similarity (default: median)");
    attributes->add_option("--damping", attr.damping);
    attributes->add_option("--convergence-iterations", attr.convergence)->check(CLI::PositiveNumber);
    attributes->add_option("--max-iterations", attr.max_iterations)->check(CLI::PositiveNumber);
    attributes->add_option("--exclude", attr.exclude, "Attributes left out of keyword classification")->delimiter(',');
    attributes->add_option("--input", attr.text.corpus, "Corpus for attribute probabilities")->check(CLI::ExistingFile);
    attributes->add_option("--pos", attr.text.pos)->check(CLI::ExistingFile);
    attributes->add_flag("--no-spell", attr.text.no_spell);
    attributes->callback([&] {
        action = [&](Run& r) {
            attr.with_corpus = !attr.text.corpus.empty();
            cmd_attributes(r, attr, g.threads);
            return 0;
        };
    });

    // structure
    TextInput struct_text;
    std::string struct_attrs, correction = "holm";
    double alpha = 0.05;
    auto* structure = subcommand("structure", "Order-of-appearance ranks and significance groups");
    struct_text.add(structure);
    structure->add_option("--attributes", struct_attrs, "lemma,attribute CSV")->required()->check(CLI::ExistingFile);
    structure->add_option("--alpha", alpha);
    structure->add_option("--correction", correction)->check(CLI::IsMember({"holm", "bonferroni", "none"}));
    structure->callback([&] {
        action = [&](Run& r) {
            cmd_structure(r, struct_text, struct_attrs, alpha, correction, g.threads);
            return 0;
        };
    });

    // simstats
    SimArgs sim;
    auto* simstats = subcommand("simstats", "Intra- vs inter-image description similarity and ANOSIM");
    simstats->add_option("--vectors", sim.vectors, "Description embeddings")->required()->check(CLI::ExistingFile);
    auto* labels_opt = simstats->add_option("--labels", sim.labels, "CSV description_id,image_id")->check(CLI::ExistingFile);
    auto* corpus_opt = simstats->add_option("--input", sim.corpus, "Corpus providing image labels")->check(CLI::ExistingFile);
    labels_opt->excludes(corpus_opt);
    simstats->add_option("--anosim", sim.sampling)->check(CLI::IsMember({"stratified", "full", "none"}));
    simstats->add_option("--ranking", sim.ranking)->check(CLI::IsMember({"exact", "histogram"}));
    simstats->add_option("--permutations", sim.permutations);
    simstats->add_option("--per-image", sim.per_image)->check(CLI::PositiveNumber);
    simstats->add_option("--max-images", sim.max_images)->check(CLI::PositiveNumber);
    simstats->add_option("--block-size", sim.block)->check(CLI::PositiveNumber);
    simstats->callback([&] {
        if (sim.labels.empty() && sim.corpus.empty()) throw CLI::ValidationError("simstats", "--labels or --input is required");
        action = [&](Run& r) {
            cmd_simstats(r, sim, g.threads);
            return 0;
        };
    });

    // retrieval
    RetrievalArgs ret;
    auto* retrieval = subcommand("retrieval", "Top-K recall and ranked image search");
    retrieval->add_option("--queries", ret.queries, "Query (text) embeddings")->required()->check(CLI::ExistingFile);
    retrieval->add_option("--images", ret.images, "Image embeddings keyed by image id")->required()->check(CLI::ExistingFile);
    retrieval->add_option("--catalog", ret.catalog, "CSV image_id,material_id,geometry,lighting")->check(CLI::ExistingFile);
    retrieval->add_option("--input", ret.corpus, "Corpus providing image metadata")->check(CLI::ExistingFile);
    retrieval->add_option("--cases", ret.cases, "Cases JSONL")->check(CLI::ExistingFile);
    retrieval->add_option("--ks", ret.ks, "K values")->delimiter(',');
    retrieval->add_option("--mode", ret.mode)->check(CLI::IsMember({"material", "image"}));
    retrieval->add_option("--baseline", ret.baseline, "Expected recall.csv; mismatch exits 1")->check(CLI::ExistingFile);
    retrieval->add_option("--search", ret.search, "Query key for a ranked image list");
    retrieval->add_option("--top", ret.top, "Length of the ranked list")->check(CLI::PositiveNumber);
    retrieval->callback([&] {
        if (!ret.cases.empty() && ret.catalog.empty() && ret.corpus.empty())
            throw CLI::ValidationError("retrieval", "--cases needs --catalog or --input");
        action = [&](Run& r) { return cmd_retrieval(r, ret, g.threads, err); };
    });

    // invariance
    std::string inv_images, inv_compare, inv_catalog, inv_corpus, inv_mode = "geometry";
    auto* inv = subcommand("invariance", "Same-material similarity across geometry or lighting");
    inv->add_option("--images", inv_images)->required()->check(CLI::ExistingFile);
    inv->add_option("--compare", inv_compare, "Second image-embedding store for a paired test")->check(CLI::ExistingFile);
    inv->add_option("--catalog", inv_catalog)->check(CLI::ExistingFile);
    inv->add_option("--input", inv_corpus)->check(CLI::ExistingFile);
    inv->add_option("--mode", inv_mode)->check(CLI::IsMember({"geometry", "lighting"}));
    inv->callback([&] {
        if (inv_catalog.empty() && inv_corpus.empty()) throw CLI::ValidationError("invariance", "--catalog or --input is required");
        action = [&](Run& r) {
            cmd_invariance(r, inv_images, inv_compare, inv_catalog, inv_corpus, inv_mode);
            return 0;
        };
    });

    // keywords
    TextInput kw_text;
    std::string kw_lexicon, kw_attrs, kw_psi;
    std::vector<std::string> kw_images;
    std::size_t kw_max = 5;
    auto* keywords = subcommand("keywords", "Per-image keywords ordered by count and rank product");
    kw_text.add(keywords);
    keywords->add_option("--lexicon", kw_lexicon)->required()->check(CLI::ExistingFile);
    keywords->add_option("--attributes", kw_attrs)->required()->check(CLI::ExistingFile);
    keywords->add_option("--rank-product", kw_psi, "rank_product.csv from structure")->required()->check(CLI::ExistingFile);
    keywords->add_option("--image", kw_images, "Image ids (default: all)")->delimiter(',');
    keywords->add_option("--max-descriptions", kw_max)->check(CLI::PositiveNumber);
    keywords->callback([&] {
        action = [&](Run& r) {
            cmd_keywords(r, kw_text, kw_lexicon, kw_attrs, kw_psi, kw_images, kw_max, g.threads);
            return 0;
        };
    });

    // imagestats
    std::string img_dir;
    GlcmOptions glcm_opt;
    std::vector<std::string> offsets{"1,0", "0,1"};
    bool asymmetric = false;
    auto* imgstats = subcommand("imagestats", "GLCM entropy of every image in a directory");
    imgstats->add_option("--images-dir", img_dir)->required()->check(CLI::ExistingDirectory);
    imgstats->add_option("--levels", glcm_opt.levels)->check(CLI::Range(2, 65536));
    imgstats->add_option("--bins", glcm_opt.bins)->check(CLI::PositiveNumber);
    imgstats->add_option("--offset", offsets, "dx,dy (repeatable)");
    imgstats->add_flag("--asymmetric", asymmetric);
    imgstats->callback([&] {
        glcm_opt.offsets.clear();
        for (const auto& o : offsets) glcm_opt.offsets.push_back(parse_offset(o));
        glcm_opt.symmetric = !asymmetric;
        action = [&](Run& r) {
            cmd_imagestats(r, img_dir, glcm_opt, g.threads);
            return 0;
        };
    });

    // report
    auto* report = subcommand("report", "Aggregate existing artifacts into report.json and report.md");
    report->callback([&] {
        action = [&](Run& r) {
            cmd_report(r, g.output_dir);
            return 0;
        };
    });

    if (args.empty()) {
        out << app.help();
        return 2;
    }

    std::string name;
    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
        name = app.get_subcommands().front()->get_name();
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    }

    try {
        Run run(name, g, *app.get_subcommand(name));
        const int status = action(run);
        run.finish();
        return status;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "invalid argument: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << "data error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace descan::cli
