#include "descan/textproc.hpp"

#include "descan/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>

#ifndef DESCAN_DATA_DIR
#define DESCAN_DATA_DIR "data"
#endif

namespace descan {

LemmaDictionary::LemmaDictionary(std::unordered_map<std::string, std::string> table,
                                 std::unordered_set<std::string> stopwords)
    : stopwords_(std::move(stopwords)) {
    // Close chains (a -> b -> c becomes a -> c) and reject cycles.
    for (const auto& [surface, lemma] : table) {
        std::string cur = lemma;
        std::size_t steps = 0;
        for (auto it = table.find(cur); it != table.end() && it->second != cur; it = table.find(cur)) {
            cur = it->second;
            if (++steps > table.size()) throw DataError("cycle in lemma table at '" + surface + "'");
        }
        table_[surface] = cur;
    }
}

const std::string& LemmaDictionary::lemma(const std::string& word) const {
    auto it = table_.find(word);
    return it == table_.end() ? word : it->second;
}

std::unordered_map<std::string, std::string> load_lemma_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file", path);
    std::unordered_map<std::string, std::string> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto tab = t.find('\t');
        if (tab == std::string::npos) throw DataError("expected two tab-separated columns", path, n);
        const std::string surface = to_lower(trim(t.substr(0, tab)));
        const std::string lemma = to_lower(trim(t.substr(tab + 1)));
        if (surface.empty() || lemma.empty()) throw DataError("empty column", path, n);
        auto [it, inserted] = out.emplace(surface, lemma);
        if (!inserted && it->second != lemma) throw DataError("conflicting lemma for '" + surface + "'", path, n);
    }
    return out;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file", path);
    std::unordered_set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (!t.empty() && t[0] != '#') out.insert(to_lower(t));
    }
    return out;
}

LemmaDictionary LemmaDictionary::load(const std::string& lemma_tsv, const std::string& stopword_file) {
    return LemmaDictionary(lemma_tsv.empty() ? decltype(table_){} : load_lemma_table(lemma_tsv),
                           stopword_file.empty() ? decltype(stopwords_){} : load_stopwords(stopword_file));
}

std::string bundled_data_dir() {
    if (const char* env = std::getenv("DESCAN_DATA_DIR")) return env;
    return DESCAN_DATA_DIR;
}

LemmaDictionary bundled_dictionary() {
    const std::string dir = bundled_data_dir();
    return LemmaDictionary::load(dir + "/lemmas.tsv", dir + "/stopwords.txt");
}

// ---------------------------------------------------------------------------

namespace {

bool is_letter(char c) { return c >= 'a' && c <= 'z'; }

}  // namespace

std::vector<std::string> normalize_tokens(std::string_view text) {
    std::string s;
    s.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        // U+2019 right single quotation mark counts as an apostrophe.
        if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
            static_cast<unsigned char>(text[i + 2]) == 0x99) {
            s += '\'';
            i += 2;
            continue;
        }
        if (c >= 'A' && c <= 'Z') s += static_cast<char>(c - 'A' + 'a');
        else s += static_cast<char>(c);
    }
    std::string cleaned(s.size(), ' ');
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (is_letter(c)) cleaned[i] = c;
        else if ((c == '\'' || c == '-') && i > 0 && i + 1 < s.size() && is_letter(s[i - 1]) && is_letter(s[i + 1]))
            cleaned[i] = c;
    }
    return split_whitespace(cleaned);
}

std::unordered_map<std::string, std::size_t> build_vocabulary(const std::vector<std::string>& texts) {
    std::unordered_map<std::string, std::size_t> vocab;
    for (const auto& t : texts)
        for (auto& tok : normalize_tokens(t)) ++vocab[tok];
    return vocab;
}

std::optional<std::string> spell_correct(const std::string& token, const SpellPolicy& spell) {
    if (!spell.enabled()) return std::nullopt;
    const auto& vocab = *spell.vocabulary;
    auto freq_of = [&](const std::string& w) -> std::size_t {
        auto it = vocab.find(w);
        return it == vocab.end() ? 0 : it->second;
    };
    const std::size_t own = freq_of(token);
    if (own >= spell.rare_below) return std::nullopt;
    const double needed = spell.dominance * static_cast<double>(std::max<std::size_t>(own, 1));

    std::string best;
    std::size_t best_freq = 0;
    auto consider = [&](const std::string& cand) {
        if (cand.empty() || cand == token) return;
        const std::size_t f = freq_of(cand);
        if (f == 0 || static_cast<double>(f) < needed) return;
        if (f > best_freq || (f == best_freq && cand < best)) {
            best = cand;
            best_freq = f;
        }
    };
    const std::size_t n = token.size();
    std::string cand;
    for (std::size_t i = 0; i < n; ++i) {  // deletions
        cand = token;
        cand.erase(i, 1);
        consider(cand);
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {  // transpositions
        cand = token;
        std::swap(cand[i], cand[i + 1]);
        consider(cand);
    }
    for (std::size_t i = 0; i < n; ++i) {  // substitutions
        for (char c = 'a'; c <= 'z'; ++c) {
            if (c == token[i]) continue;
            cand = token;
            cand[i] = c;
            consider(cand);
        }
    }
    for (std::size_t i = 0; i <= n; ++i) {  // insertions
        for (char c = 'a'; c <= 'z'; ++c) {
            cand = token;
            cand.insert(cand.begin() + static_cast<std::ptrdiff_t>(i), c);
            consider(cand);
        }
    }
    if (best.empty()) return std::nullopt;
    return best;
}

ProcessedDescription preprocess(std::string_view text, const LemmaDictionary& dict, const SpellPolicy& spell) {
    ProcessedDescription out;
    out.raw_token_count = raw_word_count(text);
    for (auto& tok : normalize_tokens(text)) {
        if (auto fixed = spell_correct(tok, spell)) tok = std::move(*fixed);
        if (dict.is_stopword(tok)) continue;
        const std::string& lemma = dict.lemma(tok);
        if (dict.is_stopword(lemma)) continue;
        out.lemmas.push_back(lemma);
        out.types.insert(tok);
        out.tokens.push_back(std::move(tok));
    }
    return out;
}

std::vector<ProcessedDescription> process_corpus(const Corpus& corpus, const LemmaDictionary& dict,
                                                 bool spell_check, unsigned threads) {
    std::vector<const Description*> valid;
    for (const auto& d : corpus.descriptions())
        if (is_valid(d.status)) valid.push_back(&d);
    std::sort(valid.begin(), valid.end(), [](const Description* a, const Description* b) { return a->id < b->id; });

    std::unordered_map<std::string, std::size_t> vocab;
    SpellPolicy spell;
    if (spell_check) {
        std::vector<std::string> texts;
        texts.reserve(valid.size());
        for (const auto* d : valid) texts.push_back(d->text);
        vocab = build_vocabulary(texts);
        spell.vocabulary = &vocab;
    }
    std::vector<ProcessedDescription> out(valid.size());
    parallel_for(valid.size(), threads, [&](std::size_t b, std::size_t e, unsigned) {
        for (std::size_t i = b; i < e; ++i) {
            out[i] = preprocess(valid[i]->text, dict, spell);
            out[i].description_id = valid[i]->id;
            if (auto it = corpus.pos_annotations().find(valid[i]->id); it != corpus.pos_annotations().end())
                out[i].pos_tags = it->second;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) return std::nan("");
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * frac;
}

}  // namespace

Summary summarize(std::vector<double> values) {
    Summary s;
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    s.median = quantile_sorted(values, 0.5);
    s.q1 = quantile_sorted(values, 0.25);
    s.q3 = quantile_sorted(values, 0.75);
    s.iqr = s.q3 - s.q1;
    s.min = values.front();
    s.max = values.back();
    return s;
}

TextStats corpus_stats(const std::vector<ProcessedDescription>& processed, int bin_width) {
    if (processed.empty()) throw std::invalid_argument("corpus_stats: no descriptions");
    if (bin_width < 1) throw std::invalid_argument("corpus_stats: bin width must be >= 1");
    TextStats st;
    st.descriptions = processed.size();
    st.length_histogram.bin_width = bin_width;
    std::set<std::string> types, lemmas;
    std::vector<double> ntok, ntyp, nlem;
    std::map<PosTag, std::vector<double>> pos;
    for (const auto& p : processed) {
        const std::set<std::string> own_lemmas(p.lemmas.begin(), p.lemmas.end());
        st.total_tokens += p.tokens.size();
        st.total_raw_tokens += static_cast<std::size_t>(p.raw_token_count);
        st.sum_types += p.types.size();
        st.sum_lemmas += own_lemmas.size();
        types.insert(p.types.begin(), p.types.end());
        lemmas.insert(own_lemmas.begin(), own_lemmas.end());
        ntok.push_back(static_cast<double>(p.tokens.size()));
        ntyp.push_back(static_cast<double>(p.types.size()));
        nlem.push_back(static_cast<double>(own_lemmas.size()));
        ++st.length_histogram.processed[static_cast<int>(p.tokens.size()) / bin_width * bin_width];
        ++st.length_histogram.raw[p.raw_token_count / bin_width * bin_width];
        if (!p.pos_tags.empty()) {
            ++st.pos_annotated;
            std::map<PosTag, std::size_t> counts;
            for (auto t : p.pos_tags) ++counts[t];
            for (auto t : {PosTag::noun, PosTag::adjective, PosTag::verb, PosTag::adverb, PosTag::other})
                pos[t].push_back(static_cast<double>(counts[t]) / static_cast<double>(p.pos_tags.size()));
        }
    }
    st.distinct_types = types.size();
    st.distinct_lemmas = lemmas.size();
    st.tokens = summarize(std::move(ntok));
    st.types = summarize(std::move(ntyp));
    st.lemmas = summarize(std::move(nlem));
    for (auto& [tag, v] : pos) st.pos_share[tag] = summarize(std::move(v));
    return st;
}

}  // namespace descan
