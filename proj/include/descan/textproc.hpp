#pragma once

#include "descan/corpus.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace descan {

/// Surface form -> lemma table plus stop-word list. Chains in the table are
/// closed at construction so lemma(lemma(w)) == lemma(w).
class LemmaDictionary {
public:
    LemmaDictionary() = default;
    LemmaDictionary(std::unordered_map<std::string, std::string> table, std::unordered_set<std::string> stopwords);

    static LemmaDictionary load(const std::string& lemma_tsv, const std::string& stopword_file);

    /// Dictionary lemma, or the word itself when it is not listed.
    const std::string& lemma(const std::string& word) const;
    bool is_stopword(const std::string& word) const { return stopwords_.count(word) > 0; }
    bool contains(const std::string& word) const { return table_.count(word) > 0; }

    const std::unordered_map<std::string, std::string>& table() const noexcept { return table_; }
    const std::unordered_set<std::string>& stopwords() const noexcept { return stopwords_; }

private:
    std::unordered_map<std::string, std::string> table_;
    std::unordered_set<std::string> stopwords_;
};

std::unordered_map<std::string, std::string> load_lemma_table(const std::string& path);
std::unordered_set<std::string> load_stopwords(const std::string& path);

/// Directory of the bundled data files (stop words, inflection table).
std::string bundled_data_dir();
LemmaDictionary bundled_dictionary();

/// Conservative edit-distance-1 correction against corpus frequencies.
struct SpellPolicy {
    const std::unordered_map<std::string, std::size_t>* vocabulary = nullptr;  // disabled when null
    std::size_t rare_below = 3;       // only tokens with frequency < rare_below are candidates for correction
    double dominance = 10.0;          // replacement needs >= dominance * max(freq, 1)

    bool enabled() const { return vocabulary != nullptr; }
};

/// Lowercases, maps non-letters (except intra-word ' and -) to spaces and
/// splits on whitespace.
std::vector<std::string> normalize_tokens(std::string_view text);

/// Word-frequency table over normalized tokens, for SpellPolicy.
std::unordered_map<std::string, std::size_t> build_vocabulary(const std::vector<std::string>& texts);

std::optional<std::string> spell_correct(const std::string& token, const SpellPolicy& spell);

struct ProcessedDescription {
    std::string description_id;
    std::vector<std::string> tokens;
    std::set<std::string> types;
    std::vector<std::string> lemmas;
    std::vector<PosTag> pos_tags;  // empty when no annotation was supplied
    int raw_token_count = 0;       // whitespace tokens before normalization
};

ProcessedDescription preprocess(std::string_view text, const LemmaDictionary& dict, const SpellPolicy& spell = {});

/// Processes the valid descriptions of a corpus, sorted by description id.
/// POS annotations are attached when present.
std::vector<ProcessedDescription> process_corpus(const Corpus& corpus, const LemmaDictionary& dict,
                                                 bool spell_check = true, unsigned threads = 1);

struct Summary {
    double mean = 0, median = 0, q1 = 0, q3 = 0, iqr = 0, min = 0, max = 0;
};

Summary summarize(std::vector<double> values);

struct LengthHistogram {
    int bin_width = 5;
    std::map<int, std::size_t> raw;        // bin start -> descriptions
    std::map<int, std::size_t> processed;  // bin start -> descriptions
};

struct TextStats {
    std::size_t descriptions = 0;
    std::size_t total_tokens = 0;
    std::size_t total_raw_tokens = 0;
    std::size_t distinct_types = 0;
    std::size_t distinct_lemmas = 0;
    std::size_t sum_types = 0;   // sum over descriptions of per-description types
    std::size_t sum_lemmas = 0;  // sum over descriptions of per-description distinct lemmas
    Summary tokens, types, lemmas;
    LengthHistogram length_histogram;
    std::size_t pos_annotated = 0;
    std::map<PosTag, Summary> pos_share;  // per-description fraction of tokens with each tag
};

TextStats corpus_stats(const std::vector<ProcessedDescription>& processed, int bin_width = 5);

}  // namespace descan
