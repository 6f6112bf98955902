#include "descan/common.hpp"
#include "descan/corpus.hpp"
#include "descan/textproc.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace descan;

namespace {

LemmaDictionary small_dict() {
    return LemmaDictionary({{"colors", "color"}, {"colored", "color"}, {"coloring", "color"}, {"fabrics", "fabric"}},
                           {"the", "is", "a", "and"});
}

}  // namespace

TEST_SUITE("textproc") {

TEST_CASE("preprocess: case, punctuation and stop words") {
    const LemmaDictionary dict({}, {"the", "is"});
    const auto p = preprocess("The fabric is SOFT, soft!", dict);
    CHECK(p.tokens == std::vector<std::string>{"fabric", "soft", "soft"});
    CHECK(p.types == std::set<std::string>{"fabric", "soft"});
    CHECK(p.lemmas == std::vector<std::string>{"fabric", "soft", "soft"});
    CHECK(p.raw_token_count == 5);
}

TEST_CASE("preprocess: inflections map to one lemma") {
    const auto p = preprocess("colors colored coloring", small_dict());
    CHECK(p.lemmas == std::vector<std::string>{"color", "color", "color"});
    CHECK(p.tokens == std::vector<std::string>{"colors", "colored", "coloring"});
}

TEST_CASE("bundled dictionary lemmatizes inflections and knows stop words") {
    const auto dict = bundled_dictionary();
    const auto p = preprocess("Colors colored coloring; the fabrics are wrinkled", dict);
    CHECK(p.lemmas == std::vector<std::string>{"color", "color", "color", "fabric", "wrinkle"});
    CHECK(dict.is_stopword("the"));
    for (const char* c : {"red", "blue", "green", "black", "white", "grey", "gray", "brown", "yellow", "dark", "light"})
        CHECK_FALSE(dict.is_stopword(c));
    for (const auto& [surface, lemma] : dict.table()) {
        REQUIRE(dict.lemma(lemma) == lemma);
    }
}

TEST_CASE("normalize_tokens keeps intra-word hyphen and apostrophe only") {
    CHECK(normalize_tokens("well-worn, it's -edge- 'quoted' 3d x--y")
          == std::vector<std::string>{"well-worn", "it's", "edge", "quoted", "d", "x", "y"});
    CHECK(normalize_tokens("it\xE2\x80\x99s") == std::vector<std::string>{"it's"});
    CHECK(normalize_tokens("caf\xC3\xA9 r\xC3\xA9sum\xC3\xA9") == std::vector<std::string>{"caf", "r", "sum"});
    CHECK(normalize_tokens("!!! 123").empty());
}

TEST_CASE("spell correction picks the most frequent edit-1 candidate") {
    std::unordered_map<std::string, std::size_t> vocab{{"soft", 40}, {"sift", 12}, {"softt", 1}, {"loft", 5}};
    SpellPolicy spell{&vocab};
    CHECK(spell_correct("softt", spell) == std::optional<std::string>("soft"));
    CHECK(spell_correct("sofy", spell) == std::optional<std::string>("soft"));
    CHECK(spell_correct("osft", spell) == std::optional<std::string>("soft"));
    CHECK_FALSE(spell_correct("soft", spell));       // frequent words stay
    CHECK_FALSE(spell_correct("zzzz", spell));       // no candidate
    CHECK_FALSE(spell_correct("softt", SpellPolicy{}));  // disabled

    // Candidate must dominate: 9 < 10 * 1.
    std::unordered_map<std::string, std::size_t> weak{{"soft", 9}, {"softt", 1}};
    CHECK_FALSE(spell_correct("softt", SpellPolicy{&weak}));
    // A token at the rarity threshold is left alone.
    std::unordered_map<std::string, std::size_t> common{{"soft", 1000}, {"softt", 3}};
    CHECK_FALSE(spell_correct("softt", SpellPolicy{&common}));
}

TEST_CASE("spell correction agrees with brute-force edit-1 enumeration") {
    std::unordered_map<std::string, std::size_t> vocab{{"plaid", 30}, {"plain", 30}, {"paid", 50}, {"plai", 1}};
    // candidates of "plai": plaid (30), plain (30), paid? no: "plai"->"paid" needs 2 edits. pali? absent.
    // Equal frequencies break lexicographically: plaid < plain.
    CHECK(spell_correct("plai", SpellPolicy{&vocab}) == std::optional<std::string>("plaid"));
}

TEST_CASE("preprocess is idempotent on its own output") {
    const auto dict = bundled_dictionary();
    for (const char* text : {"The fabric is SOFT, soft!", "Shiny, crinkled metallic threads woven in stripes.",
                             "A well-worn denim's faded blue-ish tone"}) {
        const auto p = preprocess(text, dict);
        std::string joined;
        for (const auto& l : p.lemmas) joined += l + " ";
        const auto q = preprocess(joined, dict);
        CHECK(q.lemmas == p.lemmas);
        REQUIRE(p.lemmas.size() == p.tokens.size());
        CHECK(p.types == std::set<std::string>(p.tokens.begin(), p.tokens.end()));
        for (std::size_t i = 0; i < p.lemmas.size(); ++i) {
            CHECK_FALSE(dict.is_stopword(p.lemmas[i]));
            CHECK((p.lemmas[i] == p.tokens[i] || dict.lemma(p.tokens[i]) == p.lemmas[i]));
        }
    }
}

TEST_CASE("all-stop-word text yields an empty description") {
    const auto p = preprocess("the is the", LemmaDictionary({}, {"the", "is"}));
    CHECK(p.tokens.empty());
    CHECK(p.lemmas.empty());
}

TEST_CASE("lemma table: chains are closed and cycles rejected") {
    const LemmaDictionary d({{"a", "b"}, {"b", "c"}}, {});
    CHECK(d.lemma("a") == "c");
    CHECK(d.lemma("b") == "c");
    CHECK(d.lemma("zzz") == "zzz");
    CHECK_THROWS_AS(LemmaDictionary({{"a", "b"}, {"b", "a"}}, {}), DataError);
}

TEST_CASE("lemma table file format") {
    testing::TempDir tmp;
    const auto ok = tmp.write("l.tsv", "colors\tcolor\n# comment\n\nfabrics\tfabric\n");
    const auto t = load_lemma_table(ok);
    CHECK(t.size() == 2);
    CHECK(t.at("colors") == "color");
    CHECK_THROWS_AS(load_lemma_table(tmp.write("b.tsv", "colors color\n")), DataError);
    CHECK_THROWS_AS(load_lemma_table(tmp.write("c.tsv", "x\ty\nx\tz\n")), DataError);
    const auto sw = load_stopwords(tmp.write("s.txt", "The\n# note\n  and \n"));
    CHECK(sw == std::unordered_set<std::string>{"the", "and"});
}

TEST_CASE("corpus_stats: one description with 5 tokens") {
    const LemmaDictionary dict({}, {});
    const auto st = corpus_stats({preprocess("one two three four five", dict)});
    CHECK(st.tokens.mean == 5);
    CHECK(st.tokens.median == 5);
    CHECK(st.total_tokens == 5);
}

TEST_CASE("corpus_stats: 10 and 20 tokens give mean and median 15") {
    const LemmaDictionary dict({}, {});
    std::string ten, twenty;
    for (int i = 0; i < 20; ++i) twenty += "w ";
    for (char c = 'a'; c < 'a' + 10; ++c) ten += std::string(1, c) + " ";
    const auto st = corpus_stats({preprocess(ten, dict), preprocess(twenty, dict)});
    CHECK(st.tokens.mean == 15);
    CHECK(st.tokens.median == 15);
    CHECK(st.types.mean == 5.5);
    CHECK(st.distinct_types == 11);
    CHECK(st.length_histogram.processed.at(10) == 1);
    CHECK(st.length_histogram.processed.at(20) == 1);
}

TEST_CASE("corpus_stats totals equal sums of per-description counts") {
    const auto dict = bundled_dictionary();
    std::vector<ProcessedDescription> ps;
    for (const char* t : {"Red soft plaid fabric, very soft.", "A shiny metallic silver thread", "rough wool"})
        ps.push_back(preprocess(t, dict));
    const auto st = corpus_stats(ps);
    std::size_t tokens = 0, raw = 0, types = 0;
    for (const auto& p : ps) {
        tokens += p.tokens.size();
        raw += static_cast<std::size_t>(p.raw_token_count);
        types += p.types.size();
    }
    CHECK(st.total_tokens == tokens);
    CHECK(st.total_raw_tokens == raw);
    CHECK(st.sum_types == types);
    CHECK(st.descriptions == 3);
    CHECK_THROWS_AS(corpus_stats({}), std::invalid_argument);
}

TEST_CASE("summarize quartiles") {
    const auto s = summarize({4, 1, 3, 2});
    CHECK(s.min == 1);
    CHECK(s.max == 4);
    CHECK(s.median == 2.5);
    CHECK(s.q1 == 1.75);
    CHECK(s.q3 == 3.25);
    CHECK(s.iqr == 1.5);
}

TEST_CASE("POS shares are reported when tags are present") {
    ProcessedDescription a = preprocess("red soft cloth", LemmaDictionary({}, {}));
    a.pos_tags = {PosTag::adjective, PosTag::adjective, PosTag::noun};
    ProcessedDescription b = preprocess("cloth", LemmaDictionary({}, {}));
    const auto st = corpus_stats({a, b});
    CHECK(st.pos_annotated == 1);
    CHECK(st.pos_share.at(PosTag::adjective).mean == doctest::Approx(2.0 / 3.0));
    CHECK(st.pos_share.at(PosTag::noun).mean == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("process_corpus: valid only, id order, spell check from corpus vocabulary, thread independent") {
    std::vector<RenderImage> images{{"i", "m", Geometry::baseline, Lighting::baseline}};
    std::vector<Description> descs;
    for (int k = 0; k < 12; ++k) descs.push_back({"d" + std::to_string(20 - k), "i", "w", "soft red", Status::unaudited, {}});
    descs.push_back({"d00", "i", "w", "softt", Status::unaudited, {}});
    descs.push_back({"d01", "i", "w", "gone", Status::rejected_wrong, {}});
    const Corpus c(images, descs);
    const auto dict = LemmaDictionary({}, {});
    const auto p1 = process_corpus(c, dict, true, 1);
    REQUIRE(p1.size() == 13);
    CHECK(p1.front().description_id == "d00");
    CHECK(p1.front().tokens == std::vector<std::string>{"soft"});
    const auto p4 = process_corpus(c, dict, true, 4);
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].lemmas == p4[i].lemmas);
    const auto nospell = process_corpus(c, dict, false, 1);
    CHECK(nospell.front().tokens == std::vector<std::string>{"softt"});
}

}
