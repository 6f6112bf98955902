#include "descan/common.hpp"
#include "descan/retrieval.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace descan;

namespace {

EmbeddingStore store_of(const std::vector<std::pair<std::string, std::vector<float>>>& rows, float scale = 1.0f) {
    RowMatrix<float> m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].second.size()));
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        keys.push_back(rows[i].first);
        for (std::size_t j = 0; j < rows[i].second.size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].second[j] * scale;
    }
    return EmbeddingStore(keys, m);
}

RenderImage render(const std::string& id, const std::string& mat, Geometry g = Geometry::baseline,
                   Lighting l = Lighting::baseline) {
    return {id, mat, g, l};
}

ProcessedDescription desc(const std::string& id, std::vector<std::string> lemmas) {
    ProcessedDescription p;
    p.description_id = id;
    p.tokens = lemmas;
    p.lemmas = std::move(lemmas);
    return p;
}

void check_monotone(const RecallTable& t) {
    for (std::size_t i = 1; i < t.recall.size(); ++i) CHECK(t.recall[i] >= t.recall[i - 1]);
}

}  // namespace

TEST_SUITE("retrieval") {

TEST_CASE("identity embeddings give top-1 recall 1") {
    const auto images = store_of({{"i0", {1, 0, 0, 0}}, {"i1", {0, 1, 0, 0}}, {"i2", {0, 0, 1, 0}}, {"i3", {0, 0, 0, 1}}});
    const auto queries = store_of({{"q0", {1, 0, 0, 0}}, {"q1", {0, 1, 0, 0}}, {"q2", {0, 0, 1, 0}}, {"q3", {0, 0, 0, 1}}});
    const ImageCatalog cat({render("i0", "m0"), render("i1", "m1"), render("i2", "m2"), render("i3", "m3")});
    std::vector<RetrievalCase> cases;
    for (int i = 0; i < 4; ++i)
        cases.push_back({"q" + std::to_string(i), "m" + std::to_string(i), {}, "i" + std::to_string(i)});
    const auto t = topk_recall(queries, images, cat, cases, {1, 2, 4});
    CHECK(t.recall == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(topk_recall(queries, images, cat, cases, {1}, RecallMode::image).recall[0] == 1.0);
}

TEST_CASE("3 queries x 3 candidates match hand ranking") {
    const auto images = store_of({{"A", {1, 0}}, {"B", {0, 1}}, {"C", {1, 1}}});
    const auto queries = store_of({{"q1", {1, 0.1f}}, {"q2", {1, 0.9f}}, {"q3", {0.2f, 1}}});
    const ImageCatalog cat({render("A", "ma"), render("B", "mb"), render("C", "mc")});
    const std::vector<RetrievalCase> cases{{"q1", "ma", {}, {}}, {"q2", "mb", {}, {}}, {"q3", "mc", {}, {}}};
    const auto t = topk_recall(queries, images, cat, cases, {3, 1, 2, 2});
    CHECK(t.ks == std::vector<std::size_t>{1, 2, 3});
    CHECK(t.first_hit == std::vector<std::size_t>{1, 3, 2});
    CHECK(t.recall[0] == doctest::Approx(1.0 / 3.0));
    CHECK(t.recall[1] == doctest::Approx(2.0 / 3.0));
    CHECK(t.recall[2] == 1.0);
    // Positive rescaling of every vector leaves the ranking unchanged.
    const auto t2 = topk_recall(store_of({{"q1", {1, 0.1f}}, {"q2", {1, 0.9f}}, {"q3", {0.2f, 1}}}, 4.5f),
                                store_of({{"A", {1, 0}}, {"B", {0, 1}}, {"C", {1, 1}}}, 0.01f), cat, cases, {1, 2, 3}, RecallMode::material, 3);
    CHECK(t2.first_hit == t.first_hit);
}

TEST_CASE("material mode counts any rendering; filters restrict candidates; ties break by key") {
    const auto images = store_of({{"m1_base", {0, 1}}, {"m1_sph", {1, 0}}, {"m2_base", {1, 0}}, {"m2_sph", {0.5f, 0.5f}}});
    const ImageCatalog cat({render("m1_base", "m1"), render("m1_sph", "m1", Geometry::sphere), render("m2_base", "m2"),
                            render("m2_sph", "m2", Geometry::sphere)});
    const auto queries = store_of({{"q", {1, 0}}});
    // Unfiltered: m1_sph and m2_base tie at 1.0; "m1_sph" < "m2_base".
    const std::vector<RetrievalCase> any{{"q", "m1", {}, "m1_base"}};
    CHECK(topk_recall(queries, images, cat, any, {1}).first_hit[0] == 1);
    CHECK(topk_recall(queries, images, cat, any, {1}, RecallMode::image).first_hit[0] == 4);
    const std::vector<RetrievalCase> base_only{{"q", "m1", {Geometry::baseline, std::nullopt}, {}}};
    CHECK(topk_recall(queries, images, cat, base_only, {1}).first_hit[0] == 2);
    const std::vector<RetrievalCase> m2{{"q", "m2", {}, {}}};
    CHECK(topk_recall(queries, images, cat, m2, {1}).first_hit[0] == 2);
}

TEST_CASE("topk_recall errors") {
    const auto images = store_of({{"A", {1, 0}}, {"B", {0, 1}}});
    const auto queries = store_of({{"q", {1, 0}}});
    const ImageCatalog cat({render("A", "ma"), render("B", "mb", Geometry::sphere)});
    CHECK_THROWS_AS(topk_recall(queries, images, cat, {}), std::invalid_argument);
    const std::vector<RetrievalCase> ok{{"q", "ma", {}, {}}};
    CHECK_THROWS_AS(topk_recall(queries, images, cat, ok, {0}), std::invalid_argument);
    CHECK_THROWS_AS(topk_recall(queries, images, cat, ok, {}), std::invalid_argument);
    CHECK_THROWS_AS(topk_recall(queries, images, cat, ok, {1}, RecallMode::image), DataError);
    const std::vector<RetrievalCase> filtered_out{{"q", "mb", {Geometry::baseline, std::nullopt}, {}}};
    CHECK_THROWS_WITH_AS(topk_recall(queries, images, cat, filtered_out), doctest::Contains("ground truth missing"), DataError);
    const std::vector<RetrievalCase> no_query{{"zz", "ma", {}, {}}};
    CHECK_THROWS_AS(topk_recall(queries, images, cat, no_query), DataError);
    CHECK_THROWS_AS(topk_recall(store_of({{"q", {1, 0, 0}}}), images, cat, ok), DataError);
    const ImageCatalog missing_vec({render("A", "ma"), render("Z", "mz")});
    CHECK_THROWS_AS(topk_recall(queries, images, missing_vec, ok), DataError);
}

TEST_CASE("fixture stores reproduce their baselined recall tables bit-exactly") {
    testing::TempDir tmp;
    const auto dir = testing::fixture("retrieval/");
    const auto queries = load_vectors(dir + "queries.txt");
    const auto tuned = load_vectors(dir + "images_tuned.bin");
    const auto native = load_vectors(dir + "images_native.txt");
    const auto cat = read_image_catalog_csv(dir + "catalog.csv");
    CHECK(cat.images().size() == 140);

    const auto t = topk_recall(queries, tuned, cat, read_cases_jsonl(dir + "cases.jsonl"), kDefaultKs);
    check_monotone(t);
    CHECK(t.recall.back() == 1.0);
    write_recall_csv(tmp.file("a.csv"), t);
    CHECK(testing::slurp(tmp.file("a.csv")) == testing::slurp(dir + "baseline_recall_tuned.csv"));

    const auto ti = topk_recall(queries, tuned, cat, read_cases_jsonl(dir + "cases.jsonl"), kDefaultKs, RecallMode::image, 4);
    write_recall_csv(tmp.file("b.csv"), ti);
    CHECK(testing::slurp(tmp.file("b.csv")) == testing::slurp(dir + "baseline_recall_tuned_image.csv"));

    const auto all = topk_recall(queries, native, cat, read_cases_jsonl(dir + "cases_all_geometries.jsonl"));
    check_monotone(all);
    write_recall_csv(tmp.file("c.csv"), all);
    CHECK(testing::slurp(tmp.file("c.csv")) == testing::slurp(dir + "baseline_recall_native_all.csv"));
}

TEST_CASE("case and catalog readers") {
    testing::TempDir tmp;
    const auto cases = read_cases_jsonl(tmp.write(
        "c.jsonl", "{\"query_key\":\"q\",\"truth_material\":\"m\",\"candidate_filter\":{\"geometry\":\"plane\",\"lighting\":null}}\n\n"
                   "{\"query_key\":\"r\",\"truth_material\":\"n\",\"truth_image\":\"i\"}\n"));
    REQUIRE(cases.size() == 2);
    CHECK(cases[0].filter.geometry == Geometry::plane);
    CHECK_FALSE(cases[0].filter.lighting);
    CHECK(cases[1].truth_image == std::optional<std::string>("i"));
    try {
        read_cases_jsonl(tmp.write("bad.jsonl", "{\"query_key\":\"q\",\"truth_material\":\"m\"}\n{\"query_key\":1}\n"));
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(read_cases_jsonl(tmp.write("g.jsonl", "{\"query_key\":\"q\",\"truth_material\":\"m\",\"candidate_filter\":{\"geometry\":\"cube\"}}\n")), DataError);
    CHECK_THROWS_AS(read_image_catalog_csv(tmp.write("cat.csv", "image_id,material_id,geometry,lighting\na,m,baseline,baseline\na,m,sphere,baseline\n")), DataError);
    CHECK_THROWS_AS(ImageCatalog({render("x", "m"), render("x", "n")}), DataError);
}

TEST_CASE("image_search: order, ties, permutation invariance, errors") {
    const auto cands = store_of({{"c1", {1, 0}}, {"c2", {0.8f, 0.6f}}, {"c3", {0, 1}}, {"c4", {-1, 0}}, {"c0", {0, 1}}});
    const auto q = store_of({{"q", {0.8f, 0.6f}}});
    const auto hits = image_search(q, "q", cands, 5);
    REQUIRE(hits.size() == 5);
    CHECK(hits[0].key == "c2");
    CHECK(hits[0].similarity == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(hits[1].key == "c1");
    CHECK(hits[1].similarity == doctest::Approx(0.8).epsilon(1e-7));
    CHECK(hits[2].key == "c0");  // ties with c3 at 0.6
    CHECK(hits[3].key == "c3");
    CHECK(hits[4].key == "c4");
    const auto shuffled = image_search(q, "q", cands, 3, {"c4", "c3", "c0", "c2", "c1"});
    for (std::size_t i = 0; i < 3; ++i) CHECK(shuffled[i].key == hits[i].key);
    const auto self = image_search(cands, "c3", cands, 1);
    CHECK(self[0].key == "c0");  // c0 equals c3 and sorts first
    CHECK(self[0].similarity == 1.0);
    CHECK_THROWS_AS(image_search(q, "q", cands, 0), std::invalid_argument);
    CHECK_THROWS_AS(image_search(q, "q", cands, 6), std::invalid_argument);
    CHECK_THROWS_AS(image_search(q, "nope", cands, 1), DataError);
}

TEST_CASE("invariance: identical embeddings give mean 1, std 0") {
    const auto s = store_of({{"a1", {1, 2}}, {"a2", {1, 2}}, {"b1", {3, 1}}, {"b2", {3, 1}}, {"b3", {3, 1}}});
    const ImageCatalog cat({render("a1", "a"), render("a2", "a", Geometry::sphere), render("b1", "b"),
                            render("b2", "b", Geometry::plane), render("b3", "b", Geometry::plane_draped)});
    const auto r = invariance(s, cat, InvarianceMode::geometry);
    CHECK(r.mean == 1.0);
    CHECK(r.std_dev == 0.0);
    CHECK(r.pairs.at("b") == 3);
}

TEST_CASE("invariance: 2 materials x 2 geometries by hand; relabeling geometries changes nothing") {
    const auto s = store_of({{"m1_g1", {1, 0}}, {"m1_g2", {1, 1}}, {"m2_g1", {0, 1}}, {"m2_g2", {0, 2}}, {"m3_g1", {1, 1}}});
    const ImageCatalog cat({render("m1_g1", "m1"), render("m1_g2", "m1", Geometry::sphere), render("m2_g1", "m2"),
                            render("m2_g2", "m2", Geometry::sphere), render("m3_g1", "m3")});
    const auto r = invariance(s, cat, InvarianceMode::geometry);
    const double c = 1.0 / std::sqrt(2.0);
    CHECK(r.per_material.at("m1") == doctest::Approx(c).epsilon(1e-12));
    CHECK(r.per_material.at("m2") == 1.0);
    CHECK(r.mean == doctest::Approx((c + 1.0) / 2.0).epsilon(1e-12));
    CHECK(r.std_dev == doctest::Approx((1.0 - c) / 2.0).epsilon(1e-12));
    CHECK(r.skipped == std::vector<std::string>{"m3"});
    const ImageCatalog relabeled({render("m1_g1", "m1", Geometry::plane_draped), render("m1_g2", "m1", Geometry::plane),
                                  render("m2_g1", "m2", Geometry::plane_draped), render("m2_g2", "m2", Geometry::plane),
                                  render("m3_g1", "m3", Geometry::sphere)});
    const auto r2 = invariance(s, relabeled, InvarianceMode::geometry);
    CHECK(r2.mean == r.mean);
    CHECK(r2.std_dev == r.std_dev);
    // Varying lighting: the other dimension (geometry) is held fixed, so no pairs exist.
    CHECK_THROWS_AS(invariance(s, cat, InvarianceMode::lighting), DataError);
}

TEST_CASE("invariance: lighting mode holds geometry fixed") {
    const auto s = store_of({{"a", {1, 0}}, {"b", {1, 1}}, {"c", {0, 1}}, {"d", {5, 5}}});
    const ImageCatalog cat({render("a", "m"), render("b", "m", Geometry::baseline, Lighting::outdoor),
                            render("c", "m", Geometry::sphere), render("d", "m", Geometry::sphere, Lighting::studio)});
    const auto r = invariance(s, cat, InvarianceMode::lighting);
    CHECK(r.pairs.at("m") == 2);
    CHECK(r.per_material.at("m") == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("invariance comparison on fixture stores is deterministic") {
    const auto dir = testing::fixture("retrieval/");
    const auto cat = read_image_catalog_csv(dir + "catalog.csv");
    const auto tuned = invariance(load_vectors(dir + "images_tuned.bin"), cat, InvarianceMode::geometry);
    const auto native = invariance(load_vectors(dir + "images_native.txt"), cat, InvarianceMode::geometry);
    CHECK(tuned.per_material.size() == 20);
    CHECK(tuned.mean > native.mean);
    const auto w1 = compare_invariance(tuned, native);
    const auto w2 = compare_invariance(tuned, native);
    CHECK(w1.p_value == w2.p_value);
    CHECK(w1.statistic == w2.statistic);
    CHECK(*w1.effect_size == *w2.effect_size);
    CHECK(w1.method == "wilcoxon_exact");
    CHECK(w1.statistic == 0.0);
    CHECK(w1.p_value == 2.0 / 1048576.0);
    CHECK(*w1.effect_size > 0.8);
}

TEST_CASE("extract_keywords: count, then psi, then lemma") {
    const auto attrs = build_attribute_set(
        Curation{{"plaid", "pattern"}, {"soft", "touch"}, {"red", "color"}, {"blue", "color"}, {"cloth", kOutlier}});
    const std::map<std::string, double> psi{{"color", 2.25}, {"touch", 3.73}, {"pattern", 2.9}};
    const std::vector<std::string> lex{"plaid", "soft", "red", "blue", "cloth"};
    std::vector<ProcessedDescription> descs;
    for (int i = 0; i < 5; ++i) descs.push_back(desc("d" + std::to_string(i), {"plaid", "cloth"}));
    descs[0].lemmas.push_back("soft");
    descs[1].lemmas.push_back("soft");
    descs[1].lemmas.push_back("soft");
    const auto k1 = extract_keywords(descs, lex, attrs, psi);
    REQUIRE(k1.size() == 2);
    CHECK(k1[0].lemma == "plaid");
    CHECK(k1[0].descriptions == 5);
    CHECK(k1[1].lemma == "soft");
    CHECK(k1[1].descriptions == 2);

    const auto k2 = extract_keywords({desc("a", {"soft", "red"})}, lex, attrs, psi);
    REQUIRE(k2.size() == 2);
    CHECK(k2[0].attribute == "color");
    CHECK(k2[1].attribute == "touch");

    // Three attributes, full order: blue/red (2, color), plaid (2, pattern), soft (1, touch), then nothing else.
    const std::vector<ProcessedDescription> three{desc("x1", {"red", "plaid", "blue"}), desc("x2", {"blue", "red", "plaid", "soft"}),
                                                  desc("x3", {"soft"})};
    const auto k3 = extract_keywords(three, lex, attrs, psi, 2);
    std::vector<std::string> order;
    for (const auto& k : k3) order.push_back(k.lemma);
    CHECK(order == std::vector<std::string>{"blue", "red", "plaid", "soft"});
    // Lemmas outside the lexicon or without an attribute never appear; missing psi sorts last.
    const auto k4 = extract_keywords({desc("z", {"red", "soft", "velvet"})}, {"red", "soft"}, attrs, {{"touch", 1.0}});
    CHECK(k4[0].lemma == "soft");
    CHECK(k4.size() == 2);
    CHECK(extract_keywords({}, lex, attrs, psi).empty());
}

}
