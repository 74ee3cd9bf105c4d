#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "matchlab/predictors.hpp"

using namespace matchlab;

namespace {

// True when z lies on the segment between two same-label rows of `original`.
bool on_some_segment(const Dataset& original, std::span<const double> z, int label) {
    for (std::size_t a = 0; a < original.size(); ++a) {
        if (original.label(a) != label) continue;
        const auto x = original.row(a);
        for (std::size_t b = 0; b < original.size(); ++b) {
            if (b == a || original.label(b) != label) continue;
            const auto y = original.row(b);
            // Pick u from the widest coordinate, then check every coordinate.
            std::size_t widest = 0;
            for (std::size_t d = 1; d < x.size(); ++d) {
                if (std::abs(y[d] - x[d]) > std::abs(y[widest] - x[widest])) widest = d;
            }
            const double span = y[widest] - x[widest];
            const double u = span == 0.0 ? 0.0 : (z[widest] - x[widest]) / span;
            if (u < -1e-12 || u > 1 + 1e-12) continue;
            bool ok = true;
            for (std::size_t d = 0; d < x.size() && ok; ++d) {
                ok = std::abs(x[d] + u * (y[d] - x[d]) - z[d]) < 1e-9;
            }
            if (ok) return true;
        }
    }
    return false;
}

Dataset gaussian_blobs(const std::vector<std::size_t>& sizes, Rng& rng) {
    Dataset d(3, static_cast<int>(sizes.size()));
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        for (std::size_t i = 0; i < sizes[c]; ++i) {
            const double row[3]{rng.normal(3.0 * c, 1.0), rng.normal(-2.0 * c, 1.0), rng.normal()};
            d.add(row, static_cast<int>(c));
        }
    }
    return d;
}

} // namespace

TEST_CASE("dataset rejects bad rows") {
    Dataset d(2, 3);
    const double ok[2]{1, 2};
    const double wide[3]{1, 2, 3};
    d.add(ok, 2);
    CHECK(d.size() == 1);
    CHECK_THROWS_WITH_AS(d.add(wide, 0), "expected 2 features, got 3", std::invalid_argument);
    CHECK_THROWS_AS(d.add(ok, 3), std::invalid_argument);
    CHECK_THROWS_AS(d.add(ok, -1), std::invalid_argument);
    CHECK(d.class_counts() == std::vector<std::size_t>{0, 0, 1});
}

TEST_CASE("oversampling balances every class and interpolates on segments") {
    Rng rng(1, "test");
    const Dataset data = gaussian_blobs({40, 9, 12, 25}, rng);
    std::vector<std::string> warnings;
    const Dataset out = smote_oversample(data, 5, rng, &warnings);
    CHECK(warnings.empty());
    CHECK(out.class_counts() == std::vector<std::size_t>(4, 40));
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(out.label(i) == data.label(i));
        CHECK(std::equal(out.row(i).begin(), out.row(i).end(), data.row(i).begin()));
    }
    for (std::size_t i = data.size(); i < out.size(); ++i) {
        CHECK(on_some_segment(data, out.row(i), out.label(i)));
    }
}

TEST_CASE("oversampling follows the corpus class pattern") {
    // Class sizes in the proportions of the platform rating counts, scaled down.
    Rng rng(2, "test");
    const std::vector<std::size_t> sizes{280, 80, 94, 232, 1673};
    const Dataset data = gaussian_blobs(sizes, rng);
    const Dataset out = smote_oversample(data, 5, rng);
    CHECK(out.class_counts() == std::vector<std::size_t>(5, 1673));
    CHECK(out.size() == 5 * 1673);
}

TEST_CASE("oversampling edge cases") {
    Rng rng(3, "test");
    Dataset tiny(1, 2);
    const double a[1]{0.0}, b[1]{1.0}, c[1]{2.0}, d[1]{5.0};
    tiny.add(a, 0);
    tiny.add(b, 0);
    tiny.add(c, 0);
    tiny.add(d, 1);
    CHECK_THROWS_WITH_AS(smote_oversample(tiny, 5, rng), doctest::Contains("class 1"),
                         std::invalid_argument);

    tiny.add(d, 1);
    std::vector<std::string> warnings;
    const Dataset out = smote_oversample(tiny, 5, rng, &warnings);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("class 1 has 2 samples; k reduced from 5 to 1") != std::string::npos);
    CHECK(out.class_counts() == std::vector<std::size_t>{3, 3});

    CHECK_THROWS_AS(smote_oversample(tiny, 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(smote_oversample(Dataset(1, 2), 5, rng), std::invalid_argument);

    Dataset balanced(1, 2);
    balanced.add(a, 0);
    balanced.add(d, 1);
    CHECK(smote_oversample(balanced, 5, rng) == balanced);
}

TEST_CASE("a tree separates separable data") {
    Dataset d(2, 2);
    Rng rng(4, "test");
    for (int i = 0; i < 200; ++i) {
        const double x = rng.uniform(), y = rng.uniform();
        const double row[2]{x, y};
        d.add(row, x > 0.6 ? 1 : 0);
    }
    Rng tree_rng(5, "test");
    const DecisionTree t = train_tree(d, TreeParams{12, 1, 2}, tree_rng);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(t.predict(d.row(i)) == d.label(i));
    CHECK(t.depth() >= 1);
}

TEST_CASE("tree degenerate shapes") {
    Dataset single(2, 3);
    const double r1[2]{0, 1}, r2[2]{3, 4};
    single.add(r1, 2);
    single.add(r2, 2);
    Rng rng(6, "test");
    const DecisionTree pure = train_tree(single, TreeParams{}, rng);
    CHECK(pure.depth() == 0);
    CHECK(pure.leaf_count() == 1);
    CHECK(pure.predict(r1) == 2);

    Dataset mixed(2, 2);
    mixed.add(r1, 0);
    mixed.add(r2, 1);
    const DecisionTree stump = train_tree(mixed, TreeParams{0, 1, 2}, rng);
    CHECK(stump.depth() == 0);
    const auto h = stump.leaf_histogram(r1);
    CHECK(h[0] == 1);
    CHECK(h[1] == 1);
    CHECK(stump.predict(r1) == 0);  // ties go to the lower class

    CHECK_THROWS_AS(train_tree(mixed, TreeParams{-1, 1, 1}, rng), std::invalid_argument);
    CHECK_THROWS_AS(train_tree(mixed, TreeParams{3, 0, 1}, rng), std::invalid_argument);
}

TEST_CASE("a one-tree forest without bootstrap is its tree") {
    Rng rng(7, "test");
    const Dataset d = gaussian_blobs({60, 60, 60}, rng);
    ForestParams fp;
    fp.n_trees = 1;
    fp.bootstrap = false;
    const ForestModel forest = train_forest(d, fp, 99, 1);
    Rng tree_rng = forest_tree_rng(99, 0);
    const DecisionTree tree = train_tree(d, fp.tree, tree_rng);
    CHECK(forest.trees().front() == tree);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(forest.predict(d.row(i)) == tree.predict(d.row(i)));
}

TEST_CASE("forest accuracy, batch agreement and thread independence") {
    Rng rng(8, "test");
    const Dataset train = gaussian_blobs({300, 300, 300}, rng);
    const Dataset test = gaussian_blobs({200, 200, 200}, rng);
    ForestParams fp;
    fp.n_trees = 25;
    fp.tree.features_per_split = 2;
    const ForestModel one = train_forest(train, fp, 5, 1);
    const ForestModel many = train_forest(train, fp, 5, 3);
    REQUIRE(one.trees().size() == many.trees().size());
    for (std::size_t i = 0; i < one.trees().size(); ++i) CHECK(one.trees()[i] == many.trees()[i]);

    const EvalReport r = evaluate(one, test);
    CHECK(r.accuracy >= 0.9);
    CHECK(r.samples == test.size());

    std::vector<double> block;
    for (std::size_t i = 0; i < test.size(); ++i) {
        block.insert(block.end(), test.row(i).begin(), test.row(i).end());
    }
    const auto batch = one.predict_batch(block);
    for (std::size_t i = 0; i < test.size(); ++i) CHECK(batch[i] == one.predict(test.row(i)));

    const double short_row[2]{0, 0};
    CHECK_THROWS_AS(one.predict(short_row), std::invalid_argument);
    CHECK_THROWS_AS(one.predict_batch(std::span<const double>(block.data(), 4)), std::invalid_argument);
    fp.n_trees = 0;
    CHECK_THROWS_AS(train_forest(train, fp, 5), std::invalid_argument);
}

TEST_CASE("evaluation metrics by hand") {
    const std::vector<int> truth{0, 0, 1, 1, 2, 2};
    const std::vector<int> pred{0, 1, 1, 1, 0, 2};
    const EvalReport r = evaluate_predictions(truth, pred, 3);
    CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));
    // class 0: tp1 fp1 fn1 -> 0.5; class 1: tp2 fp1 fn0 -> 0.8; class 2: tp1 fp0 fn1 -> 2/3
    CHECK(r.macro_f1 == doctest::Approx((0.5 + 0.8 + 2.0 / 3.0) / 3.0));
    CHECK(r.confusion[2][0] == 1);
    CHECK(r.confusion[0][1] == 1);

    // A class absent everywhere is left out of the macro average.
    const std::vector<int> t2{0, 0, 1};
    const std::vector<int> p2{0, 0, 1};
    CHECK(evaluate_predictions(t2, p2, 4).macro_f1 == doctest::Approx(1.0));

    CHECK_THROWS_AS(evaluate_predictions(t2, pred, 3), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_predictions(std::vector<int>{}, std::vector<int>{}, 3),
                    std::invalid_argument);
}

TEST_CASE("outcome models on a small corpus") {
    const AgentFactory factory{PopulationParams{}};
    Rng rng(9, "test");
    const auto corpus = generate_corpus(1500, OracleParams{}, factory, rng);
    TrainingOptions options;
    options.forest.n_trees = 10;
    options.threads = 1;
    const TrainedPredictors tp = train_predictors(corpus, options);

    CHECK(tp.rating.kind == OutcomeKind::Rating);
    CHECK(tp.block.kind == OutcomeKind::Block);
    CHECK(tp.rating.forest.feature_count() == kPairEncodingDim);
    CHECK(tp.rating_eval.samples == 300);
    const auto after = tp.rating_counts_after;
    CHECK(std::all_of(after.begin(), after.end(), [&](std::size_t c) { return c == after.front(); }));

    const Agent& s = corpus.front().seeker;
    const Agent& c = corpus.front().counselor;
    const int stars = predict_rating(tp.rating, s, c);
    CHECK(stars >= 1);
    CHECK(stars <= 5);
    const int blocked = predict_block(tp.block, s, c);
    CHECK((blocked == 0 || blocked == 1));
    CHECK_THROWS_AS(predict_rating(tp.block, s, c), std::logic_error);
    CHECK_THROWS_AS(predict_block(tp.rating, s, c), std::logic_error);

    const auto row = encode_pair(s, c, tp.rating.scaling);
    CHECK(predict_labels(tp.rating, row).front() == stars);
    CHECK(predict_class(tp.rating, row) + 1 == stars);

    SUBCASE("JSON round trip keeps every prediction") {
        const nlohmann::json j = model_to_json(tp.rating);
        CHECK(j["format"] == "matchlab.forest");
        CHECK(j["target"] == "rating");
        const OutcomeModel back = model_from_json(nlohmann::json::parse(j.dump()));
        CHECK(back.scaling == tp.rating.scaling);
        CHECK(back.forest.trees().size() == tp.rating.forest.trees().size());
        for (std::size_t i = 0; i < back.forest.trees().size(); ++i) {
            CHECK(back.forest.trees()[i] == tp.rating.forest.trees()[i]);
        }
        for (const auto& p : corpus) {
            CHECK(predict_rating(back, p.seeker, p.counselor) ==
                  predict_rating(tp.rating, p.seeker, p.counselor));
        }
    }
    SUBCASE("file round trip and malformed input") {
        const std::string path = "test_predictors_block.json";
        save_model(tp.block, path);
        const OutcomeModel back = load_model(path);
        std::remove(path.c_str());
        CHECK(back.kind == OutcomeKind::Block);
        CHECK(model_to_json(back) == model_to_json(tp.block));
        CHECK_THROWS_AS(load_model("no/such/model.json"), std::runtime_error);

        nlohmann::json j = model_to_json(tp.block);
        j["format"] = "other";
        CHECK_THROWS_AS(model_from_json(j), std::invalid_argument);
        j = model_to_json(tp.block);
        j["version"] = 9;
        CHECK_THROWS_AS(model_from_json(j), std::invalid_argument);
        j = model_to_json(tp.block);
        j["target"] = "mood";
        CHECK_THROWS_AS(model_from_json(j), std::invalid_argument);
    }
}
