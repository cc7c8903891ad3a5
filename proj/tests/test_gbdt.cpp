#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "mqttids/errors.hpp"
#include "mqttids/gbdt.hpp"

using namespace mqttids;
using namespace mqttids::gbdt;
namespace th = testing_helpers;

TEST_CASE("leaf weight is -G/(H+lambda)") {
    // 4 rows, all class 0, constant feature: with zero margins p = 0.5, so
    // g = -0.5 and h = 0.25 per row -> G = -2, H = 1; lambda = 1 gives w* = 1.
    auto t = th::make_table({"f0"}, {{1}, {1}, {1}, {1}}, {0, 0, 0, 0}, {"a", "b"});
    GbdtParams p;
    p.n_rounds = 1;
    p.lambda = 1;
    Booster b = train(t, nullptr, p);
    REQUIRE(b.trees.size() == 1);
    const Tree& tree = b.trees[0][0];
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].weight == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero-gain candidate split is rejected") {
    // 8 rows all class 0, feature splits 4/4: G_L = G_R = -2, H_L = H_R = 1;
    // lambda = 0, gamma = 0 -> gain = 0.5(4 + 4 - 8) = 0, not > 0 -> leaf.
    auto t = th::make_table({"f0"},
                            {{0}, {0}, {0}, {0}, {1}, {1}, {1}, {1}},
                            {0, 0, 0, 0, 0, 0, 0, 0}, {"a", "b"});
    GbdtParams p;
    p.n_rounds = 1;
    p.lambda = 0;
    p.gamma = 0;
    p.min_child_weight = 0.5;
    Booster b = train(t, nullptr, p);
    CHECK(b.trees[0][0].nodes.size() == 1);
}

TEST_CASE("perfectly separable 2-class table trains to zero error fast") {
    data::FrameTable t = th::make_table({"f0", "f1"}, {}, {}, {"a", "b"});
    std::mt19937_64 rng(21);
    for (int i = 0; i < 20; ++i) {
        int label = i % 2;
        t.rows.push_back({static_cast<double>(label), static_cast<double>(rng() % 5)});
        t.labels.push_back(label);
    }
    GbdtParams p;
    p.eta = 0.4;
    p.n_rounds = 10;
    Booster b = train(t, nullptr, p);
    CHECK(b.history.back().train_merror == 0.0);

    // and the histogram trainer agrees with the exact-split reference
    auto ref = th::train_exact_reference(t, p);
    REQUIRE(ref.size() == b.trees.size());
    for (std::size_t r = 0; r < ref.size(); ++r)
        for (std::size_t c = 0; c < ref[r].size(); ++c)
            CHECK(th::trees_match(b.trees[r][c], ref[r][c]));
}

TEST_CASE("histogram trainer equals the exact-split reference on random tables") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 8; ++trial) {
        auto t = th::random_table(rng, 40 + rng() % 60, 4, 2 + rng() % 3, 8);
        GbdtParams p;
        p.eta = 0.3;
        p.max_depth = 2 + rng() % 4;
        p.gamma = (trial % 2) * 0.3;
        p.min_child_weight = 1 + (trial % 3);
        p.n_rounds = 5;
        Booster b = train(t, nullptr, p);
        auto ref = th::train_exact_reference(t, p);
        for (std::size_t r = 0; r < ref.size(); ++r)
            for (std::size_t c = 0; c < ref[r].size(); ++c)
                CHECK(th::trees_match(b.trees[r][c], ref[r][c]));
    }
}

TEST_CASE("train mlogloss never increases without sampling") {
    std::mt19937_64 rng(23);
    auto t = th::random_table(rng, 200, 5, 4, 12);
    GbdtParams p;
    p.n_rounds = 50;
    Booster b = train(t, nullptr, p);
    for (std::size_t r = 1; r < b.history.size(); ++r)
        CHECK(b.history[r].train_mlogloss <= b.history[r - 1].train_mlogloss + 1e-12);
}

TEST_CASE("predict_proba yields calibrated softmax rows") {
    std::mt19937_64 rng(24);
    auto t = th::random_table(rng, 80, 4, 4, 6);

    SUBCASE("zero-round booster is uniform") {
        GbdtParams p;
        p.n_rounds = 0;
        Booster b = train(t, nullptr, p);
        auto probs = b.predict_proba({t.rows[0]});
        for (std::size_t c = 0; c < 4; ++c) CHECK(probs[c] == doctest::Approx(0.25));
    }

    SUBCASE("rows sum to one and batch equals single-row") {
        GbdtParams p;
        p.n_rounds = 8;
        p.subsample = 0.8;
        p.colsample_bytree = 0.8;
        p.seed = 5;
        Booster b = train(t, nullptr, p);
        auto batch = b.predict_proba(t.rows);
        for (std::size_t r = 0; r < t.n_rows(); ++r) {
            double sum = 0;
            auto single = b.predict_proba({t.rows[r]});
            for (std::size_t c = 0; c < 4; ++c) {
                CHECK(batch[r * 4 + c] > 0.0);
                CHECK(batch[r * 4 + c] < 1.0);
                CHECK(batch[r * 4 + c] == single[c]);
                sum += batch[r * 4 + c];
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
        CHECK_THROWS_AS(b.predict_proba({{1.0, 2.0}}), SchemaMismatch);
    }
}

TEST_CASE("training is deterministic for a fixed seed") {
    std::mt19937_64 rng(25);
    auto t = th::random_table(rng, 100, 5, 3, 7);
    GbdtParams p;
    p.n_rounds = 6;
    p.subsample = 0.7;
    p.colsample_bytree = 0.6;
    p.seed = 99;
    Booster a = train(t, nullptr, p);
    Booster b = train(t, nullptr, p);
    CHECK(a.serialize() == b.serialize());
}

TEST_CASE("model file round trip preserves predictions and history") {
    std::mt19937_64 rng(26);
    auto t = th::random_table(rng, 60, 4, 4, 6);
    GbdtParams p;
    p.n_rounds = 4;
    Booster b = train(t, &t, p);
    Booster back = Booster::deserialize(b.serialize());
    CHECK(back.n_classes == b.n_classes);
    CHECK(back.label_names == b.label_names);
    CHECK(back.params == b.params);
    CHECK(back.predict_proba(t.rows) == b.predict_proba(t.rows));
    REQUIRE(back.history.size() == b.history.size());
    CHECK(back.history.back().eval_mlogloss ==
          doctest::Approx(b.history.back().eval_mlogloss));
    CHECK_THROWS_AS(Booster::deserialize("garbage"), SchemaMismatch);
}

TEST_CASE("stratified folds round-robin within each class") {
    std::vector<int> labels = {0, 0, 0, 1, 0, 1, 1, 1, 0};
    auto folds = stratified_folds(labels, 3);
    CHECK(folds == std::vector<std::size_t>{0, 1, 2, 0, 0, 1, 2, 0, 1});
}

TEST_CASE("grid search enumerates the full Cartesian product") {
    CHECK(GridSpec::paper_grid().combinations() == 2025);

    std::mt19937_64 rng(27);
    auto t = th::random_table(rng, 60, 3, 2, 5);

    GridSpec tiny;
    tiny.max_depth = {2, 3};
    tiny.eta = {0.3};
    tiny.min_child_weight = {1};
    tiny.gamma = {0, 0.5};
    tiny.subsample = {1.0};
    tiny.colsample_bytree = {1.0};
    tiny.n_rounds = 3;
    auto result = grid_search(t, tiny, 3, 1);
    // header + 4 combination rows
    CHECK(std::count(result.report_csv.begin(), result.report_csv.end(), '\n') == 5);

    GridSpec single;
    single.max_depth = {4};
    single.eta = {0.5};
    single.min_child_weight = {2};
    single.gamma = {1.0};
    single.subsample = {0.9};
    single.colsample_bytree = {0.8};
    single.n_rounds = 2;
    auto one = grid_search(t, single, 3, 1);
    CHECK(one.best.max_depth == 4);
    CHECK(one.best.eta == 0.5);
    CHECK(one.best.min_child_weight == 2);
    CHECK(one.best.gamma == 1.0);
    CHECK(one.best.subsample == 0.9);
    CHECK(one.best.colsample_bytree == 0.8);
}

TEST_CASE("parameter validation") {
    GbdtParams p;
    p.eta = 0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.subsample = 1.5;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.max_depth = 0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("all-NaN feature column is rejected") {
    auto t = th::make_table({"f0", "f1"},
                            {{std::nan(""), 1.0}, {std::nan(""), 2.0}},
                            {0, 1}, {"a", "b"});
    GbdtParams p;
    p.n_rounds = 1;
    CHECK_THROWS_AS(train(t, nullptr, p), DegenerateData);
}
