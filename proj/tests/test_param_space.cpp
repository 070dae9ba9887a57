#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lossscope/param_space.hpp"
#include "lossscope/rng.hpp"

using namespace lossscope;

namespace {

// single anonymous segment covering n scalars
LayoutPtr flat_layout(std::size_t n) {
    return ParamLayout::create({{"w", std::nullopt, 0, n, false}});
}

// toy layout: embedding, two encoder layers, task head
LayoutPtr toy_layout() {
    return ParamLayout::create({
        {"embed", std::nullopt, 0, 2, false},
        {"layer0", 0, 2, 3, false},
        {"layer1", 1, 5, 3, false},
        {"head", std::nullopt, 8, 2, true},
    });
}

ParamVector pv(const LayoutPtr& layout, std::vector<double> v, std::string id = {}) {
    return ParamVector(layout, std::move(v), std::move(id));
}

Direction external_dir(const LayoutPtr& layout, std::vector<double> v) {
    Provenance prov;
    prov.kind = Provenance::Kind::external;
    prov.label = "test";
    return Direction(layout, std::move(v), prov);
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    return v;
}

}  // namespace

TEST_CASE("layout validation") {
    CHECK_THROWS_AS(ParamLayout::create({{"a", std::nullopt, 1, 2, false}}), std::invalid_argument);  // gap
    CHECK_THROWS_AS(ParamLayout::create({{"a", std::nullopt, 0, 2, false}, {"b", std::nullopt, 3, 1, false}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(ParamLayout::create({{"a", 0, 0, 2, true}}), std::invalid_argument);  // layered head
    auto layout = toy_layout();
    CHECK(layout->total_len == 10);
    CHECK(layout->num_layers() == 2);
    CHECK(layout->find("layer1") != nullptr);
    CHECK(layout->find("nope") == nullptr);
}

TEST_CASE("diff basics") {
    auto layout = flat_layout(2);
    auto d = diff(pv(layout, {1, 2}, "a"), pv(layout, {0, 0}, "b"));
    CHECK(d.values()[0] == 1.0);
    CHECK(d.values()[1] == 2.0);
    CHECK(d.provenance().kind == Provenance::Kind::diff);
    CHECK(d.provenance().to_id == "a");
    CHECK(d.provenance().from_id == "b");

    auto v = pv(layout, {3.5, -1.25});
    auto zero = diff(v, v);
    CHECK(norm(zero) == 0.0);
}

TEST_CASE("diff matches an independent elementwise loop on seeded vectors") {
    auto layout = flat_layout(10);
    auto a_vals = random_values(10, 11);
    auto b_vals = random_values(10, 22);
    auto d = diff(pv(layout, a_vals), pv(layout, b_vals));
    for (std::size_t k = 0; k < 10; ++k) {
        double expect = a_vals[k] - b_vals[k];  // oracle: plain elementwise loop
        CHECK(d.values()[k] == expect);
    }
}

TEST_CASE("diff rejects layout mismatch") {
    auto a = pv(flat_layout(2), {1, 2});
    auto b = pv(flat_layout(3), {1, 2, 3});
    CHECK_THROWS_WITH_AS(diff(a, b), doctest::Contains("layout"), std::invalid_argument);
}

TEST_CASE("norm") {
    auto layout = flat_layout(2);
    CHECK(norm(external_dir(layout, {3, 4})) == 5.0);  // 3-4-5 triangle
    CHECK(norm(external_dir(layout, {0, 0})) == 0.0);
    auto unit = external_dir(flat_layout(7), {0, 0, 0, 1, 0, 0, 0});
    CHECK(norm(unit) == 1.0);
}

TEST_CASE("rescale_to") {
    auto layout = flat_layout(2);
    auto d = external_dir(layout, {3, 4});
    auto r = rescale_to(d, 10.0);
    CHECK(r.values()[0] == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(r.values()[1] == doctest::Approx(8.0).epsilon(1e-14));
    CHECK(r.provenance().kind == Provenance::Kind::rescaled);

    // target == current norm keeps the values bit-identical
    auto same = rescale_to(d, norm(d));
    CHECK(same.values()[0] == d.values()[0]);
    CHECK(same.values()[1] == d.values()[1]);

    auto axis = external_dir(flat_layout(5), {1, 0, 0, 0, 0});
    auto scaled = rescale_to(axis, 4.0);
    CHECK(scaled.values()[0] == 4.0);
    CHECK(scaled.values()[1] == 0.0);

    CHECK_THROWS_AS(rescale_to(external_dir(layout, {0, 0}), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(rescale_to(d, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(rescale_to(d, -2.0), std::invalid_argument);
}

TEST_CASE("rescale_to hits the target norm within 1e-12 relative") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        auto layout = flat_layout(56130);  // around the default model size
        auto d = external_dir(layout, random_values(56130, seed));
        double target = 0.5 + 3.0 * Rng(seed).uniform01();
        double got = norm(rescale_to(d, target));
        CHECK(std::abs(got - target) <= 1e-12 * target);
    }
}

TEST_CASE("combine basics") {
    auto layout = flat_layout(2);
    auto origin = pv(layout, {0, 0});
    auto d1 = external_dir(layout, {2, 0});
    auto d2 = external_dir(layout, {0, 3});
    auto r = combine(origin, {{0.5, &d1}, {1.0, &d2}});
    CHECK(r.values()[0] == 1.0);
    CHECK(r.values()[1] == 3.0);

    // zero coefficients leave the origin untouched
    auto same = combine(origin, {{0.0, &d1}, {0.0, &d2}});
    CHECK(same.values()[0] == origin.values()[0]);
    CHECK(same.values()[1] == origin.values()[1]);
}

TEST_CASE("combine reproduces the diff endpoint bit-for-bit") {
    auto layout = flat_layout(64);
    // awkward magnitudes on purpose: plain origin + (a-b) would round
    auto t0 = pv(layout, random_values(64, 7), "theta0");
    std::vector<double> t1_vals = random_values(64, 8);
    for (auto& x : t1_vals) x *= 1e-3;
    for (std::size_t k = 0; k < 64; ++k) t1_vals[k] += t0.values()[k];
    auto t1 = pv(layout, t1_vals, "theta1");

    auto d = diff(t1, t0);
    auto rebuilt = combine(t0, {{1.0, &d}});
    for (std::size_t k = 0; k < 64; ++k) CHECK(rebuilt.values()[k] == t1.values()[k]);

    auto back = combine(t1, {{-1.0, &d}});
    for (std::size_t k = 0; k < 64; ++k) CHECK(back.values()[k] == t0.values()[k]);
}

TEST_CASE("combine rejects layout mismatch") {
    auto origin = pv(flat_layout(2), {0, 0});
    auto d = external_dir(flat_layout(3), {1, 2, 3});
    CHECK_THROWS_WITH_AS(combine(origin, {{1.0, &d}}), doctest::Contains("layout"), std::invalid_argument);
}

TEST_CASE("cosine") {
    auto layout = flat_layout(2);
    auto d = external_dir(layout, {0.3, -0.7});
    CHECK(cosine(d, d) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cosine(external_dir(layout, {1, 0}), external_dir(layout, {0, 1})) == 0.0);
    CHECK(cosine(external_dir(layout, {3, 4}), external_dir(layout, {4, 3})) ==
          doctest::Approx(0.96).epsilon(1e-14));  // 24/25 by hand
    CHECK_THROWS_AS(cosine(d, external_dir(layout, {0, 0})), std::invalid_argument);
}

TEST_CASE("cosine is symmetric and scale-invariant") {
    auto layout = flat_layout(40);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto a = external_dir(layout, random_values(40, 100 + seed));
        auto b = external_dir(layout, random_values(40, 200 + seed));
        CHECK(cosine(a, b) == cosine(b, a));
        for (double c : {0.25, 3.0, 1e6}) {
            std::vector<double> scaled(a.values().begin(), a.values().end());
            for (auto& x : scaled) x *= c;
            auto ca = external_dir(layout, std::move(scaled));
            CHECK(std::abs(cosine(ca, b) - cosine(a, b)) <= 1e-12);
        }
    }
}

TEST_CASE("mask_to_group against a segment-walking oracle") {
    auto layout = toy_layout();
    auto d = external_dir(layout, random_values(10, 5));

    LayerGroup g1{{1}, "just-1"};
    auto masked = mask_to_group(d, g1);
    // oracle: walk segments and decide per component
    for (const Segment& s : layout->segments) {
        bool keep = s.layer_index && g1.layer_indices.count(*s.layer_index) > 0;
        for (std::size_t k = s.offset; k < s.offset + s.length; ++k) {
            CHECK(masked.values()[k] == (keep ? d.values()[k] : 0.0));
        }
    }
    CHECK(masked.provenance().kind == Provenance::Kind::masked);

    LayerGroup all{{0, 1}, "all"};
    auto full = mask_to_group(d, all);
    for (const Segment& s : layout->segments) {
        for (std::size_t k = s.offset; k < s.offset + s.length; ++k) {
            CHECK(full.values()[k] == (s.layer_index ? d.values()[k] : 0.0));
        }
    }

    LayerGroup empty{{}, "empty"};
    CHECK(norm(mask_to_group(d, empty)) == 0.0);

    LayerGroup bad{{7}, "bad"};
    CHECK_THROWS_AS(mask_to_group(d, bad), std::invalid_argument);
}

TEST_CASE("complementary masks plus residue reassemble the direction") {
    auto layout = toy_layout();
    auto d = external_dir(layout, random_values(10, 9));
    auto m0 = mask_to_group(d, {{0}, "g"});
    auto m1 = mask_to_group(d, {{1}, "g'"});
    auto layers = mask_to_group(d, {{0, 1}, "all"});
    for (std::size_t k = 0; k < 10; ++k) {
        double residue = d.values()[k] - layers.values()[k];  // non-layer part
        CHECK(m0.values()[k] + m1.values()[k] + residue == d.values()[k]);
    }
}

TEST_CASE("splice_group") {
    auto layout = toy_layout();
    auto dst = pv(layout, random_values(10, 31), "dst");
    auto src = pv(layout, random_values(10, 32), "src");

    auto untouched = splice_group(dst, src, {{}, "empty"});
    for (std::size_t k = 0; k < 10; ++k) CHECK(untouched.values()[k] == dst.values()[k]);

    auto full = splice_group(dst, src, {{0, 1}, "all"});
    for (const Segment& s : layout->segments) {
        for (std::size_t k = s.offset; k < s.offset + s.length; ++k) {
            CHECK(full.values()[k] == (s.layer_index ? src.values()[k] : dst.values()[k]));
        }
    }

    // rollback then splice back restores dst bit-exactly
    LayerGroup g{{1}, "g"};
    auto rolled = splice_group(dst, src, g);
    auto restored = splice_group(rolled, dst, g);
    for (std::size_t k = 0; k < 10; ++k) CHECK(restored.values()[k] == dst.values()[k]);

    // identity for every group
    for (const auto& group : std::vector<LayerGroup>{{{}, "e"}, {{0}, "a"}, {{0, 1}, "b"}}) {
        auto same = splice_group(dst, dst, group);
        for (std::size_t k = 0; k < 10; ++k) CHECK(same.values()[k] == dst.values()[k]);
    }

    auto other = pv(flat_layout(10), random_values(10, 33));
    CHECK_THROWS_WITH_AS(splice_group(dst, other, g), doctest::Contains("layout"), std::invalid_argument);
}

TEST_CASE("drop_task_head and splice_task_head") {
    auto layout = toy_layout();
    auto d = external_dir(layout, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    auto enc = drop_task_head(d);
    for (std::size_t k = 0; k < 8; ++k) CHECK(enc.values()[k] == d.values()[k]);
    CHECK(enc.values()[8] == 0.0);
    CHECK(enc.values()[9] == 0.0);

    auto a = pv(layout, random_values(10, 41));
    auto b = pv(layout, random_values(10, 42));
    auto spliced = splice_task_head(a, b);
    for (std::size_t k = 0; k < 8; ++k) CHECK(spliced.values()[k] == a.values()[k]);
    CHECK(spliced.values()[8] == b.values()[8]);
    CHECK(spliced.values()[9] == b.values()[9]);

    CHECK(equal_on_encoder(spliced, a));
    CHECK(!equal_on_encoder(a, b));
}

TEST_CASE("masked diff keeps exact endpoints on its support") {
    auto layout = toy_layout();
    auto t0 = pv(layout, random_values(10, 51), "t0");
    auto t1 = pv(layout, random_values(10, 52), "t1");
    LayerGroup g{{0}, "low"};
    auto dg = mask_to_group(diff(t1, t0), g);

    // moving from t1 by -1 along the masked diff is exactly the rollback
    auto moved = combine(t1, {{-1.0, &dg}});
    auto rolled = splice_group(t1, t0, g);
    for (std::size_t k = 0; k < 10; ++k) CHECK(moved.values()[k] == rolled.values()[k]);
}

TEST_CASE("default layer groups are thirds") {
    auto g6 = default_layer_groups(6);
    REQUIRE(g6.size() == 3);
    CHECK(g6[0].layer_indices == std::set<int>{0, 1});
    CHECK(g6[1].layer_indices == std::set<int>{2, 3});
    CHECK(g6[2].layer_indices == std::set<int>{4, 5});
    CHECK(g6[0].label == "low");
    CHECK(g6[2].label == "high");

    auto g24 = default_layer_groups(24);
    CHECK(g24[0].layer_indices.count(0) == 1);
    CHECK(g24[0].layer_indices.count(7) == 1);
    CHECK(g24[1].layer_indices.count(8) == 1);
    CHECK(g24[1].layer_indices.count(15) == 1);
    CHECK(g24[2].layer_indices.count(16) == 1);
    CHECK(g24[2].layer_indices.count(23) == 1);

    auto g7 = default_layer_groups(7);
    CHECK(g7[0].layer_indices == std::set<int>{0, 1});
    CHECK(g7[1].layer_indices == std::set<int>{2, 3});
    CHECK(g7[2].layer_indices == std::set<int>{4, 5, 6});
}

TEST_CASE("vectors must be finite") {
    auto layout = flat_layout(2);
    CHECK_THROWS_AS(pv(layout, {1.0, std::numeric_limits<double>::infinity()}), std::invalid_argument);
    CHECK_THROWS_AS(pv(layout, {std::nan(""), 0.0}), std::invalid_argument);
}
