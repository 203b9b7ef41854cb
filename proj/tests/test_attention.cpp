#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "testutil.hpp"
#include "vitderm/attention.hpp"

using namespace vitderm;

namespace {

// random row-stochastic [t x t] matrix
std::vector<double> random_stochastic(int t, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(0.01, 1.0);
    std::vector<double> m(static_cast<size_t>(t) * t);
    for (int i = 0; i < t; ++i) {
        double s = 0.0;
        for (int j = 0; j < t; ++j) {
            m[static_cast<size_t>(i) * t + j] = dist(rng);
            s += m[static_cast<size_t>(i) * t + j];
        }
        for (int j = 0; j < t; ++j) m[static_cast<size_t>(i) * t + j] /= s;
    }
    return m;
}

AttentionRecord random_record(int tokens, int depth, int heads, uint64_t seed) {
    std::mt19937_64 rng(seed);
    AttentionRecord rec;
    rec.tokens = tokens;
    for (int l = 0; l < depth; ++l) {
        std::vector<std::vector<double>> layer;
        for (int h = 0; h < heads; ++h) layer.push_back(random_stochastic(tokens, rng));
        rec.layers.push_back(std::move(layer));
    }
    return rec;
}

std::vector<double> identity_matrix(int t) {
    std::vector<double> m(static_cast<size_t>(t) * t, 0.0);
    for (int i = 0; i < t; ++i) m[static_cast<size_t>(i) * t + i] = 1.0;
    return m;
}

} // namespace

TEST_CASE("identity attention rolls out to the all-zero map") {
    AttentionRecord rec;
    rec.tokens = 5;
    rec.layers = {{identity_matrix(5)}};
    const AttentionMap map = attention_rollout(rec);
    CHECK(map.grid == 2);
    for (double v : map.values) CHECK(v == 0.0);
}

TEST_CASE("class-token attention concentrated on one patch peaks there") {
    const int t = 5, j = 3;  // patch index 2 in the grid
    std::vector<double> m(static_cast<size_t>(t) * t, 0.0);
    for (int i = 0; i < t; ++i) m[static_cast<size_t>(i) * t + i] = 0.2;
    m[0] = 0.0;
    m[j] = 1.0;  // class-token row looks at token j
    for (int i = 0; i < t; ++i) {  // keep rows stochastic
        double s = 0.0;
        for (int k = 0; k < t; ++k) s += m[static_cast<size_t>(i) * t + k];
        for (int k = 0; k < t; ++k) m[static_cast<size_t>(i) * t + k] /= s;
    }
    AttentionRecord rec;
    rec.tokens = t;
    rec.layers = {{m}};
    const AttentionMap map = attention_rollout(rec);
    CHECK(map.values[j - 1] == 1.0);
    for (int k = 0; k < 4; ++k)
        if (k != j - 1) CHECK(map.values[k] < 1.0);
}

TEST_CASE("rollout intermediates stay row-stochastic within 1e-5") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        const AttentionRecord rec = random_record(10, 4, 3, seed);
        std::vector<std::vector<double>> intermediates;
        attention_rollout(rec, &intermediates);
        REQUIRE(intermediates.size() == 4);
        for (const auto& m : intermediates)
            for (int i = 0; i < 10; ++i) {
                double s = 0.0;
                for (int j = 0; j < 10; ++j) {
                    CHECK(m[static_cast<size_t>(i) * 10 + j] >= 0.0);
                    s += m[static_cast<size_t>(i) * 10 + j];
                }
                CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
            }
    }
}

TEST_CASE("rollout is invariant to head order within a layer") {
    AttentionRecord rec = random_record(5, 2, 4, 77);
    const AttentionMap a = attention_rollout(rec);
    std::swap(rec.layers[0][0], rec.layers[0][3]);
    std::swap(rec.layers[1][1], rec.layers[1][2]);
    const AttentionMap b = attention_rollout(rec);
    REQUIRE(a.values.size() == b.values.size());
    for (size_t i = 0; i < a.values.size(); ++i)
        CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
}

TEST_CASE("malformed records are dimension errors") {
    AttentionRecord rec;
    rec.tokens = 5;
    CHECK_THROWS_AS(attention_rollout(rec), DimensionError);  // no layers

    rec = random_record(5, 2, 2, 1);
    rec.layers[1].pop_back();  // inconsistent heads
    CHECK_THROWS_AS(attention_rollout(rec), DimensionError);

    rec = random_record(5, 1, 1, 1);
    rec.layers[0][0].pop_back();  // wrong matrix size
    CHECK_THROWS_AS(attention_rollout(rec), DimensionError);

    rec = random_record(4, 1, 1, 1);  // 3 patches: not a square grid
    CHECK_THROWS_AS(attention_rollout(rec), DimensionError);
}

TEST_CASE("map normalization puts the max at exactly 1") {
    const AttentionRecord rec = random_record(10, 2, 2, 5);
    const AttentionMap map = attention_rollout(rec);
    double mx = 0.0, mn = 1.0;
    for (double v : map.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    CHECK(mx == 1.0);
    CHECK(mn == 0.0);
}

TEST_CASE("upsampling preserves the argmax location") {
    AttentionMap map;
    map.grid = 4;
    map.values.assign(16, 0.1);
    map.values[9] = 1.0;  // cell (2,1)
    const std::vector<double> up = upsample_map(map, 64, 64);
    size_t best = 0;
    for (size_t i = 1; i < up.size(); ++i)
        if (up[i] > up[best]) best = i;
    const int by = static_cast<int>(best) / 64, bx = static_cast<int>(best) % 64;
    // the max pixel lies inside the 16x16 block of grid cell (2,1)
    CHECK(by >= 2 * 16);
    CHECK(by < 3 * 16);
    CHECK(bx >= 1 * 16);
    CHECK(bx < 2 * 16);
}

TEST_CASE("alpha 0 renders the input image unchanged") {
    const Image img = testutil::random_image(16, 9);
    AttentionMap map;
    map.grid = 4;
    map.values.assign(16, 0.0);
    map.values[5] = 1.0;
    const Image out = render_heatmap(map, img, 0.0);
    CHECK(out.pixels == img.pixels);
}

TEST_CASE("alpha 1 with a zero map paints the lowest colormap stop") {
    const Image img = testutil::random_image(16, 10);
    AttentionMap map;
    map.grid = 4;
    map.values.assign(16, 0.0);
    const Image out = render_heatmap(map, img, 1.0);
    double rgb[3];
    heat_colormap(0.0, rgb);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == rgb[c]);
}

TEST_CASE("render rejects bad alpha and indivisible grids") {
    const Image img = testutil::random_image(16, 11);
    AttentionMap map;
    map.grid = 4;
    map.values.assign(16, 0.5);
    CHECK_THROWS_AS(render_heatmap(map, img, 1.5), ConfigError);
    map.grid = 5;
    map.values.assign(25, 0.5);
    CHECK_THROWS_AS(render_heatmap(map, img, 0.5), DimensionError);
}

TEST_CASE("rendering is deterministic") {
    const Image img = testutil::random_image(16, 12);
    const AttentionRecord rec = random_record(17, 2, 2, 6);
    const AttentionMap map = attention_rollout(rec);
    const Image a = render_heatmap(map, img, 0.6);
    const Image b = render_heatmap(map, img, 0.6);
    CHECK(a.pixels == b.pixels);
}

TEST_CASE("single-layer attention selects layers and heads") {
    AttentionRecord rec = random_record(5, 3, 2, 8);
    const AttentionMap last = layer_attention(rec);
    const AttentionMap explicit_last = layer_attention(rec, 2);
    CHECK(last.values == explicit_last.values);

    const AttentionMap head0 = layer_attention(rec, 1, 0);
    const AttentionMap head1 = layer_attention(rec, 1, 1);
    CHECK(head0.values != head1.values);
    CHECK_THROWS_AS(layer_attention(rec, 5), DimensionError);
    CHECK_THROWS_AS(layer_attention(rec, 0, 7), DimensionError);
}

TEST_CASE("colormap endpoints and interior are monotone in brightness") {
    double lo[3], mid[3], hi[3];
    heat_colormap(0.0, lo);
    heat_colormap(0.5, mid);
    heat_colormap(1.0, hi);
    const double l = lo[0] + lo[1] + lo[2];
    const double m = mid[0] + mid[1] + mid[2];
    const double h = hi[0] + hi[1] + hi[2];
    CHECK(l < m);
    CHECK(m < h);
}
