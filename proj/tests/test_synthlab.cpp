#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "nnfdet/error.hpp"
#include "nnfdet/random.hpp"
#include "nnfdet/synthlab.hpp"
#include "oracle.hpp"

using namespace nnfdet;

namespace {

double mean_intensity(const RgbImage& img) {
    return std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0) / img.pixels.size();
}

Plane plane_from(int w, int h, std::vector<float> v) {
    Plane p(w, h);
    p.data = std::move(v);
    return p;
}

std::vector<CellChannelStack> planted_windows(int n_scenes, std::uint64_t seed) {
    const ModelGeometry g;
    std::vector<CellChannelStack> out;
    for (const auto& s : gen_scenes(seed, n_scenes, SynthParams{}))
        for (const auto& b : s.boxes) out.push_back(window_channels(s.image, b, g));
    return out;
}

} // namespace

TEST_CASE("scenes without targets have no boxes") {
    SynthParams p;
    p.n_targets = 0;
    const SynthScene s = gen_scene(3, p);
    CHECK(s.boxes.empty());
    CHECK(std::count(s.mask.begin(), s.mask.end(), 1) == 0);
    CHECK(s.image.width == p.width);
    CHECK(s.image.height == p.height);
}

TEST_CASE("a single clean figure is symmetric with a tight box") {
    SynthParams p;
    p.n_targets = 1;
    p.clutter = 0;
    p.noise_sigma = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const SynthScene s = gen_scene(seed, p);
        REQUIRE(s.boxes.size() == 1);
        const Box& b = s.boxes[0];
        int mx0 = p.width, my0 = p.height, mx1 = -1, my1 = -1;
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x)
                if (s.mask[static_cast<std::size_t>(y) * p.width + x]) {
                    mx0 = std::min(mx0, x);
                    my0 = std::min(my0, y);
                    mx1 = std::max(mx1, x);
                    my1 = std::max(my1, y);
                }
        const Box mask_box{double(mx0), double(my0), double(mx1 - mx0 + 1), double(my1 - my0 + 1)};
        CHECK(iou(b, mask_box) >= 0.9);
        CHECK(b.h >= p.min_target_h * 0.9);
        CHECK(b.h <= p.max_target_h * 1.1);
        CHECK(b.x >= 0);
        CHECK(b.x + b.w <= p.width);

        // mirror symmetry about the box centre, shape and colour
        const int x0 = static_cast<int>(b.x), x1 = static_cast<int>(b.x + b.w) - 1;
        int asymmetric = 0;
        for (int y = my0; y <= my1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const int xm = x0 + x1 - x;
                const bool in = s.mask[static_cast<std::size_t>(y) * p.width + x];
                if (in != bool(s.mask[static_cast<std::size_t>(y) * p.width + xm])) ++asymmetric;
                else if (in)
                    for (int k = 0; k < 3; ++k) asymmetric += s.image.at(x, y)[k] != s.image.at(xm, y)[k];
            }
        CHECK(asymmetric == 0);
    }
}

TEST_CASE("scene generation is deterministic and varied") {
    const SynthParams p;
    const SynthScene a = gen_scene(11, p), b = gen_scene(11, p), c = gen_scene(12, p);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.boxes == b.boxes);
    CHECK(a.image.pixels != c.image.pixels);
    const double ma = mean_intensity(a.image), mc = mean_intensity(c.image);
    CHECK(std::abs(ma - mc) <= 0.1 * std::max(ma, mc));

    const auto batch = gen_scenes(11, 3, p, 0, 2);
    CHECK(batch[1].image.pixels == gen_scene(derive_seed(11, 1), p).image.pixels);
    const auto later = gen_scenes(11, 2, p, 1);
    CHECK(later[0].image.pixels == batch[1].image.pixels);
}

TEST_CASE("targets fit a detection window and do not overlap") {
    const ModelGeometry g;
    for (const auto& s : gen_scenes(5, 20, SynthParams{})) {
        CHECK(s.boxes.size() <= 2);
        for (std::size_t i = 0; i < s.boxes.size(); ++i) {
            for (std::size_t j = i + 1; j < s.boxes.size(); ++j) CHECK(intersection_area(s.boxes[i], s.boxes[j]) == 0.0);
            const RgbImage crop = crop_window(s.image, s.boxes[i], g);
            CHECK(crop.width == 64);
            CHECK(crop.height == 128);
        }
    }
    SynthParams small;
    small.width = 100;
    CHECK_THROWS_AS(gen_scene(1, small), Error);
}

TEST_CASE("dataset files round trip") {
    const auto dir = oracle::temp_dir("synth");
    const auto scenes = gen_scenes(2, 3, SynthParams{});
    write_scenes(dir, scenes);
    const auto data = load_dataset(dir);
    REQUIRE(data.size() == 3);
    CHECK(data[0].id == "scene_0000.ppm");
    CHECK(data[2].image.pixels == scenes[2].image.pixels);
    REQUIRE(data[1].boxes.size() == scenes[1].boxes.size());
    for (std::size_t i = 0; i < data[1].boxes.size(); ++i) CHECK(data[1].boxes[i].x == doctest::Approx(scenes[1].boxes[i].x));
    CHECK_THROWS_AS(load_dataset(dir / "missing"), Error);
}

TEST_CASE("average channels") {
    std::mt19937_64 rng(61);
    const CellChannelStack one = oracle::random_cells(rng, 32, 64);
    const CellChannelStack avg = average_positive_channels({one});
    for (int c = 0; c < kNumChannels; ++c) CHECK(avg.planes[c].data == one.planes[c].data);

    // a window and its mirror average to a symmetric stack
    const RgbImage img = oracle::random_scene(rng, 64, 128);
    const CellChannelStack a = aggregate_cells(compute_channels(img), 2);
    const CellChannelStack m = aggregate_cells(compute_channels(flip_horizontal(img)), 2);
    const CellChannelStack sym = average_positive_channels({a, m});
    for (int c = 0; c < kG + 1; ++c)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 16; ++x) CHECK(sym.planes[c].at(x, y) == doctest::Approx(sym.planes[c].at(31 - x, y)).epsilon(1e-5));

    try {
        average_positive_channels({});
        FAIL("expected EmptyInput");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyInput);
    }
}

TEST_CASE("average gradient of planted figures outlines the body") {
    const auto windows = planted_windows(30, 9);
    REQUIRE(windows.size() >= 40);
    const CellChannelStack avg = average_positive_channels(windows);
    const TernaryModel tm = build_ternary_model(avg.planes[kG]);
    double contour = 0.0, inner = 0.0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 32; ++x) {
            if (tm.at(x, y) == TernaryLabel::ContourBody) contour += avg.planes[kG].at(x, y);
            if (tm.at(x, y) == TernaryLabel::InnerBody) inner += avg.planes[kG].at(x, y);
        }
    contour /= tm.count(TernaryLabel::ContourBody);
    inner /= tm.count(TernaryLabel::InnerBody);
    CHECK(contour > 2.0 * inner);
    CHECK(tm.count(TernaryLabel::Background) + tm.count(TernaryLabel::ContourBody) + tm.count(TernaryLabel::InnerBody) ==
          32u * 64u);
    // inner cells sit between contour cells on their row
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 32; ++x)
            if (tm.at(x, y) == TernaryLabel::InnerBody) {
                bool left = false, right = false;
                for (int k = 0; k < x; ++k) left = left || tm.at(k, y) == TernaryLabel::ContourBody;
                for (int k = x + 1; k < 32; ++k) right = right || tm.at(k, y) == TernaryLabel::ContourBody;
                CHECK((left && right));
            }
}

TEST_CASE("ternary model construction") {
    // percentiles 2 and 6 of 0..9
    const TernaryModel tm = build_ternary_model(plane_from(10, 1, {3, 9, 1, 2, 8, 4, 5, 6, 7, 0}));
    using L = TernaryLabel;
    const std::vector<L> want = {L::Background, L::ContourBody, L::InnerBody,   L::InnerBody,   L::ContourBody,
                                 L::Background, L::Background,  L::ContourBody, L::ContourBody, L::Background};
    CHECK(tm.labels == want);

    // equal thresholds: contour is strictly above
    const TernaryModel tie = build_ternary_model(plane_from(10, 1, {5, 9, 1, 1, 9, 5, 5, 5, 5, 5}));
    CHECK(tie.at(1, 0) == L::ContourBody);
    CHECK(tie.at(2, 0) == L::InnerBody);
    CHECK(tie.at(5, 0) == L::Background);

    // rectangular ring
    Plane ring(12, 12, 0.5f);
    for (int y = 2; y < 10; ++y)
        for (int x = 2; x < 10; ++x) ring.at(x, y) = (x == 2 || x == 9 || y == 2 || y == 9) ? 3.f : 0.f;
    const TernaryModel r = build_ternary_model(ring);
    CHECK(r.at(2, 5) == L::ContourBody);
    CHECK(r.at(5, 2) == L::ContourBody);
    CHECK(r.at(5, 5) == L::InnerBody);
    CHECK(r.at(0, 0) == L::Background);
    CHECK(r.at(11, 5) == L::Background);

    const auto code = [](const Plane& p) {
        try {
            build_ternary_model(p);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::IoError;
    };
    CHECK(code(Plane(5, 5, 1.f)) == ErrorCode::DegeneratePlane);
    CHECK(code(plane_from(3, 1, {0, 1, 2})) == ErrorCode::DegeneratePlane); // no inner cell possible
}

TEST_CASE("SIDF classification") {
    using L = TernaryLabel;
    TernaryModel tm;
    tm.width = 32;
    tm.height = 64;
    tm.labels.assign(32 * 64, L::Background);
    for (int y = 0; y < 64; ++y)
        for (int x = 8; x < 24; ++x) tm.labels[static_cast<std::size_t>(y) * 32 + x] = (x < 11 || x > 20) ? L::ContourBody : L::InnerBody;

    FeatureDescriptor d;
    d.kind = FeatureKind::Sidf;
    d.a = {8, 10, 3, 4};  // contour
    d.b = {12, 10, 4, 4}; // inner
    CHECK(classify_sidf(d, tm) == SidfClass::CI);
    d.a = {0, 10, 4, 4};
    CHECK(classify_sidf(d, tm) == SidfClass::BP);
    d.b = {26, 10, 4, 4};
    CHECK(classify_sidf(d, tm) == SidfClass::O);
    d.a = {12, 10, 4, 4};
    d.b = {14, 10, 4, 4};
    CHECK(classify_sidf(d, tm) == SidfClass::O);

    // 2 background cells and 2 contour cells: the tie goes to contour because B adds contour cells
    d.a = {6, 0, 4, 1};
    d.b = {9, 0, 2, 1};
    CHECK(patch_label(d.a, d.b, tm) == L::ContourBody);
    d.b = {0, 0, 2, 1};
    CHECK(patch_label(d.a, d.b, tm) == L::Background);
    // equal own and combined counts go to the lower label
    CHECK(patch_label(d.a, Patch{12, 1, 1, 1}, tm) == L::Background);

    PoolConfig pc;
    pc.counts = {5, 0, 200, 0};
    const FeaturePool pool = gen_pool(pc);
    std::vector<std::uint32_t> all(pool.size());
    std::iota(all.begin(), all.end(), 0u);
    const SidfBreakdown br = analyze_sidf(pool, all, tm);
    CHECK(br.total() == 200);
    CHECK(br.percent(SidfClass::CI) + br.percent(SidfClass::BP) + br.percent(SidfClass::O) == doctest::Approx(100.0));
    CHECK(std::string(to_string(SidfClass::BP)) == "BP");
    CHECK_THROWS_AS(analyze_sidf(pool, {999}, tm), Error);
}

TEST_CASE("planted figures are more symmetric than background windows") {
    const ModelGeometry g;
    const auto scenes = gen_scenes(21, 40, SynthParams{});
    std::vector<CellChannelStack> pos, neg;
    Rng rng(5);
    for (const auto& s : scenes) {
        for (const auto& b : s.boxes) pos.push_back(window_channels(s.image, b, g));
        for (int k = 0; k < 4; ++k) {
            const double h = rng.uniform_real(56, 100), w = 0.4 * h, s_ = g.object_h / h;
            const double cx = rng.uniform_real(32 / s_, s.image.width - 32 / s_);
            const double y = rng.uniform_real(14 / s_, s.image.height - 114 / s_);
            const Box b{cx - w / 2, y, w, h};
            if (std::any_of(s.boxes.begin(), s.boxes.end(), [&](const Box& t) { return iou(t, b) > 0.1; })) continue;
            neg.push_back(window_channels(s.image, b, g));
        }
    }
    REQUIRE(pos.size() >= 50);
    REQUIRE(neg.size() >= 100);
    std::vector<IntegralStack> pi, ni;
    for (const auto& c : pos) pi.push_back(build_integrals(c));
    for (const auto& c : neg) ni.push_back(build_integrals(c));

    PoolConfig pc;
    pc.counts = {0, 0, 0, 500};
    pc.seed = 3;
    const FeaturePool pool = gen_pool(pc);
    int violations = 0;
    for (const auto& d : pool.descriptors) {
        double mp = 0.0, mn = 0.0;
        for (const auto& is : pi) mp += eval_ssf(is, d, {0, 0, 32, 64}, 32);
        for (const auto& is : ni) mn += eval_ssf(is, d, {0, 0, 32, 64}, 32);
        mp /= pi.size();
        mn /= ni.size();
        if (!(mp < mn)) {
            ++violations;
            MESSAGE("SSF ", d.channel, " A=(", d.a.x, ",", d.a.y, ",", d.a.w, ",", d.a.h, ") planted ", mp, " background ", mn);
        }
    }
    CHECK(violations == 0);
}
