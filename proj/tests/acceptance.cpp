// Acceptance checks. `acceptance N` runs criterion N, no argument runs all.
// Each criterion prints one line: "criterion N PASS|FAIL <name>: <detail>".

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "nnfdet/config.hpp"
#include "nnfdet/model_io.hpp"
#include "nnfdet/parallel.hpp"
#include "nnfdet/random.hpp"
#include "nnfdet/synthlab.hpp"
#include "nnfdet/trainer.hpp"
#include "oracle.hpp"

using namespace nnfdet;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

PoolConfig mixed_pool(int per_kind, std::uint64_t seed) {
    PoolConfig c;
    c.counts = {per_kind, per_kind, per_kind, per_kind};
    c.seed = seed;
    return c;
}

CellChannelStack mirror_cells(const CellChannelStack& cs) {
    CellChannelStack out = cs;
    for (int c = 0; c < kNumChannels; ++c) {
        const int src = c >= kO1 ? kO1 + (kNumOrientations - (c - kO1)) % kNumOrientations : c;
        for (int y = 0; y < cs.cell_h; ++y)
            for (int x = 0; x < cs.cell_w; ++x) out.planes[c].at(cs.cell_w - 1 - x, y) = cs.planes[src].at(x, y);
    }
    return out;
}

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome feature_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    const FeaturePool pool = gen_pool(mixed_pool(250, 1002));
    const CellRect win{0, 0, 32, 64};
    double worst = 0.0;
    std::size_t bad = 0;
    for (int s = 0; s < 20; ++s) {
        const CellChannelStack cells = oracle::random_cells(rng, 32, 64);
        const IntegralStack is = build_integrals(cells);
        const NormStats ns = window_stats(is, win);
        for (const auto& d : pool.descriptors) {
            const double err = std::abs(eval_descriptor(is, d, win, ns, 32) - oracle::feature(cells, d, win));
            worst = std::max(worst, err);
            bad += !(err <= 1e-5);
        }
    }
    const double secs = seconds_since(t0);
    return {bad == 0 && secs < 60.0,
            fmt("20 stacks x %zu descriptors, max abs error %.3g, %zu over 1e-5, %.1f s", pool.size(), worst, bad, secs)};
}

Outcome flip_equivariance() {
    std::mt19937_64 rng(2001);
    const FeaturePool pool = gen_pool(mixed_pool(125, 2002));
    const CellRect win{0, 0, 32, 64};
    std::size_t violations = 0, checks = 0;
    double worst = 0.0;
    auto compare = [&](const IntegralStack& a, const IntegralStack& b) {
        const NormStats na = window_stats(a, win), nb = window_stats(b, win);
        for (const auto& d : pool.descriptors) {
            const FeatureDescriptor m = mirror_descriptor(d, 32);
            const double orig = eval_descriptor(a, d, win, na, 32);
            const double err = std::abs(orig - eval_descriptor(b, m, win, nb, 32));
            worst = std::max(worst, err);
            violations += !(err <= 1e-5);
            // SSF: same descriptor, same value on the mirrored input
            if (d.kind == FeatureKind::Ssf) violations += !(m == d) || !(std::abs(orig - eval_descriptor(b, d, win, nb, 32)) <= 1e-5);
            ++checks;
        }
    };
    for (int s = 0; s < 5; ++s) {
        const CellChannelStack cells = oracle::random_cells(rng, 32, 64);
        compare(build_integrals(cells), build_integrals(mirror_cells(cells)));
    }
    for (int s = 0; s < 5; ++s) {
        const ChannelStack ch = compute_channels(oracle::random_scene(rng, 64, 128));
        compare(build_integrals(aggregate_cells(ch, 2)), build_integrals(aggregate_cells(mirror_channels(ch), 2)));
    }
    return {violations == 0, fmt("%zu descriptors, %zu evaluations, max abs error %.3g, %zu violations", pool.size(), checks,
                                 worst, violations)};
}

Outcome pool_constraints() {
    const FeaturePool pool = gen_pool(mixed_pool(2500, 3001));
    const GeometryLimits lim;
    std::size_t violations = 0;
    std::string first;
    for (const auto& d : pool.descriptors)
        if (const auto p = check_descriptor(d, lim)) {
            if (!violations) first = *p;
            ++violations;
        }
    return {pool.size() == 10000 && violations == 0,
            fmt("%zu descriptors, %zu violations%s%s", pool.size(), violations, violations ? ", first: " : "", first.c_str())};
}

Outcome boosting_sanity() {
    struct Toy {
        FeatureMatrix x;
        std::vector<std::int8_t> y;
    };
    std::mt19937_64 rng(4001);
    std::normal_distribution<double> g(0.0, 0.5);
    Toy blobs{FeatureMatrix(200, 2), {}};
    for (std::size_t i = 0; i < 200; ++i) {
        const double c = i % 2 ? -3.0 : 3.0;
        blobs.x.row(i)[0] = static_cast<float>(c + g(rng));
        blobs.x.row(i)[1] = static_cast<float>(c + g(rng));
        blobs.y.push_back(i % 2 ? -1 : 1);
    }
    Toy xr{FeatureMatrix(4, 2), {1, 1, -1, -1}};
    const float pts[4][2] = {{0, 1}, {1, 0}, {0, 0}, {1, 1}};
    for (std::size_t i = 0; i < 4; ++i) {
        xr.x.row(i)[0] = pts[i][0];
        xr.x.row(i)[1] = pts[i][1];
    }
    bool ok = true;
    std::string detail;
    for (const auto* t : {&blobs, &xr}) {
        BoostConfig cfg;
        cfg.n_trees = 32;
        cfg.depth = 2;
        const BoostResult r = boost(quantize(t->x), t->y, cfg);
        int wrong = 0;
        for (std::size_t i = 0; i < t->x.n_samples; ++i) {
            double s = 0.0;
            for (const auto& tree : r.trees) s += tree.evaluate_row(t->x.row(i));
            wrong += (s > 0.0) != (t->y[i] > 0);
        }
        const double werr = *std::max_element(r.trace.weight_sum_error.begin(), r.trace.weight_sum_error.end());
        ok = ok && r.trees.size() == 32 && wrong == 0 && werr < 1e-9 && r.trace.weight_sum_error.size() == 32;
        detail += fmt("%s%s: %d errors, max weight error %.2g", detail.empty() ? "" : "; ", t == &blobs ? "blobs" : "xor",
                      wrong, werr);
    }
    return {ok, detail};
}

RunConfig desk_config(const std::string& preset, std::uint64_t seed) {
    RunConfig rc = preset_config(preset);
    rc.seed = seed;
    rc.jobs = default_jobs();
    apply_setting(rc, "pool.local_mean", "600");
    apply_setting(rc, "pool.neighbor_diff", "1800");
    if (rc.pool.counts[2] > 0) apply_setting(rc, "pool.sidf", "700");
    if (rc.pool.counts[3] > 0) apply_setting(rc, "pool.ssf", "400");
    apply_setting(rc, "train.rounds", "8,32,128");
    apply_setting(rc, "train.feature_fraction", "1/8");
    apply_setting(rc, "train.initial_negatives", "3000");
    apply_setting(rc, "train.negatives_per_round", "1500");
    apply_setting(rc, "train.negative_cap", "5000");
    return rc;
}

Outcome cascade_consistency() {
    // part 1: random forest, thresholds at -inf
    std::mt19937_64 rng(5001);
    BoostedModel model;
    model.pool = gen_pool(mixed_pool(100, 5002));
    const auto n_feat = static_cast<int>(model.pool.size());
    std::normal_distribution<float> thr(0.f, 1.f);
    std::uniform_real_distribution<float> leaf(-1.f, 1.f);
    std::uniform_int_distribution<int> pick(0, n_feat - 1);
    for (int t = 0; t < 64; ++t) {
        DecisionTree tree;
        tree.depth = 2;
        tree.nodes.resize(7);
        for (int n = 0; n < 3; ++n) {
            tree.nodes[n].feature = pick(rng);
            tree.nodes[n].threshold = thr(rng);
        }
        for (int n = 3; n < 7; ++n) tree.nodes[n].score = leaf(rng);
        model.trees.push_back(tree);
    }
    model.disable_cascade();
    std::vector<std::uint32_t> all(model.pool.size());
    std::iota(all.begin(), all.end(), 0u);
    std::size_t windows = 0, mismatch = 0;
    while (windows < 10000) {
        const CellChannelStack cells = oracle::random_cells(rng, 80, 120);
        const IntegralStack is = build_integrals(cells);
        for (int wy = 0; wy + 64 <= 120 && windows < 10000; wy += 2)
            for (int wx = 0; wx + 32 <= 80 && windows < 10000; wx += 2, ++windows) {
                const CellRect win{wx, wy, 32, 64};
                const WindowScore s = score_window(model, is, win);
                const auto values = eval_window(is, model.pool, all, win, model.norm);
                mismatch += s.rejected_at.has_value() || s.score != score_features(model, values);
            }
    }

    // part 2: calibrated thresholds of a trained model against its positives
    RunConfig rc = desk_config("nnnf-l2", 5003);
    rc.pool.counts = {150, 450, 175, 100};
    rc.train.rounds = {8, 32};
    rc.train.initial_negatives = 1000;
    rc.train.negatives_per_round = 500;
    const auto images = to_labeled(gen_scenes(5004, 30, SynthParams{}, 0, rc.jobs));
    const ModelSetup setup = make_setup(rc);
    const TrainConfig tc = effective_train_config(rc);
    const TrainResult tr = train_with_mining(images, images, setup, tc);
    const BoostedModel& m = tr.model;
    const auto pos = collect_positive_features(images, setup, tc);
    std::vector<std::vector<double>> running(pos.size(), std::vector<double>(m.trees.size()));
    for (std::size_t p = 0; p < pos.size(); ++p) {
        double acc = 0.0;
        for (std::size_t t = 0; t < m.trees.size(); ++t) running[p][t] = acc += m.trees[t].evaluate_row(pos[p].data());
    }
    const auto kept = retained_positives(running, tc.cascade);
    std::size_t n_kept = 0, rejected = 0;
    for (std::size_t p = 0; p < pos.size(); ++p) {
        if (!kept[p]) continue;
        ++n_kept;
        for (std::size_t t = 0; t < m.trees.size(); ++t)
            if (running[p][t] < m.cascade[t]) {
                ++rejected;
                break;
            }
    }
    // the same positives scored through the window path
    std::size_t scanned = 0, scan_rejected = 0;
    for (const auto& li : images)
        for (const auto& b : li.boxes) {
            const auto crop = crop_object_window(li.image, b, setup);
            if (!crop) continue;
            std::vector<float> values(m.pool.size());
            compute_pool_features(m.pool, m.norm, crop->integrals, crop->wx, crop->wy, values.data());
            bool below = false;
            double acc = 0.0;
            for (std::size_t t = 0; t < m.trees.size() && !below; ++t) {
                acc += m.trees[t].evaluate_row(values.data());
                below = acc < m.cascade[t];
            }
            const WindowScore s = score_window_unchecked(m, crop->integrals, crop->wx, crop->wy);
            ++scanned;
            scan_rejected += s.rejected_at.has_value() != below;
        }
    const bool calibrated = m.cascade == set_cascade(running, tc.cascade);
    return {mismatch == 0 && rejected == 0 && n_kept > 0 && calibrated && scan_rejected == 0,
            fmt("%zu windows, %zu score mismatches; %zu/%zu positives retained, %zu of them rejected; thresholds %s; %zu "
                "window-path disagreements over %zu boxes",
                windows, mismatch, n_kept, pos.size(), rejected, calibrated ? "recomputed exactly" : "differ",
                scan_rejected, scanned)};
}

struct AblationRun {
    double lamr = 1.0;
    std::array<int, kNumFeatureKinds> used{};
    double seconds = 0.0;
};

AblationRun run_ablation(const std::string& preset, const std::vector<LabeledImage>& train,
                         const std::vector<LabeledImage>& test) {
    const auto t0 = Clock::now();
    const RunConfig rc = desk_config(preset, 7);
    const TrainResult tr = train_with_mining(train, train, make_setup(rc), effective_train_config(rc));
    AblationRun out;
    for (auto f : used_features(tr.model.trees)) ++out.used[static_cast<std::size_t>(tr.model.pool.descriptors[f].kind)];
    std::vector<ScoredDetection> dets;
    std::vector<GroundTruthBox> gts;
    std::vector<std::string> ids;
    DetectParams dp = rc.train.detect;
    dp.threshold = -std::numeric_limits<double>::infinity();
    dp.jobs = rc.jobs;
    for (const auto& li : test) {
        ids.push_back(li.id);
        for (const auto& b : li.boxes) gts.push_back({li.id, b});
        for (const auto& d : detect(tr.model, li.image, dp)) dets.push_back({li.id, d.box, d.score});
    }
    out.lamr = roc(dets, gts, ids).lamr;
    out.seconds = seconds_since(t0);
    return out;
}

Outcome desk_ablation() {
    const auto t0 = Clock::now();
    const int jobs = default_jobs();
    const auto train = to_labeled(gen_scenes(7, 200, SynthParams{}, 0, jobs), "train");
    const auto test = to_labeled(gen_scenes(7, 100, SynthParams{}, 200, jobs), "test");
    const AblationRun nnnf = run_ablation("nnnf-l2", train, test);
    const AblationRun nf = run_ablation("nf-only", train, test);
    const int used = std::accumulate(nnnf.used.begin(), nnnf.used.end(), 0);
    const int non_neighboring = nnnf.used[static_cast<std::size_t>(FeatureKind::Sidf)] +
                                nnnf.used[static_cast<std::size_t>(FeatureKind::Ssf)];
    const double share = used ? static_cast<double>(non_neighboring) / used : 0.0;
    const double secs = seconds_since(t0);
    return {nnnf.lamr <= nf.lamr && share >= 0.10 && secs < 900.0,
            fmt("LAMR nnnf %.4f (%.0f s), nf-only %.4f (%.0f s); non-neighboring %d of %d used (%.1f%%: SIDF %d, SSF %d); "
                "total %.0f s",
                nnnf.lamr, nnnf.seconds, nf.lamr, nf.seconds, non_neighboring, used, 100.0 * share,
                nnnf.used[static_cast<std::size_t>(FeatureKind::Sidf)], nnnf.used[static_cast<std::size_t>(FeatureKind::Ssf)],
                secs)};
}

Outcome eval_oracle() {
    const std::vector<GroundTruthBox> gts = {{"img1", {10, 10, 40, 100}}, {"img1", {200, 20, 40, 100}},
                                             {"img2", {50, 50, 30, 80}},   {"img3", {100, 100, 50, 120}}};
    const std::vector<ScoredDetection> dets = {
        {"img1", {12, 11, 40, 100}, 0.9},  {"img2", {300, 300, 30, 80}, 0.8}, {"img2", {51, 49, 30, 80}, 0.7},
        {"img3", {0, 0, 50, 120}, 0.6},    {"img1", {400, 10, 40, 100}, 0.5}, {"img3", {100, 102, 50, 120}, 0.4}};
    // geometric mean of the miss rates at nine log-spaced FPPI values, worked out by hand
    constexpr double expected = 0.6345737386557408;
    const double lamr = roc(dets, gts).lamr;
    std::vector<ScoredDetection> perfect;
    for (const auto& g : gts) perfect.push_back({g.image, g.box, 1.0});
    const double floor = roc(perfect, gts).lamr;
    const double empty = roc(std::vector<ScoredDetection>{}, gts).lamr;
    return {std::abs(lamr - expected) < 1e-6 && std::abs(floor - kMissRateFloor) < 1e-12 && empty == 1.0,
            fmt("lamr %.16g (expected %.16g), perfect %.3g, empty %.3g", lamr, expected, floor, empty)};
}

Outcome determinism() {
    RunConfig rc = desk_config("nnnf-l2", 8001);
    rc.pool.counts = {200, 600, 240, 140};
    rc.train.rounds = {8, 32};
    rc.train.initial_negatives = 1000;
    rc.train.negatives_per_round = 500;
    const auto images = to_labeled(gen_scenes(8002, 40, SynthParams{}, 0, rc.jobs));
    const auto dir = oracle::temp_dir("acceptance_determinism");
    for (const char* name : {"a.json", "b.json"})
        save_model(dir / name, train_with_mining(images, images, make_setup(rc), effective_train_config(rc)).model);
    const std::string a = read_text_file(dir / "a.json"), b = read_text_file(dir / "b.json");
    return {a == b && !a.empty(), fmt("model files of %zu and %zu bytes, %s", a.size(), b.size(), a == b ? "identical" : "differ")};
}

Outcome nms_and_matching() {
    std::mt19937_64 rng(9001);
    std::uniform_real_distribution<double> pos(0.0, 600.0), size(20.0, 120.0), jitter(-8.0, 8.0);
    std::uniform_int_distribution<int> score(0, 200);
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < 1000; ++i) {
        if (i % 3 && !boxes.empty()) {
            const Box& b = boxes[static_cast<std::size_t>(score(rng)) % boxes.size()];
            boxes.push_back({b.x + jitter(rng), b.y + jitter(rng), b.w + jitter(rng), b.h + jitter(rng)});
        } else {
            boxes.push_back({pos(rng), pos(rng), size(rng), size(rng)});
        }
        scores.push_back(score(rng) / 200.0); // coarse scores force ties
    }
    const bool nms_ok = nms_indices(boxes, scores, 0.65) == oracle::nms(boxes, scores, 0.65);

    std::vector<GroundTruthBox> gts;
    std::bernoulli_distribution ign(0.1);
    for (int i = 0; i < 300; ++i) {
        const Box& b = boxes[static_cast<std::size_t>(i) * 3];
        gts.push_back({"", {b.x + jitter(rng), b.y + jitter(rng), b.w, b.h}, ign(rng)});
    }
    const auto got = match_detections(boxes, scores, gts, 0.5).detections;
    const auto want = oracle::match(boxes, scores, gts, 0.5);
    const auto tp = std::count(want.begin(), want.end(), MatchOutcome::TruePositive);
    return {nms_ok && got == want,
            fmt("1000 boxes: nms %s, matching %s (%td true positives)", nms_ok ? "equal" : "differs",
                got == want ? "equal" : "differs", tp)};
}

struct Criterion {
    const char* name;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {"feature oracle equivalence", feature_oracle},
        {"flip equivariance", flip_equivariance},
        {"pool constraints", pool_constraints},
        {"boosting sanity", boosting_sanity},
        {"cascade consistency", cascade_consistency},
        {"desk-scale ablation", desk_ablation},
        {"evaluation oracle", eval_oracle},
        {"determinism", determinism},
        {"NMS and matching", nms_and_matching},
    };
    std::vector<std::size_t> which;
    if (argc > 1) {
        const int n = std::atoi(argv[1]);
        if (n < 1 || n > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "usage: acceptance [1-%zu]\n", criteria.size());
            return 2;
        }
        which.push_back(static_cast<std::size_t>(n - 1));
    } else {
        which.resize(criteria.size());
        std::iota(which.begin(), which.end(), std::size_t{0});
    }
    bool all = true;
    for (std::size_t i : which) {
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %zu %s %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].name, o.detail.c_str());
        std::fflush(stdout);
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
