#include "nnfdet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "nnfdet/error.hpp"
#include "nnfdet/parallel.hpp"
#include "nnfdet/random.hpp"

namespace nnfdet {

void compute_pool_features(const FeaturePool& pool, const NormConfig& norm, const IntegralStack& is, int wx, int wy,
                           float* out) {
    const NormStats ns = window_stats(is, CellRect{wx, wy, pool.template_w, pool.template_h});
    for (std::size_t i = 0; i < pool.descriptors.size(); ++i)
        out[i] = static_cast<float>(evaluate_unchecked(is, pool.descriptors[i], wx, wy, ns, pool.template_w, norm));
}

std::optional<WindowCrop> crop_object_window(const RgbImage& img, const Box& box, const ModelSetup& setup) {
    const ModelGeometry& g = setup.geometry;
    if (box.w <= 0.0 || box.h <= 0.0) return std::nullopt;
    const double s = g.object_h / box.h;
    // height fixes the scale; the box centre is aligned with the object box centre
    const double wx0 = box.x + 0.5 * box.w - (g.object_x + 0.5 * g.object_w) / s;
    const double wy0 = box.y - g.object_y / s;
    const double ww = g.template_w_px / s;
    const double wh = g.template_h_px / s;
    constexpr double kSlack = 0.5;
    if (wx0 < -kSlack || wy0 < -kSlack || wx0 + ww > img.width + kSlack || wy0 + wh > img.height + kSlack)
        return std::nullopt;

    // context so the gradient normalization sees real pixels around the window
    const double margin = 16.0 / s;
    const int x0 = std::max(0, static_cast<int>(std::floor(wx0 - margin)));
    const int y0 = std::max(0, static_cast<int>(std::floor(wy0 - margin)));
    const int x1 = std::min(img.width, static_cast<int>(std::ceil(wx0 + ww + margin)));
    const int y1 = std::min(img.height, static_cast<int>(std::ceil(wy0 + wh + margin)));
    RgbImage crop(x1 - x0, y1 - y0);
    for (int y = y0; y < y1; ++y)
        std::copy_n(img.at(x0, y), 3 * (x1 - x0), crop.at(0, y - y0));

    const int out_w = std::max(1, static_cast<int>(std::lround(crop.width * s)));
    const int out_h = std::max(1, static_cast<int>(std::lround(crop.height * s)));
    const double sx = static_cast<double>(out_w) / crop.width;
    const double sy = static_cast<double>(out_h) / crop.height;
    WindowCrop result;
    result.integrals = build_integrals(
        aggregate_cells(compute_channels(resample_bilinear(crop, out_w, out_h), setup.channels), g.cell_size));
    const int tw = g.cells_w(), th = g.cells_h();
    if (result.integrals.cell_w() < tw || result.integrals.cell_h() < th) return std::nullopt;
    result.wx = std::clamp(static_cast<int>(std::lround((wx0 - x0) * sx / g.cell_size)), 0, result.integrals.cell_w() - tw);
    result.wy = std::clamp(static_cast<int>(std::lround((wy0 - y0) * sy / g.cell_size)), 0, result.integrals.cell_h() - th);
    return result;
}

std::optional<std::vector<float>> positive_features(const RgbImage& img, const Box& box, const ModelSetup& setup) {
    const auto crop = crop_object_window(img, box, setup);
    if (!crop) return std::nullopt;
    std::vector<float> values(setup.pool.size());
    compute_pool_features(setup.pool, setup.norm, crop->integrals, crop->wx, crop->wy, values.data());
    return values;
}

std::array<int, kNumFeatureKinds> selected_by_kind(const BoostedModel& model) {
    std::array<int, kNumFeatureKinds> counts{};
    for (const auto& tree : model.trees)
        for (const auto& n : tree.nodes)
            if (!n.is_leaf())
                ++counts[static_cast<int>(model.pool.descriptors[static_cast<std::size_t>(n.feature)].kind)];
    return counts;
}

void write_trace_csv(std::ostream& out, const std::vector<RoundTrace>& trace) {
    out << "round,trees,n_pos,n_neg,train_error,mined,wall_seconds,fp_per_image,"
           "selected_local_mean,selected_neighbor_diff,selected_sidf,selected_ssf\n";
    for (const auto& r : trace) {
        out << r.round << ',' << r.trees << ',' << r.n_pos << ',' << r.n_neg << ',' << r.train_error << ','
            << r.mined << ',' << r.wall_seconds << ',' << r.fp_per_image;
        for (int c : r.selected) out << ',' << c;
        out << '\n';
    }
}

namespace {

using Clock = std::chrono::steady_clock;

struct NegativeSample {
    double score = 0.0;
    std::vector<float> features;
};

bool excluded(const Box& box, const std::vector<Box>& regions, double max_iou) {
    return std::any_of(regions.begin(), regions.end(), [&](const Box& r) { return iou(box, r) > max_iou; });
}

Box jittered(const Box& b, const ModelGeometry& g, const DetectParams& scan, Rng& rng) {
    // one level pixel at the scale where the box matches the template
    const double px = b.h / g.object_h;
    const double half_step = 0.5 / scan.pyramid.scales_per_octave;
    const double f = std::exp2(rng.uniform_real(-half_step, half_step));
    const double cx = b.x + b.w / 2 + rng.uniform_real(-0.5, 0.5) * scan.stride_px * px;
    const double cy = b.y + b.h / 2 + rng.uniform_real(-0.5, 0.5) * scan.stride_px * px;
    return {cx - b.w * f / 2, cy - b.h * f / 2, b.w * f, b.h * f};
}

} // namespace

std::vector<std::vector<float>> collect_positive_features(const std::vector<LabeledImage>& positives,
                                                          const ModelSetup& setup, const TrainConfig& cfg) {
    std::vector<std::vector<std::vector<float>>> per_image(positives.size());
    parallel_for(positives.size(), cfg.jobs, [&](std::size_t i) {
        const LabeledImage& li = positives[i];
        Rng rng(derive_seed(cfg.seed, 0x2000 + i));
        const auto add = [&](const RgbImage& img, const Box& b) {
            if (auto f = positive_features(img, b, setup)) per_image[i].push_back(std::move(*f));
            for (int j = 0; j < cfg.positive_jitter; ++j)
                if (auto f = positive_features(img, jittered(b, setup.geometry, cfg.detect, rng), setup))
                    per_image[i].push_back(std::move(*f));
        };
        for (const Box& b : li.boxes) add(li.image, b);
        if (cfg.mirror_positives && !li.boxes.empty()) {
            const RgbImage flipped = flip_horizontal(li.image);
            for (const Box& b : li.boxes) add(flipped, Box{li.image.width - b.x - b.w, b.y, b.w, b.h});
        }
    });
    std::vector<std::vector<float>> out;
    for (auto& list : per_image)
        for (auto& f : list) out.push_back(std::move(f));
    return out;
}

std::vector<std::vector<float>> sample_negative_features(const std::vector<LabeledImage>& negatives,
                                                         const ModelSetup& setup, const TrainConfig& cfg) {
    if (cfg.initial_negatives <= 0 || negatives.empty()) return {};
    const std::size_t per_image =
        (static_cast<std::size_t>(cfg.initial_negatives) + negatives.size() - 1) / negatives.size();
    const int step = std::max(1, cfg.detect.stride_px / setup.geometry.cell_size);
    const int tw = setup.pool.template_w, th = setup.pool.template_h;

    std::vector<std::vector<std::vector<float>>> per(negatives.size());
    parallel_for(negatives.size(), cfg.jobs, [&](std::size_t i) {
        const LabeledImage& li = negatives[i];
        const auto levels = build_pyramid(li.image, setup.geometry, setup.channels, cfg.detect.pyramid);
        std::vector<std::size_t> counts;
        std::size_t total = 0;
        for (const auto& lv : levels) {
            counts.push_back(window_count(lv.integrals.cell_w(), lv.integrals.cell_h(), tw, th, step));
            total += counts.back();
        }
        if (total == 0) return;
        Rng rng(derive_seed(cfg.seed, 0x1000 + i));
        const std::size_t attempts = per_image * 20;
        for (std::size_t a = 0; a < attempts && per[i].size() < per_image; ++a) {
            auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
            std::size_t level = 0;
            while (pick >= counts[level]) pick -= counts[level++];
            const auto& lv = levels[level];
            const int cols = (lv.integrals.cell_w() - tw) / step + 1;
            const int cx = static_cast<int>(pick % static_cast<std::size_t>(cols)) * step;
            const int cy = static_cast<int>(pick / static_cast<std::size_t>(cols)) * step;
            if (excluded(window_box(lv, setup.geometry, cx, cy), li.boxes, cfg.exclusion_iou)) continue;
            std::vector<float> f(setup.pool.size());
            compute_pool_features(setup.pool, setup.norm, lv.integrals, cx, cy, f.data());
            per[i].push_back(std::move(f));
        }
    });
    std::vector<std::vector<float>> out;
    for (auto& list : per)
        for (auto& f : list) {
            if (out.size() >= static_cast<std::size_t>(cfg.initial_negatives)) break;
            out.push_back(std::move(f));
        }
    return out;
}

namespace {

struct MiningResult {
    std::vector<NegativeSample> harvested; // score-descending within each image
    double fp_per_image = 0.0;
};

MiningResult mine(const BoostedModel& model, const std::vector<LabeledImage>& negatives, const TrainConfig& cfg,
                  bool harvest) {
    struct Candidate {
        std::size_t level;
        int cx, cy;
    };
    std::vector<std::vector<NegativeSample>> per(negatives.size());
    std::vector<std::size_t> fps(negatives.size(), 0);
    const int step = cfg.detect.stride_px / model.geometry.cell_size;
    const int tw = model.pool.template_w, th = model.pool.template_h;
    parallel_for(negatives.size(), cfg.jobs, [&](std::size_t i) {
        const LabeledImage& li = negatives[i];
        const auto levels = build_pyramid(li.image, model.geometry, model.channels, cfg.detect.pyramid);
        std::vector<Candidate> cands;
        std::vector<Box> boxes;
        std::vector<double> scores;
        for (std::size_t l = 0; l < levels.size(); ++l) {
            const IntegralStack& is = levels[l].integrals;
            for (int cy = 0; cy + th <= is.cell_h(); cy += step) {
                for (int cx = 0; cx + tw <= is.cell_w(); cx += step) {
                    const WindowScore ws = score_window_unchecked(model, is, cx, cy);
                    if (ws.rejected_at) continue;
                    const Box box = window_box(levels[l], model.geometry, cx, cy);
                    if (excluded(box, li.boxes, cfg.exclusion_iou)) continue;
                    cands.push_back({l, cx, cy});
                    boxes.push_back(box);
                    scores.push_back(ws.score);
                }
            }
        }
        const auto kept = nms_indices(boxes, scores, cfg.detect.nms_overlap);
        fps[i] = static_cast<std::size_t>(std::count_if(
            kept.begin(), kept.end(), [&](std::size_t k) { return scores[k] >= cfg.detect.threshold; }));
        if (!harvest) return;
        const std::size_t cap = std::min<std::size_t>(kept.size(), static_cast<std::size_t>(cfg.mining_per_image));
        for (std::size_t j = 0; j < cap; ++j) {
            const Candidate& c = cands[kept[j]];
            NegativeSample ns;
            ns.score = scores[kept[j]];
            ns.features.resize(model.pool.size());
            compute_pool_features(model.pool, model.norm, levels[c.level].integrals, c.cx, c.cy, ns.features.data());
            per[i].push_back(std::move(ns));
        }
    });
    MiningResult result;
    std::size_t total_fp = 0;
    for (std::size_t i = 0; i < negatives.size(); ++i) {
        total_fp += fps[i];
        for (auto& s : per[i]) result.harvested.push_back(std::move(s));
    }
    result.fp_per_image = negatives.empty() ? 0.0 : static_cast<double>(total_fp) / negatives.size();
    return result;
}

FeatureMatrix assemble(const std::vector<std::vector<float>>& pos, const std::vector<NegativeSample>& neg,
                       std::size_t n_features, std::vector<std::int8_t>& labels) {
    FeatureMatrix m(pos.size() + neg.size(), n_features);
    labels.assign(m.n_samples, -1);
    std::size_t r = 0;
    for (const auto& f : pos) {
        std::copy(f.begin(), f.end(), m.row(r));
        labels[r++] = 1;
    }
    for (const auto& n : neg) std::copy(n.features.begin(), n.features.end(), m.row(r++));
    return m;
}

} // namespace

TrainResult train_with_mining(const std::vector<LabeledImage>& positives, const std::vector<LabeledImage>& negatives,
                              const ModelSetup& setup, const TrainConfig& cfg) {
    if (cfg.rounds.empty()) fail(ErrorCode::InvalidArgument, "at least one training round is required");
    for (std::size_t r = 1; r < cfg.rounds.size(); ++r)
        if (cfg.rounds[r] <= cfg.rounds[r - 1]) fail(ErrorCode::InvalidArgument, "rounds must be strictly increasing");
    if (setup.pool.size() == 0) fail(ErrorCode::InvalidArgument, "empty feature pool");
    if (setup.pool.template_w != setup.geometry.cells_w() || setup.pool.template_h != setup.geometry.cells_h())
        fail(ErrorCode::InvalidArgument, "pool template does not match model geometry");
    if (positives.empty()) fail(ErrorCode::InsufficientData, "no positive images");
    if (negatives.empty()) fail(ErrorCode::InsufficientData, "no negative images");

    auto round_start = Clock::now();
    const auto pos = collect_positive_features(positives, setup, cfg);
    if (pos.empty()) fail(ErrorCode::InsufficientData, "no positive window fits inside its image");
    // the cap bounds the negative set from the start
    TrainConfig initial = cfg;
    initial.initial_negatives = std::min(cfg.initial_negatives, cfg.negative_cap);
    std::vector<NegativeSample> neg;
    for (auto& f : sample_negative_features(negatives, setup, initial)) neg.push_back({0.0, std::move(f)});
    if (neg.empty()) fail(ErrorCode::InsufficientData, "could not sample any negative window");

    TrainResult result;
    BoostedModel& model = result.model;
    model.geometry = setup.geometry;
    model.channels = setup.channels;
    model.norm = setup.norm;
    model.pool = setup.pool;

    for (std::size_t r = 0; r < cfg.rounds.size(); ++r) {
        std::vector<std::int8_t> labels;
        const FeatureMatrix matrix = assemble(pos, neg, setup.pool.size(), labels);
        BoostConfig bc;
        bc.n_trees = cfg.rounds[r];
        bc.depth = cfg.tree_depth;
        bc.feature_fraction = cfg.feature_fraction;
        bc.seed = derive_seed(cfg.seed, r);
        BoostResult br = boost(quantize(matrix), labels, bc);
        model.trees = std::move(br.trees);

        std::vector<std::vector<double>> running(pos.size(), std::vector<double>(model.trees.size()));
        for (std::size_t p = 0; p < pos.size(); ++p) {
            double acc = 0.0;
            for (std::size_t t = 0; t < model.trees.size(); ++t) {
                acc += model.trees[t].evaluate_row(pos[p].data());
                running[p][t] = acc;
            }
        }
        model.cascade = set_cascade(running, cfg.cascade);

        RoundTrace tr;
        tr.round = static_cast<int>(r);
        tr.trees = static_cast<int>(model.trees.size());
        tr.n_pos = pos.size();
        tr.n_neg = neg.size();
        tr.train_error = br.trace.train_error.back();
        tr.selected = selected_by_kind(model);
        tr.fp_per_image = std::numeric_limits<double>::quiet_NaN();

        const bool last = r + 1 == cfg.rounds.size();
        if (!last || cfg.measure_final_fp) {
            MiningResult mined = mine(model, negatives, cfg, !last);
            tr.fp_per_image = mined.fp_per_image;
            if (!last) {
                std::stable_sort(mined.harvested.begin(), mined.harvested.end(),
                                 [](const NegativeSample& a, const NegativeSample& b) { return a.score > b.score; });
                if (mined.harvested.size() > static_cast<std::size_t>(cfg.negatives_per_round))
                    mined.harvested.resize(static_cast<std::size_t>(cfg.negatives_per_round));
                tr.mined = mined.harvested.size();
                for (auto& n : neg) n.score = score_features(model, n.features);
                for (auto& m : mined.harvested) neg.push_back(std::move(m));
                if (neg.size() > static_cast<std::size_t>(cfg.negative_cap)) {
                    std::stable_sort(neg.begin(), neg.end(),
                                     [](const NegativeSample& a, const NegativeSample& b) { return a.score > b.score; });
                    neg.resize(static_cast<std::size_t>(cfg.negative_cap));
                }
            }
        }
        const auto now = Clock::now();
        tr.wall_seconds = std::chrono::duration<double>(now - round_start).count();
        round_start = now;
        result.trace.push_back(tr);
    }
    return result;
}

} // namespace nnfdet
