#include "nnfdet/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nnfdet/error.hpp"
#include "nnfdet/parallel.hpp"

namespace nnfdet {

double intersection_area(const Box& a, const Box& b) {
    const double w = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const double h = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    return w > 0.0 && h > 0.0 ? w * h : 0.0;
}

double iou(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    if (inter <= 0.0) return 0.0;
    return inter / (a.area() + b.area() - inter);
}

std::vector<double> pyramid_scales(int img_w, int img_h, int template_w_px, int template_h_px,
                                   const PyramidParams& params) {
    if (params.scales_per_octave < 1) fail(ErrorCode::InvalidArgument, "scales_per_octave must be >= 1");
    if (params.octaves_up < 0) fail(ErrorCode::InvalidArgument, "octaves_up must be >= 0");
    std::vector<double> scales;
    for (int k = params.octaves_up * params.scales_per_octave;; --k) {
        const double s = std::exp2(static_cast<double>(k) / params.scales_per_octave);
        if (img_w * s < template_w_px || img_h * s < template_h_px) break;
        scales.push_back(s);
    }
    if (scales.empty())
        fail(ErrorCode::ImageTooSmall, "image " + std::to_string(img_w) + "x" + std::to_string(img_h) +
                                           " cannot contain the template at any pyramid scale");
    return scales;
}

PyramidLevel build_level(const RgbImage& img, double scale, const ChannelParams& channels, int cell_size) {
    PyramidLevel level;
    level.scale = scale;
    level.width = std::max(1, static_cast<int>(std::lround(img.width * scale)));
    level.height = std::max(1, static_cast<int>(std::lround(img.height * scale)));
    level.scale_x = static_cast<double>(level.width) / img.width;
    level.scale_y = static_cast<double>(level.height) / img.height;
    const RgbImage resized = resample_bilinear(img, level.width, level.height);
    level.integrals = build_integrals(aggregate_cells(compute_channels(resized, channels), cell_size));
    return level;
}

std::vector<PyramidLevel> build_pyramid(const RgbImage& img, const ModelGeometry& geometry,
                                        const ChannelParams& channels, const PyramidParams& params, int jobs) {
    const auto scales = pyramid_scales(img.width, img.height, geometry.template_w_px, geometry.template_h_px, params);
    std::vector<PyramidLevel> levels(scales.size());
    parallel_for(scales.size(), jobs,
                 [&](std::size_t i) { levels[i] = build_level(img, scales[i], channels, geometry.cell_size); });
    return levels;
}

Box window_box(const PyramidLevel& level, const ModelGeometry& g, int cx, int cy) {
    return {(cx * g.cell_size + g.object_x) / level.scale_x, (cy * g.cell_size + g.object_y) / level.scale_y,
            g.object_w / level.scale_x, g.object_h / level.scale_y};
}

std::size_t window_count(int cells_w, int cells_h, int tw, int th, int stride) {
    if (cells_w < tw || cells_h < th) return 0;
    return static_cast<std::size_t>((cells_w - tw) / stride + 1) * static_cast<std::size_t>((cells_h - th) / stride + 1);
}

namespace {

int stride_cells(int stride_px, int cell_size) {
    if (stride_px < cell_size || stride_px % cell_size != 0)
        fail(ErrorCode::InvalidArgument, "stride must be a positive multiple of the cell size");
    return stride_px / cell_size;
}

void check_model(const BoostedModel& model) {
    if (model.pool.template_w != model.geometry.cells_w() || model.pool.template_h != model.geometry.cells_h())
        fail(ErrorCode::InvalidArgument, "model pool template does not match its geometry");
    if (model.cascade.size() != model.trees.size())
        fail(ErrorCode::InvalidArgument, "cascade threshold count must equal tree count");
}

} // namespace

std::vector<Detection> scan_level(const BoostedModel& model, const PyramidLevel& level, int stride_px,
                                  double threshold, ScanStats* stats) {
    const int step = stride_cells(stride_px, model.geometry.cell_size);
    const int tw = model.pool.template_w, th = model.pool.template_h;
    const IntegralStack& is = level.integrals;
    std::vector<Detection> out;
    if (stats && stats->rejection_depth.size() != model.trees.size() + 1)
        stats->rejection_depth.assign(model.trees.size() + 1, 0);
    for (int cy = 0; cy + th <= is.cell_h(); cy += step) {
        for (int cx = 0; cx + tw <= is.cell_w(); cx += step) {
            const WindowScore ws = score_window_unchecked(model, is, cx, cy);
            if (stats) {
                ++stats->windows;
                ++stats->rejection_depth[ws.rejected_at ? static_cast<std::size_t>(*ws.rejected_at) : model.trees.size()];
            }
            if (ws.rejected_at || ws.score < threshold) continue;
            out.push_back({window_box(level, model.geometry, cx, cy), ws.score, level.scale});
        }
    }
    return out;
}

std::vector<Detection> detect_levels(const BoostedModel& model, const std::vector<PyramidLevel>& levels,
                                     const DetectParams& params, ScanStats* stats) {
    check_model(model);
    std::vector<std::vector<Detection>> per_level(levels.size());
    std::vector<ScanStats> level_stats(levels.size());
    parallel_for(levels.size(), params.jobs, [&](std::size_t i) {
        per_level[i] = scan_level(model, levels[i], params.stride_px, params.threshold, stats ? &level_stats[i] : nullptr);
    });
    std::vector<Detection> all;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        all.insert(all.end(), per_level[i].begin(), per_level[i].end());
        if (stats) {
            if (stats->rejection_depth.size() != model.trees.size() + 1)
                stats->rejection_depth.assign(model.trees.size() + 1, 0);
            stats->windows += level_stats[i].windows;
            for (std::size_t d = 0; d < level_stats[i].rejection_depth.size(); ++d)
                stats->rejection_depth[d] += level_stats[i].rejection_depth[d];
        }
    }
    return params.apply_nms ? nms(all, params.nms_overlap) : all;
}

std::vector<Detection> detect(const BoostedModel& model, const RgbImage& img, const DetectParams& params,
                              ScanStats* stats) {
    check_model(model);
    const auto levels = build_pyramid(img, model.geometry, model.channels, params.pyramid, params.jobs);
    return detect_levels(model, levels, params, stats);
}

std::vector<std::size_t> nms_indices(std::span<const Box> boxes, std::span<const double> scores, double overlap) {
    if (boxes.size() != scores.size()) fail(ErrorCode::InvalidArgument, "boxes/scores size mismatch");
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> kept;
    for (std::size_t idx : order) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                            [&](std::size_t k) { return iou(boxes[k], boxes[idx]) > overlap; });
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double overlap) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    boxes.reserve(dets.size());
    scores.reserve(dets.size());
    for (const auto& d : dets) {
        boxes.push_back(d.box);
        scores.push_back(d.score);
    }
    std::vector<Detection> kept;
    for (std::size_t i : nms_indices(boxes, scores, overlap)) kept.push_back(dets[i]);
    return kept;
}

} // namespace nnfdet
