#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nnfdet/boost.hpp"
#include "nnfdet/image.hpp"

namespace nnfdet {

/// Axis-aligned box in pixel coordinates.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    bool operator==(const Box&) const = default;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

struct Detection {
    Box box;
    double score = 0.0;
    double scale = 1.0;
};

struct PyramidParams {
    int octaves_up = 1;
    int scales_per_octave = 8;
};

/// One resampled copy of the image with its channel integrals.
struct PyramidLevel {
    double scale = 1.0;   // nominal 2^(k / scales_per_octave)
    double scale_x = 1.0; // actual level_width / image_width
    double scale_y = 1.0;
    int width = 0;
    int height = 0;
    IntegralStack integrals;
};

/// Nominal scales from octaves_up above 1 down to the smallest scale at
/// which the image still contains the template.
std::vector<double> pyramid_scales(int img_w, int img_h, int template_w_px, int template_h_px,
                                   const PyramidParams& params);

PyramidLevel build_level(const RgbImage& img, double scale, const ChannelParams& channels, int cell_size);

std::vector<PyramidLevel> build_pyramid(const RgbImage& img, const ModelGeometry& geometry,
                                        const ChannelParams& channels, const PyramidParams& params = {},
                                        int jobs = 1);

/// Object box in original image coordinates for the window whose top-left
/// cell on `level` is (cx, cy).
Box window_box(const PyramidLevel& level, const ModelGeometry& geometry, int cx, int cy);

struct DetectParams {
    int stride_px = 4;
    PyramidParams pyramid;
    double threshold = 0.0;
    double nms_overlap = 0.65;
    bool apply_nms = true;
    int jobs = 1;
};

/// Per-run counters: windows scanned and the tree at which each rejected
/// window left the cascade (last bin counts windows that were not rejected).
struct ScanStats {
    std::size_t windows = 0;
    std::vector<std::size_t> rejection_depth;
};

/// Top-left window cells scanned on a level, row-major.
std::size_t window_count(int cells_w, int cells_h, int template_cells_w, int template_cells_h, int stride_cells);

std::vector<Detection> scan_level(const BoostedModel& model, const PyramidLevel& level, int stride_px,
                                  double threshold, ScanStats* stats = nullptr);

/// Sliding-window detection over every pyramid level. Without NMS the output
/// is ordered by (level, y, x).
std::vector<Detection> detect(const BoostedModel& model, const RgbImage& img, const DetectParams& params = {},
                              ScanStats* stats = nullptr);

std::vector<Detection> detect_levels(const BoostedModel& model, const std::vector<PyramidLevel>& levels,
                                     const DetectParams& params, ScanStats* stats = nullptr);

/// Greedy suppression by descending score; a box is dropped when its IoU
/// with an already kept box exceeds `overlap`. Equal scores keep input order.
std::vector<Detection> nms(const std::vector<Detection>& dets, double overlap = 0.65);

/// Indices of the boxes nms() keeps, in the order it keeps them.
std::vector<std::size_t> nms_indices(std::span<const Box> boxes, std::span<const double> scores, double overlap);

} // namespace nnfdet
