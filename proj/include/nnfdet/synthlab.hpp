#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "nnfdet/boost.hpp"
#include "nnfdet/detect.hpp"
#include "nnfdet/trainer.hpp"

namespace nnfdet {

struct SynthParams {
    int width = 192;
    int height = 256;
    int n_targets = 2;
    int clutter = 10;         // number of distractor shapes
    int min_target_h = 56;    // rendered figure height range in pixels
    int max_target_h = 100;
    double noise_sigma = 8.0; // per-pixel gaussian noise
};

struct SynthScene {
    RgbImage image;
    std::vector<Box> boxes;         // tight boxes of the planted figures
    std::vector<std::uint8_t> mask; // 1 where a figure was rendered, row-major
    std::uint64_t seed = 0;
};

/// Renders symmetric three-part figures on a textured background with
/// asymmetric distractors. Fewer than n_targets figures are placed only if
/// no free position is found. Requires width >= 128 and height >= 256.
SynthScene gen_scene(std::uint64_t seed, const SynthParams& params);

/// Scenes for seeds derive_seed(seed, first + i), i < count.
std::vector<SynthScene> gen_scenes(std::uint64_t seed, int count, const SynthParams& params, int first = 0,
                                   int jobs = 1);

std::vector<LabeledImage> to_labeled(const std::vector<SynthScene>& scenes, const std::string& prefix = "scene");

/// Writes <prefix>_NNNN.ppm files plus annotations.csv into dir.
void write_scenes(const std::filesystem::path& dir, const std::vector<SynthScene>& scenes,
                  const std::string& prefix = "scene");

/// Reads annotations.csv in dir and decodes every listed image (paths are
/// relative to dir). Images listed only with a header are not discovered; a
/// dataset with no annotation file is InsufficientData.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir);

/// Template-sized (geometry pixels) crop of the model window for `box`: the
/// box height maps to the object height and the box is centred horizontally.
RgbImage crop_window(const RgbImage& img, const Box& box, const ModelGeometry& geometry);

/// Cell-resolution channels of a template-sized crop.
CellChannelStack window_channels(const RgbImage& img, const Box& box, const ModelGeometry& geometry,
                                 const ChannelParams& channels = {});

/// Per-channel mean of per-cell values over positives of identical size.
CellChannelStack average_positive_channels(const std::vector<CellChannelStack>& positives);

enum class TernaryLabel : std::uint8_t { Background = 0, ContourBody = 1, InnerBody = 2 };

struct TernaryModel {
    int width = 0;
    int height = 0;
    std::vector<TernaryLabel> labels;

    TernaryLabel at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count(TernaryLabel l) const;
};

/// Cells at or above the high percentile are contour, cells at or below the
/// low percentile strictly between the outermost contour cells of their row
/// are inner, the rest background. A percentile p reads the sorted values at
/// index floor(p * (n - 1)). When both thresholds coincide, contour is the
/// strictly greater cells.
TernaryModel build_ternary_model(const Plane& plane, double low_percentile = 0.3, double high_percentile = 0.7);

enum class SidfClass : std::uint8_t { CI = 0, BP = 1, O = 2 };
const char* to_string(SidfClass c);

/// Label covering most cells of the patch; ties go to the label with more
/// cells across both patches, then the lower label value.
TernaryLabel patch_label(const Patch& p, const Patch& other, const TernaryModel& tm);

SidfClass classify_sidf(const FeatureDescriptor& d, const TernaryModel& tm);

struct SidfBreakdown {
    std::array<std::size_t, 3> counts{}; // indexed by SidfClass
    std::size_t total() const { return counts[0] + counts[1] + counts[2]; }
    double percent(SidfClass c) const;
};

/// Classifies the SIDF descriptors among `indices` of the pool.
SidfBreakdown analyze_sidf(const FeaturePool& pool, const std::vector<std::uint32_t>& indices, const TernaryModel& tm);

} // namespace nnfdet
