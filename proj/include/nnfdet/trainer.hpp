#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nnfdet/boost.hpp"
#include "nnfdet/detect.hpp"

namespace nnfdet {

/// An image with object boxes. For positive sets the boxes are the objects to
/// learn; for negative sets they mark regions that must not be mined.
struct LabeledImage {
    std::string id;
    RgbImage image;
    std::vector<Box> boxes;
};

/// Everything about a model that is fixed before training.
struct ModelSetup {
    ModelGeometry geometry;
    ChannelParams channels;
    NormConfig norm;
    FeaturePool pool;
};

struct TrainConfig {
    std::vector<int> rounds{32, 128, 512, 2048, 4096};
    int tree_depth = 2;
    double feature_fraction = 1.0 / 32.0;
    int initial_negatives = 10000;
    int negatives_per_round = 5000;
    int negative_cap = 15000;
    int mining_per_image = 25;
    double exclusion_iou = 0.3;
    bool mirror_positives = true;
    // extra copies of each positive with the box shifted by up to half the
    // stride and rescaled by up to half a pyramid step, so cascade thresholds
    // also cover windows that sit between scan positions
    int positive_jitter = 2;
    bool measure_final_fp = true;
    CascadeParams cascade;
    DetectParams detect; // scan settings used while mining and for FP counting
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct RoundTrace {
    int round = 0;
    int trees = 0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    double train_error = 0.0;
    std::size_t mined = 0;
    double fp_per_image = 0.0; // false positives per negative image of this round's model (NaN if unmeasured)
    double wall_seconds = 0.0;
    std::array<int, kNumFeatureKinds> selected{}; // split nodes using each feature kind
};

struct TrainResult {
    BoostedModel model;
    std::vector<RoundTrace> trace;
};

/// Multi-round training with hard-negative mining. Each round trains its tree
/// budget from scratch on the current sample set, then mines the
/// highest-scoring false positives from the negative images. The negative set
/// never holds more than negative_cap samples, the initial draw included.
TrainResult train_with_mining(const std::vector<LabeledImage>& positives, const std::vector<LabeledImage>& negatives,
                              const ModelSetup& setup, const TrainConfig& cfg);

/// Writes pool-indexed feature values of the window at cell (wx, wy).
void compute_pool_features(const FeaturePool& pool, const NormConfig& norm, const IntegralStack& is, int wx, int wy,
                           float* out);

/// Integral stack of the region around `box`, rescaled so the box height matches
/// the object height with the box centred horizontally, plus the window origin. nullopt if the window does not
/// fit inside the image.
struct WindowCrop {
    IntegralStack integrals;
    int wx = 0;
    int wy = 0;
};
std::optional<WindowCrop> crop_object_window(const RgbImage& img, const Box& box, const ModelSetup& setup);

/// Pool feature vector of the object in `box`, or nullopt if it does not fit.
std::optional<std::vector<float>> positive_features(const RgbImage& img, const Box& box, const ModelSetup& setup);

/// Training rows of the positives: every box, its jittered copies and, if
/// enabled, the same for the mirrored image.
std::vector<std::vector<float>> collect_positive_features(const std::vector<LabeledImage>& positives,
                                                          const ModelSetup& setup, const TrainConfig& cfg);

/// Initial negatives: windows drawn uniformly from the pyramids of the
/// negative images, skipping windows that overlap a box by more than exclusion_iou.
std::vector<std::vector<float>> sample_negative_features(const std::vector<LabeledImage>& negatives,
                                                         const ModelSetup& setup, const TrainConfig& cfg);

void write_trace_csv(std::ostream& out, const std::vector<RoundTrace>& trace);

/// Split-node counts per feature kind over the whole forest.
std::array<int, kNumFeatureKinds> selected_by_kind(const BoostedModel& model);

} // namespace nnfdet
