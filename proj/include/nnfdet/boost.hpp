#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "nnfdet/channels.hpp"
#include "nnfdet/featpool.hpp"

namespace nnfdet {

/// Dense sample-major feature matrix: row i holds the values of every
/// candidate feature on sample i.
struct FeatureMatrix {
    std::size_t n_samples = 0;
    std::size_t n_features = 0;
    std::vector<float> values;

    FeatureMatrix() = default;
    FeatureMatrix(std::size_t samples, std::size_t features)
        : n_samples(samples), n_features(features), values(samples * features, 0.f) {}

    float* row(std::size_t i) { return values.data() + i * n_features; }
    const float* row(std::size_t i) const { return values.data() + i * n_features; }
    float at(std::size_t i, std::size_t f) const { return values[i * n_features + f]; }
};

inline constexpr int kNumBins = 256;

/// 8-bit equal-width quantization of each feature column. Bin t of feature f
/// covers [edge(f, t-1), edge(f, t)), so "bin <= t" is exactly "value < edge(f, t)".
struct QuantizedData {
    std::size_t n_samples = 0;
    std::size_t n_features = 0;
    std::vector<std::uint8_t> bins; // feature-major: bins[f * n_samples + i]
    std::vector<float> min;
    std::vector<float> max;
    std::vector<std::uint8_t> degenerate;

    std::uint8_t bin(std::size_t i, std::size_t f) const { return bins[f * n_samples + i]; }
    /// Raw threshold separating bins <= t from bins > t.
    float edge(std::size_t f, int t) const;
};

QuantizedData quantize(const FeatureMatrix& features);

/// Internal nodes route a value v left when v < threshold. Leaves have feature < 0.
struct TreeNode {
    std::int32_t feature = -1;
    float threshold = 0.f;
    float score = 0.f;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

/// Complete binary tree stored breadth-first; node i has children 2i+1, 2i+2.
struct DecisionTree {
    int depth = 1;
    std::vector<TreeNode> nodes;

    /// Descends using value_of(feature_index) and returns the leaf score.
    template <class ValueOf>
    float evaluate(ValueOf&& value_of) const {
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            const float v = static_cast<float>(value_of(nodes[i].feature));
            i = 2 * i + (v < nodes[i].threshold ? 1 : 2);
        }
        return nodes[i].score;
    }

    float evaluate_row(const float* values) const {
        return evaluate([values](std::int32_t f) { return values[f]; });
    }

    bool operator==(const DecisionTree&) const = default;
};

inline constexpr double kLeafEpsilon = 1e-4;

/// Greedy depth-limited tree minimizing weighted classification error over the
/// candidate features. labels are +1/-1. Ties go to the lowest candidate
/// feature index, then the lowest bin threshold.
DecisionTree train_tree(const QuantizedData& data, std::span<const std::int8_t> labels,
                        std::span<const double> weights, std::span<const std::uint32_t> candidates,
                        int depth, double leaf_eps = kLeafEpsilon);

struct BoostConfig {
    int n_trees = 32;
    int depth = 2;
    double feature_fraction = 1.0;
    std::uint64_t seed = 0;
    double leaf_eps = kLeafEpsilon;
};

struct BoostTrace {
    std::vector<double> weight_sum_error; // |sum(w) - 1| after each renormalization
    std::vector<double> train_error;      // 0-1 error of sign(H) after each tree
};

struct BoostResult {
    std::vector<DecisionTree> trees;
    BoostTrace trace;
};

/// Real AdaBoost: class-balanced initial weights, w_i <- w_i exp(-y_i h(x_i)).
BoostResult boost(const QuantizedData& data, std::span<const std::int8_t> labels, const BoostConfig& cfg);

/// Candidate subset for one tree: round(n * fraction) distinct indices, sorted.
std::vector<std::uint32_t> sample_candidates(std::size_t n_features, double fraction, std::uint64_t seed);

inline constexpr float kNoRejection = -std::numeric_limits<float>::infinity();

struct CascadeParams {
    double margin = 0.1;
    double drop_quantile = 0.01;
};

/// Soft-cascade thresholds from the running scores of training positives:
/// running[p][t] is positive p's score after tree t. At each stage the
/// positives below the drop quantile are ignored and the threshold is the
/// minimum of the rest minus the margin.
std::vector<float> set_cascade(const std::vector<std::vector<double>>& running, const CascadeParams& params = {});

/// Positives that set_cascade kept at every stage.
std::vector<bool> retained_positives(const std::vector<std::vector<double>>& running, const CascadeParams& params = {});

/// Template geometry of a model in pixels. The object box is where a
/// detection of this window is reported; the rest is context padding.
struct ModelGeometry {
    int template_w_px = 64;
    int template_h_px = 128;
    int cell_size = 2;
    int object_x = 12;
    int object_y = 14;
    int object_w = 40;
    int object_h = 100;

    int cells_w() const { return template_w_px / cell_size; }
    int cells_h() const { return template_h_px / cell_size; }
    bool operator==(const ModelGeometry&) const = default;
};

struct BoostedModel {
    ModelGeometry geometry;
    ChannelParams channels;
    NormConfig norm;
    FeaturePool pool;
    std::vector<DecisionTree> trees;
    std::vector<float> cascade; // one threshold per tree

    void disable_cascade() { cascade.assign(trees.size(), kNoRejection); }
};

struct WindowScore {
    double score = 0.0;
    std::optional<int> rejected_at; // tree index at which the running score fell below its threshold
};

/// Scores the template-sized window whose top-left cell is (wx, wy), stopping
/// early on soft-cascade rejection. The caller guarantees the window fits.
WindowScore score_window_unchecked(const BoostedModel& model, const IntegralStack& is, int wx, int wy);

WindowScore score_window(const BoostedModel& model, const IntegralStack& is, const CellRect& win);

/// Full forest output on a precomputed pool-indexed feature vector.
double score_features(const BoostedModel& model, std::span<const float> pool_values);

/// Distinct pool indices referenced by the trees, ascending.
std::vector<std::uint32_t> used_features(const std::vector<DecisionTree>& trees);

} // namespace nnfdet
