#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnfdet/channels.hpp"

namespace nnfdet {

enum class FeatureKind : std::uint8_t { LocalMean = 0, NeighborDiff = 1, Sidf = 2, Ssf = 3 };
inline constexpr int kNumFeatureKinds = 4;

const char* to_string(FeatureKind kind);
std::optional<FeatureKind> parse_feature_kind(std::string_view name);

/// Orientation of the edge shared by the two halves of a neighboring difference.
enum class SplitDirection : std::uint8_t { Vertical = 0, Horizontal = 1 };

/// Template-local rectangle in cells.
struct Patch {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int area() const { return w * h; }
    Patch mirrored(int template_w) const { return {template_w - x - w, y, w, h}; }
    bool operator==(const Patch&) const = default;
};

/// Image-independent feature geometry. Which fields are meaningful depends on kind:
///   LocalMean     a
///   NeighborDiff  a, b, direction (generated with b right of / below a; mirroring keeps the labels)
///   Sidf          a, b on the same horizontal band
///   Ssf           a and sub[0..2] inside a; the mirror A' and its sub-patches are implied
struct FeatureDescriptor {
    FeatureKind kind = FeatureKind::LocalMean;
    int channel = 0;
    Patch a;
    Patch b;
    std::array<Patch, 3> sub{};
    SplitDirection direction = SplitDirection::Vertical;

    /// Offset of the shared edge from a's origin (NeighborDiff only).
    int partition() const { return direction == SplitDirection::Vertical ? a.w : a.h; }

    bool operator==(const FeatureDescriptor&) const = default;
};

struct PoolConfig {
    int template_w = 32;
    int template_h = 64;
    std::array<int, kNumFeatureKinds> counts{}; // indexed by FeatureKind
    int max_square = 8;
    int ssf_min = 6;
    int ssf_max = 12;
    std::uint64_t seed = 1;
};

struct FeaturePool {
    int template_w = 32;
    int template_h = 64;
    std::uint64_t seed = 0;
    std::vector<FeatureDescriptor> descriptors;

    int count(FeatureKind kind) const;
    std::size_t size() const { return descriptors.size(); }
};

/// Limits a descriptor is checked against.
struct GeometryLimits {
    int template_w = 32;
    int template_h = 64;
    int max_square = 8;
    int ssf_min = 6;
    int ssf_max = 12;
};

FeaturePool gen_pool(const PoolConfig& cfg);

/// Returns a description of the first violated invariant, or nullopt.
std::optional<std::string> check_descriptor(const FeatureDescriptor& d, const GeometryLimits& limits);

/// Reflects every patch about the template's vertical axis and maps
/// orientation channel k to (6 - k) mod 6. For Ssf the mirrored sub-patches
/// are swapped back in so the result equals the input.
FeatureDescriptor mirror_descriptor(const FeatureDescriptor& d, int template_w);

struct NormStats {
    double mu_l = 0.0;
    double sigma_l = 0.0;
    double mu_g = 0.0;
};

struct NormConfig {
    bool enabled = true;
    double epsilon = 1e-6;
};

NormStats window_stats(const IntegralStack& is, const CellRect& win);

/// Channel-specific normalization of a LocalMean or difference feature value.
double normalize(double x, int channel, FeatureKind kind, const NormStats& ns, const NormConfig& cfg = {});

double eval_local_mean(const IntegralStack& is, const FeatureDescriptor& d, const CellRect& win,
                       const NormStats& ns, const NormConfig& cfg = {});
double eval_diff(const IntegralStack& is, const FeatureDescriptor& d, const CellRect& win,
                 const NormStats& ns, const NormConfig& cfg = {});
double eval_ssf(const IntegralStack& is, const FeatureDescriptor& d, const CellRect& win, int template_w);
double eval_descriptor(const IntegralStack& is, const FeatureDescriptor& d, const CellRect& win,
                       const NormStats& ns, int template_w, const NormConfig& cfg = {});

/// Evaluates pool[subset[i]] for i in order; stats are computed once.
std::vector<float> eval_window(const IntegralStack& is, const FeaturePool& pool,
                               std::span<const std::uint32_t> subset, const CellRect& win,
                               const NormConfig& cfg = {});

/// Unchecked evaluation used on hot paths: the window origin is (wx, wy) and
/// the caller guarantees that the template fits.
double evaluate_unchecked(const IntegralStack& is, const FeatureDescriptor& d, int wx, int wy,
                          const NormStats& ns, int template_w, const NormConfig& cfg);

} // namespace nnfdet
