#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "nnfdet/image.hpp"

namespace nnfdet {

/// Plane order of every channel stack: three LUV colour planes, the normalized
/// gradient magnitude, then six oriented-gradient planes.
enum Channel : int {
    kL = 0,
    kU = 1,
    kV = 2,
    kG = 3,
    kO1 = 4,
};

inline constexpr int kNumChannels = 10;
inline constexpr int kNumOrientations = 6;
/// Index of the extra summed-area table holding squared L cell values.
inline constexpr int kLSquared = 10;
inline constexpr int kNumTables = 11;

/// Affine maps taking raw CIE-LUV components to [0, 1]: value' = (value - offset) / range.
struct LuvScale {
    float l_offset = 0.f;
    float l_range = 100.f;
    float u_offset = -84.f;
    float u_range = 260.f;
    float v_offset = -135.f;
    float v_range = 243.f;

    bool operator==(const LuvScale&) const = default;
};

struct ChannelParams {
    LuvScale luv;
    int norm_radius = 5;     // 11x11 box
    float norm_eps = 0.005f;

    bool operator==(const ChannelParams&) const = default;
};

struct ChannelStack {
    int width = 0;
    int height = 0;
    std::array<Plane, kNumChannels> planes;
};

struct CellChannelStack {
    int cell_w = 0;
    int cell_h = 0;
    int cell_size = 2;
    std::array<Plane, kNumChannels> planes; // per-cell pixel sums
};

/// Rectangle in cell units.
struct CellRect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    int area() const { return w * h; }
    bool operator==(const CellRect&) const = default;
};

/// Summed-area tables of a CellChannelStack. Table t has (cell_w+1)*(cell_h+1)
/// entries with a zero first row and column.
class IntegralStack {
public:
    IntegralStack() = default;
    explicit IntegralStack(const CellChannelStack& cells);

    int cell_w() const { return cell_w_; }
    int cell_h() const { return cell_h_; }

    /// Bounds-checked rectangle sum; throws OutOfBounds.
    double rect_sum(int table, const CellRect& r) const;

    /// Rectangle sum without validation; the caller guarantees bounds.
    double sum(int table, int x, int y, int w, int h) const {
        const double* t = tables_[table].data();
        const std::size_t stride = static_cast<std::size_t>(cell_w_) + 1;
        const std::size_t top = static_cast<std::size_t>(y) * stride;
        const std::size_t bot = static_cast<std::size_t>(y + h) * stride;
        return t[bot + x + w] - t[bot + x] - t[top + x + w] + t[top + x];
    }

    double entry(int table, int x, int y) const {
        return tables_[table][static_cast<std::size_t>(y) * (cell_w_ + 1) + x];
    }

    bool contains(const CellRect& r) const {
        return r.w > 0 && r.h > 0 && r.x >= 0 && r.y >= 0 && r.x + r.w <= cell_w_ &&
               r.y + r.h <= cell_h_;
    }

private:
    int cell_w_ = 0;
    int cell_h_ = 0;
    std::array<std::vector<double>, kNumTables> tables_;
};

ChannelStack compute_channels(const RgbImage& img, const ChannelParams& params = {});

CellChannelStack aggregate_cells(const ChannelStack& cs, int cell_size);

IntegralStack build_integrals(const CellChannelStack& ccs);

double rect_sum(const IntegralStack& is, int plane, const CellRect& r);

/// sRGB (0..255) to unscaled CIE-LUV under D65.
std::array<float, 3> srgb_to_luv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Writes every plane as PGM plus ranges.txt with the min/max used for scaling.
void dump_channels(const ChannelStack& cs, const std::filesystem::path& dir);

/// Horizontal mirror of a channel stack; orientation bin k maps to bin (6-k) mod 6.
ChannelStack mirror_channels(const ChannelStack& cs);

} // namespace nnfdet
