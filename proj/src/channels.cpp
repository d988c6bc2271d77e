#include "nnfdet/channels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "nnfdet/error.hpp"

namespace nnfdet {

namespace {

// D65 reference white in u'v'.
constexpr double kUnPrime = 0.19783000664283681;
constexpr double kVnPrime = 0.46831999493879100;

struct GammaTable {
    std::array<double, 256> linear{};
    GammaTable() {
        for (int i = 0; i < 256; ++i) {
            const double c = i / 255.0;
            linear[i] = c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
        }
    }
};

const GammaTable& gamma_table() {
    static const GammaTable table;
    return table;
}

inline float to_unit(float value, float offset, float range) {
    return std::clamp((value - offset) / range, 0.f, 1.f);
}

} // namespace

std::array<float, 3> srgb_to_luv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    const auto& lin = gamma_table().linear;
    const double r = lin[r8], g = lin[g8], b = lin[b8];
    const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    constexpr double kEpsilon = 216.0 / 24389.0;
    constexpr double kKappa = 24389.0 / 27.0;
    const double l = y > kEpsilon ? 116.0 * std::cbrt(y) - 16.0 : kKappa * y;
    const double denom = x + 15.0 * y + 3.0 * z;
    if (denom <= 0.0) return {static_cast<float>(l), 0.f, 0.f};
    const double up = 4.0 * x / denom;
    const double vp = 9.0 * y / denom;
    return {static_cast<float>(l), static_cast<float>(13.0 * l * (up - kUnPrime)),
            static_cast<float>(13.0 * l * (vp - kVnPrime))};
}

ChannelStack compute_channels(const RgbImage& img, const ChannelParams& params) {
    if (img.width < 1 || img.height < 1) fail(ErrorCode::InvalidArgument, "empty image");
    const int w = img.width, h = img.height;
    ChannelStack cs;
    cs.width = w;
    cs.height = h;
    for (auto& p : cs.planes) p = Plane(w, h);

    const LuvScale& s = params.luv;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::uint8_t* px = img.at(x, y);
            const auto luv = srgb_to_luv(px[0], px[1], px[2]);
            cs.planes[kL].at(x, y) = to_unit(luv[0], s.l_offset, s.l_range);
            cs.planes[kU].at(x, y) = to_unit(luv[1], s.u_offset, s.u_range);
            cs.planes[kV].at(x, y) = to_unit(luv[2], s.v_offset, s.v_range);
        }
    }

    // Centered differences on L with border replication.
    const Plane& lum = cs.planes[kL];
    Plane mag(w, h);
    Plane angle(w, h);
    for (int y = 0; y < h; ++y) {
        const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            const float gx = 0.5f * (lum.at(xp, y) - lum.at(xm, y));
            const float gy = 0.5f * (lum.at(x, yp) - lum.at(x, ym));
            mag.at(x, y) = std::sqrt(gx * gx + gy * gy);
            double theta = std::atan2(static_cast<double>(gy), static_cast<double>(gx));
            if (theta < 0.0) theta += std::numbers::pi;
            if (theta >= std::numbers::pi) theta -= std::numbers::pi;
            angle.at(x, y) = static_cast<float>(theta);
        }
    }

    // Normalize by the mean magnitude over the clipped (2r+1)^2 neighbourhood.
    std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
            row += mag.at(x, y);
            sat[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
                sat[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    const int r = params.norm_radius;
    Plane& grad = cs.planes[kG];
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(y - r, 0), y1 = std::min(y + r + 1, h);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(x - r, 0), x1 = std::min(x + r + 1, w);
            const auto at = [&](int xx, int yy) { return sat[static_cast<std::size_t>(yy) * (w + 1) + xx]; };
            const double box = at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
            const double mean = box / ((x1 - x0) * (y1 - y0));
            grad.at(x, y) = static_cast<float>(mag.at(x, y) / (mean + params.norm_eps));
        }
    }

    // Soft-bin the normalized magnitude into 6 orientation planes centred at k*pi/6.
    constexpr double kBinWidth = std::numbers::pi / kNumOrientations;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float g = grad.at(x, y);
            if (g == 0.f) continue;
            const double pos = angle.at(x, y) / kBinWidth;
            int b0 = static_cast<int>(std::floor(pos));
            const float frac = static_cast<float>(pos - b0);
            b0 %= kNumOrientations;
            const int b1 = (b0 + 1) % kNumOrientations;
            cs.planes[kO1 + b0].at(x, y) += (1.f - frac) * g;
            cs.planes[kO1 + b1].at(x, y) += frac * g;
        }
    }
    return cs;
}

CellChannelStack aggregate_cells(const ChannelStack& cs, int cell_size) {
    if (cell_size < 1) fail(ErrorCode::InvalidArgument, "cell_size must be >= 1");
    CellChannelStack out;
    out.cell_size = cell_size;
    out.cell_w = cs.width / cell_size;
    out.cell_h = cs.height / cell_size;
    for (int c = 0; c < kNumChannels; ++c) {
        const Plane& src = cs.planes[c];
        Plane dst(out.cell_w, out.cell_h);
        for (int cy = 0; cy < out.cell_h; ++cy) {
            for (int dy = 0; dy < cell_size; ++dy) {
                const float* row = &src.data[static_cast<std::size_t>(cy * cell_size + dy) * src.width];
                float* out_row = &dst.data[static_cast<std::size_t>(cy) * out.cell_w];
                for (int cx = 0; cx < out.cell_w; ++cx) {
                    float acc = 0.f;
                    for (int dx = 0; dx < cell_size; ++dx) acc += row[cx * cell_size + dx];
                    out_row[cx] += acc;
                }
            }
        }
        out.planes[c] = std::move(dst);
    }
    return out;
}

IntegralStack::IntegralStack(const CellChannelStack& cells)
    : cell_w_(cells.cell_w), cell_h_(cells.cell_h) {
    const std::size_t stride = static_cast<std::size_t>(cell_w_) + 1;
    for (int t = 0; t < kNumTables; ++t) {
        const bool squared = t == kLSquared;
        const Plane& src = cells.planes[squared ? kL : t];
        auto& table = tables_[t];
        table.assign(stride * (cell_h_ + 1), 0.0);
        for (int y = 0; y < cell_h_; ++y) {
            double row = 0.0;
            const float* in = &src.data[static_cast<std::size_t>(y) * cell_w_];
            double* prev = &table[static_cast<std::size_t>(y) * stride];
            double* cur = &table[static_cast<std::size_t>(y + 1) * stride];
            for (int x = 0; x < cell_w_; ++x) {
                const double v = in[x];
                row += squared ? v * v : v;
                cur[x + 1] = prev[x + 1] + row;
            }
        }
    }
}

double IntegralStack::rect_sum(int table, const CellRect& r) const {
    if (table < 0 || table >= kNumTables) fail(ErrorCode::OutOfBounds, "table index out of range");
    if (!contains(r))
        fail(ErrorCode::OutOfBounds, "rectangle (" + std::to_string(r.x) + "," + std::to_string(r.y) +
                                         "," + std::to_string(r.w) + "," + std::to_string(r.h) +
                                         ") outside integral stack");
    return sum(table, r.x, r.y, r.w, r.h);
}

IntegralStack build_integrals(const CellChannelStack& ccs) { return IntegralStack(ccs); }

double rect_sum(const IntegralStack& is, int plane, const CellRect& r) { return is.rect_sum(plane, r); }

void dump_channels(const ChannelStack& cs, const std::filesystem::path& dir) {
    static constexpr const char* kNames[kNumChannels] = {"L", "U", "V", "G", "O1", "O2", "O3", "O4", "O5", "O6"};
    std::filesystem::create_directories(dir);
    std::ofstream ranges(dir / "ranges.txt");
    if (!ranges) fail(ErrorCode::IoError, "cannot write " + (dir / "ranges.txt").string());
    ranges << "channel min max\n";
    for (int c = 0; c < kNumChannels; ++c) {
        const auto& data = cs.planes[c].data;
        const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
        write_pgm(dir / (std::string(kNames[c]) + ".pgm"), cs.planes[c], *lo, *hi);
        ranges << kNames[c] << ' ' << *lo << ' ' << *hi << '\n';
    }
}

ChannelStack mirror_channels(const ChannelStack& cs) {
    ChannelStack out;
    out.width = cs.width;
    out.height = cs.height;
    for (int c = 0; c < kNumChannels; ++c) {
        int src = c;
        if (c >= kO1) src = kO1 + (kNumOrientations - (c - kO1)) % kNumOrientations;
        const Plane& in = cs.planes[src];
        Plane p(cs.width, cs.height);
        for (int y = 0; y < cs.height; ++y)
            for (int x = 0; x < cs.width; ++x) p.at(cs.width - 1 - x, y) = in.at(x, y);
        out.planes[c] = std::move(p);
    }
    return out;
}

} // namespace nnfdet
