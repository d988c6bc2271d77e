#include "nnfdet/featpool.hpp"

#include <algorithm>
#include <cmath>

#include "nnfdet/error.hpp"
#include "nnfdet/random.hpp"

namespace nnfdet {

const char* to_string(FeatureKind kind) {
    switch (kind) {
    case FeatureKind::LocalMean: return "local_mean";
    case FeatureKind::NeighborDiff: return "neighbor_diff";
    case FeatureKind::Sidf: return "sidf";
    case FeatureKind::Ssf: return "ssf";
    }
    return "unknown";
}

std::optional<FeatureKind> parse_feature_kind(std::string_view name) {
    for (int k = 0; k < kNumFeatureKinds; ++k)
        if (name == to_string(static_cast<FeatureKind>(k))) return static_cast<FeatureKind>(k);
    return std::nullopt;
}

int FeaturePool::count(FeatureKind kind) const {
    return static_cast<int>(std::count_if(descriptors.begin(), descriptors.end(),
                                          [kind](const FeatureDescriptor& d) { return d.kind == kind; }));
}

namespace {

Patch random_patch(Rng& rng, int template_w, int template_h, int max_w, int max_h) {
    Patch p;
    p.w = rng.uniform(1, max_w);
    p.h = rng.uniform(1, max_h);
    p.x = rng.uniform(0, template_w - p.w);
    p.y = rng.uniform(0, template_h - p.h);
    return p;
}

FeatureDescriptor sample_local_mean(Rng& rng, const PoolConfig& cfg) {
    FeatureDescriptor d;
    d.kind = FeatureKind::LocalMean;
    d.channel = rng.uniform(0, kNumChannels - 1);
    d.a = random_patch(rng, cfg.template_w, cfg.template_h, cfg.max_square, cfg.max_square);
    return d;
}

FeatureDescriptor sample_neighbor_diff(Rng& rng, const PoolConfig& cfg) {
    FeatureDescriptor d;
    d.kind = FeatureKind::NeighborDiff;
    d.channel = rng.uniform(0, kNumChannels - 1);
    d.direction = rng.bernoulli(0.5) ? SplitDirection::Vertical : SplitDirection::Horizontal;
    const bool vertical = d.direction == SplitDirection::Vertical;
    // Bounding box of the pair, then where the two halves meet.
    const int w = rng.uniform(vertical ? 2 : 1, cfg.max_square);
    const int h = rng.uniform(vertical ? 1 : 2, cfg.max_square);
    const int x = rng.uniform(0, cfg.template_w - w);
    const int y = rng.uniform(0, cfg.template_h - h);
    if (vertical) {
        const int split = rng.uniform(1, w - 1);
        d.a = {x, y, split, h};
        d.b = {x + split, y, w - split, h};
    } else {
        const int split = rng.uniform(1, h - 1);
        d.a = {x, y, w, split};
        d.b = {x, y + split, w, h - split};
    }
    return d;
}

FeatureDescriptor sample_sidf(Rng& rng, const PoolConfig& cfg) {
    FeatureDescriptor d;
    d.kind = FeatureKind::Sidf;
    d.channel = rng.uniform(0, kNumChannels - 1);
    const int h = rng.uniform(1, cfg.max_square);
    const int wa = rng.uniform(1, cfg.max_square);
    int wb = rng.uniform(1, cfg.max_square);
    const int y = rng.uniform(0, cfg.template_h - h);
    // A sits on one side of the axis: l(A) <= l(A') on the left, >= on the right.
    const bool left = rng.bernoulli(0.5);
    const int mid = (cfg.template_w - wa) / 2;
    const int xa = left ? rng.uniform(0, mid) : rng.uniform(cfg.template_w - wa - mid, cfg.template_w - wa);
    const int xa_mirror = cfg.template_w - xa - wa;
    const int lo = std::min(xa, xa_mirror);
    wb = std::min(wb, cfg.template_w - lo);
    const int hi = std::min(std::max(xa, xa_mirror), cfg.template_w - wb);
    d.a = {xa, y, wa, h};
    d.b = {rng.uniform(lo, std::max(lo, hi)), y, wb, h};
    return d;
}

Patch sample_subpatch(Rng& rng, const Patch& a) {
    constexpr int kMaxAttempts = 1000;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const int w = rng.uniform(1, a.w);
        const int h = rng.uniform(1, a.h);
        if (2 * w * h <= a.area()) continue;
        return {a.x + rng.uniform(0, a.w - w), a.y + rng.uniform(0, a.h - h), w, h};
    }
    return a;
}

FeatureDescriptor sample_ssf(Rng& rng, const PoolConfig& cfg) {
    FeatureDescriptor d;
    d.kind = FeatureKind::Ssf;
    d.channel = rng.uniform(kL, kG);
    const int w = rng.uniform(cfg.ssf_min, cfg.ssf_max);
    const int h = rng.uniform(cfg.ssf_min, cfg.ssf_max);
    d.a = {rng.uniform(0, cfg.template_w / 2 - w), rng.uniform(0, cfg.template_h - h), w, h};
    for (auto& s : d.sub) s = sample_subpatch(rng, d.a);
    return d;
}

bool inside(const Patch& p, int template_w, int template_h) {
    return p.w >= 1 && p.h >= 1 && p.x >= 0 && p.y >= 0 && p.x + p.w <= template_w && p.y + p.h <= template_h;
}

bool contains(const Patch& outer, const Patch& inner) {
    return inner.x >= outer.x && inner.y >= outer.y && inner.x + inner.w <= outer.x + outer.w &&
           inner.y + inner.h <= outer.y + outer.h;
}

} // namespace

FeaturePool gen_pool(const PoolConfig& cfg) {
    if (cfg.template_w < 2 || cfg.template_h < 2) fail(ErrorCode::InvalidArgument, "template too small");
    if (cfg.max_square < 2 || cfg.max_square > std::min(cfg.template_w, cfg.template_h))
        fail(ErrorCode::InvalidArgument, "max_square must lie in [2, min(template dims)]");
    for (int c : cfg.counts)
        if (c < 0) fail(ErrorCode::InvalidArgument, "feature counts must be non-negative");
    const int n_ssf = cfg.counts[static_cast<int>(FeatureKind::Ssf)];
    if (n_ssf > 0) {
        if (cfg.ssf_min < 1 || cfg.ssf_min > cfg.ssf_max)
            fail(ErrorCode::InvalidArgument, "invalid SSF size range");
        if (cfg.ssf_max > cfg.template_w / 2 || cfg.ssf_max > cfg.template_h)
            fail(ErrorCode::InvalidArgument, "SSF size exceeds template half-width");
    }

    Rng rng(cfg.seed);
    FeaturePool pool;
    pool.template_w = cfg.template_w;
    pool.template_h = cfg.template_h;
    pool.seed = cfg.seed;
    std::size_t total = 0;
    for (int c : cfg.counts) total += static_cast<std::size_t>(c);
    pool.descriptors.reserve(total);
    for (int i = 0; i < cfg.counts[0]; ++i) pool.descriptors.push_back(sample_local_mean(rng, cfg));
    for (int i = 0; i < cfg.counts[1]; ++i) pool.descriptors.push_back(sample_neighbor_diff(rng, cfg));
    for (int i = 0; i < cfg.counts[2]; ++i) pool.descriptors.push_back(sample_sidf(rng, cfg));
    for (int i = 0; i < cfg.counts[3]; ++i) pool.descriptors.push_back(sample_ssf(rng, cfg));
    return pool;
}

std::optional<std::string> check_descriptor(const FeatureDescriptor& d, const GeometryLimits& lim) {
    if (d.channel < 0 || d.channel >= kNumChannels) return "channel out of range";
    if (!inside(d.a, lim.template_w, lim.template_h)) return "patch A outside template";
    const auto within_square = [&](const Patch& p) { return p.w <= lim.max_square && p.h <= lim.max_square; };
    switch (d.kind) {
    case FeatureKind::LocalMean:
        if (!within_square(d.a)) return "patch exceeds maximum square";
        return std::nullopt;
    case FeatureKind::NeighborDiff: {
        if (!inside(d.b, lim.template_w, lim.template_h)) return "patch B outside template";
        if (d.direction == SplitDirection::Vertical) {
            const bool adjacent = d.b.x == d.a.x + d.a.w || d.a.x == d.b.x + d.b.w;
            if (!adjacent || d.b.y != d.a.y || d.b.h != d.a.h)
                return "vertical pair not adjacent along a full edge";
            if (d.a.w + d.b.w > lim.max_square || d.a.h > lim.max_square) return "pair exceeds maximum square";
        } else {
            if (d.b.y != d.a.y + d.a.h || d.b.x != d.a.x || d.b.w != d.a.w)
                return "horizontal pair not adjacent along a full edge";
            if (d.a.h + d.b.h > lim.max_square || d.a.w > lim.max_square) return "pair exceeds maximum square";
        }
        return std::nullopt;
    }
    case FeatureKind::Sidf: {
        if (!inside(d.b, lim.template_w, lim.template_h)) return "patch B outside template";
        if (d.a.y != d.b.y || d.a.h != d.b.h) return "SIDF patches not on the same horizontal band";
        if (!within_square(d.a) || !within_square(d.b)) return "SIDF patch exceeds maximum square";
        const int la = d.a.x;
        const int la_mirror = lim.template_w - d.a.x - d.a.w;
        if (d.b.x < std::min(la, la_mirror) || d.b.x > std::max(la, la_mirror))
            return "l(B) outside [l(A), l(A')]";
        return std::nullopt;
    }
    case FeatureKind::Ssf: {
        if (d.channel > kG) return "SSF channel must be one of L, U, V, G";
        if (d.a.w < lim.ssf_min || d.a.w > lim.ssf_max || d.a.h < lim.ssf_min || d.a.h > lim.ssf_max)
            return "SSF patch size outside range";
        for (const auto& s : d.sub) {
            if (!contains(d.a, s) || s.w < 1 || s.h < 1) return "SSF sub-patch not inside A";
            if (2 * s.area() <= d.a.area()) return "SSF sub-patch area not above half of A";
        }
        return std::nullopt;
    }
    }
    return "unknown kind";
}

FeatureDescriptor mirror_descriptor(const FeatureDescriptor& d, int template_w) {
    if (d.kind == FeatureKind::Ssf) return d; // A <-> A' with mirrored sub-patches: same feature
    FeatureDescriptor m = d;
    m.a = d.a.mirrored(template_w);
    m.b = d.b.mirrored(template_w);
    // a mirrored gradient at angle t points at pi - t
    if (d.channel >= kO1) m.channel = kO1 + (kNumOrientations - (d.channel - kO1)) % kNumOrientations;
    return m;
}

NormStats window_stats(const IntegralStack& is, const CellRect& win) {
    if (!is.contains(win)) fail(ErrorCode::OutOfBounds, "window outside integral stack");
    const double area = win.area();
    NormStats ns;
    ns.mu_l = is.sum(kL, win.x, win.y, win.w, win.h) / area;
    const double sq = is.sum(kLSquared, win.x, win.y, win.w, win.h) / area;
    ns.sigma_l = std::sqrt(std::max(0.0, sq - ns.mu_l * ns.mu_l));
    ns.mu_g = std::max(0.0, is.sum(kG, win.x, win.y, win.w, win.h) / area);
    return ns;
}

double normalize(double x, int channel, FeatureKind kind, const NormStats& ns, const NormConfig& cfg) {
    if (!cfg.enabled || kind == FeatureKind::Ssf) return x;
    if (channel == kL) {
        const double centered = kind == FeatureKind::LocalMean ? x - ns.mu_l : x;
        return centered / (ns.sigma_l + cfg.epsilon);
    }
    if (channel == kU || channel == kV) return x;
    return x / (ns.mu_g + cfg.epsilon);
}

namespace {

inline double patch_mean(const IntegralStack& is, int channel, const Patch& p, int wx, int wy) {
    return is.sum(channel, wx + p.x, wy + p.y, p.w, p.h) / p.area();
}

void require_inside(const IntegralStack& is, const FeatureDescriptor& d, const CellRect& win, int template_w) {
    if (!is.contains(win)) fail(ErrorCode::OutOfBounds, "window outside integral stack");
    const auto check = [&](const Patch& p) {
        if (!inside(p, win.w, win.h)) fail(ErrorCode::OutOfBounds, "descriptor patch outside window");
    };
    check(d.a);
    if (d.kind == FeatureKind::NeighborDiff || d.kind == FeatureKind::Sidf) check(d.b);
    if (d.kind == FeatureKind::Ssf) {
        check(d.a.mirrored(template_w));
        for (const auto& s : d.sub) check(s);
    }
}

} // namespace

double evaluate_unchecked(const IntegralStack& is, const FeatureDescriptor& d, int wx, int wy,
                          const NormStats& ns, int template_w, const NormConfig& cfg) {
    switch (d.kind) {
    case FeatureKind::LocalMean:
        return normalize(patch_mean(is, d.channel, d.a, wx, wy), d.channel, d.kind, ns, cfg);
    case FeatureKind::NeighborDiff:
    case FeatureKind::Sidf:
        return normalize(patch_mean(is, d.channel, d.a, wx, wy) - patch_mean(is, d.channel, d.b, wx, wy),
                         d.channel, d.kind, ns, cfg);
    case FeatureKind::Ssf: {
        const bool use_min = d.channel == kL || d.channel == kV;
        double fa = 0.0, fm = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double ma = patch_mean(is, d.channel, d.sub[i], wx, wy);
            const double mm = patch_mean(is, d.channel, d.sub[i].mirrored(template_w), wx, wy);
            if (i == 0) {
                fa = ma;
                fm = mm;
            } else if (use_min) {
                fa = std::min(fa, ma);
                fm = std::min(fm, mm);
            } else {
                fa = std::max(fa, ma);
                fm = std::max(fm, mm);
            }
        }
        return std::abs(fa - fm);
    }
    }
    return 0.0;
}

double eval_local_mean(const IntegralStack& is, const FeatureDescriptor& d, const CellRect& win,
                       const NormStats& ns, const NormConfig& cfg) {
    if (d.kind != FeatureKind::LocalMean) fail(ErrorCode::InvalidArgument, "expected a LocalMean descriptor");
    require_inside(is, d, win, win.w);
    return evaluate_unchecked(is, d, win.x, win.y, ns, win.w, cfg);
}

double eval_diff(const IntegralStack& is, const FeatureDescriptor& d, const CellRect& win,
                 const NormStats& ns, const NormConfig& cfg) {
    if (d.kind != FeatureKind::NeighborDiff && d.kind != FeatureKind::Sidf)
        fail(ErrorCode::InvalidArgument, "expected a NeighborDiff or Sidf descriptor");
    require_inside(is, d, win, win.w);
    return evaluate_unchecked(is, d, win.x, win.y, ns, win.w, cfg);
}

double eval_ssf(const IntegralStack& is, const FeatureDescriptor& d, const CellRect& win, int template_w) {
    if (d.kind != FeatureKind::Ssf) fail(ErrorCode::InvalidArgument, "expected an Ssf descriptor");
    if (d.channel > kG) fail(ErrorCode::InvalidArgument, "SSF channel must be one of L, U, V, G");
    require_inside(is, d, win, template_w);
    return evaluate_unchecked(is, d, win.x, win.y, NormStats{}, template_w, NormConfig{});
}

double eval_descriptor(const IntegralStack& is, const FeatureDescriptor& d, const CellRect& win,
                       const NormStats& ns, int template_w, const NormConfig& cfg) {
    switch (d.kind) {
    case FeatureKind::LocalMean: return eval_local_mean(is, d, win, ns, cfg);
    case FeatureKind::NeighborDiff:
    case FeatureKind::Sidf: return eval_diff(is, d, win, ns, cfg);
    case FeatureKind::Ssf: return eval_ssf(is, d, win, template_w);
    }
    return 0.0;
}

std::vector<float> eval_window(const IntegralStack& is, const FeaturePool& pool,
                               std::span<const std::uint32_t> subset, const CellRect& win,
                               const NormConfig& cfg) {
    std::vector<float> out;
    out.reserve(subset.size());
    if (subset.empty()) return out;
    const NormStats ns = window_stats(is, win);
    for (std::uint32_t idx : subset) {
        if (idx >= pool.descriptors.size()) fail(ErrorCode::OutOfBounds, "descriptor index out of range");
        out.push_back(static_cast<float>(eval_descriptor(is, pool.descriptors[idx], win, ns, pool.template_w, cfg)));
    }
    return out;
}

} // namespace nnfdet
