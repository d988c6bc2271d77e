#include "nnfdet/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "nnfdet/error.hpp"
#include "nnfdet/eval.hpp"
#include "nnfdet/parallel.hpp"
#include "nnfdet/random.hpp"

namespace nnfdet {

namespace {

using Color = std::array<double, 3>;

struct Canvas {
    int w, h;
    std::vector<double> px; // 3 per pixel

    Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_) * h_ * 3, 0.0) {}
    double* at(int x, int y) { return &px[3 * (static_cast<std::size_t>(y) * w + x)]; }
};

Color random_color(Rng& rng) {
    return {rng.uniform_real(30, 225), rng.uniform_real(30, 225), rng.uniform_real(30, 225)};
}

struct Rect {
    int x0, y0, x1, y1; // half-open
    bool intersects(const Rect& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
    Rect grown(int m) const { return {x0 - m, y0 - m, x1 + m, y1 + m}; }
};

// Binary shape on a local grid; rendered with an interior colour per part and
// a darker ring along the boundary.
struct Shape {
    int x0 = 0, y0 = 0, w = 0, h = 0;
    std::vector<std::uint8_t> part; // 0 = outside, else 1-based part id

    std::uint8_t get(int x, int y) const {
        if (x < 0 || y < 0 || x >= w || y >= h) return 0;
        return part[static_cast<std::size_t>(y) * w + x];
    }
    Rect bounds() const {
        int bx0 = w, by0 = h, bx1 = -1, by1 = -1;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (get(x, y)) {
                    bx0 = std::min(bx0, x);
                    bx1 = std::max(bx1, x);
                    by0 = std::min(by0, y);
                    by1 = std::max(by1, y);
                }
        if (bx1 < 0) return {x0, y0, x0, y0};
        return {x0 + bx0, y0 + by0, x0 + bx1 + 1, y0 + by1 + 1};
    }
};

struct FigureShape {
    double head_r, torso_top, torso_bottom, shoulder, waist, leg_gap_top, leg_gap_bottom, leg_width;
    double head_dx = 0.0;      // horizontal head offset (distractors only)
    double skew = 0.0;         // extra torso width on the right side (distractors only)
    bool one_leg = false;
};

FigureShape random_figure(Rng& rng, double hf) {
    FigureShape f;
    f.head_r = hf * rng.uniform_real(0.095, 0.115);
    f.torso_top = 2.0 * f.head_r + hf * 0.01;
    f.torso_bottom = hf * rng.uniform_real(0.55, 0.60);
    f.shoulder = hf * rng.uniform_real(0.17, 0.20);
    f.waist = hf * rng.uniform_real(0.13, 0.16);
    f.leg_gap_top = hf * rng.uniform_real(0.005, 0.02);
    f.leg_gap_bottom = hf * rng.uniform_real(0.03, 0.07);
    f.leg_width = hf * rng.uniform_real(0.07, 0.10);
    return f;
}

// Part id at an offset from the figure's top centre: 1 head, 2 torso, 3 legs.
std::uint8_t figure_part(const FigureShape& f, double hf, double dx, double dy) {
    if (dy < 0.0 || dy >= hf) return 0;
    const double hx = dx - f.head_dx, hy = dy - f.head_r;
    if (hx * hx + hy * hy <= f.head_r * f.head_r) return 1;
    if (dy >= f.torso_top && dy < f.torso_bottom) {
        const double t = (dy - f.torso_top) / (f.torso_bottom - f.torso_top);
        const double half = f.shoulder + (f.waist - f.shoulder) * t;
        if (dx >= -half && dx <= half + f.skew) return 2;
        return 0;
    }
    if (dy >= f.torso_bottom) {
        const double t = (dy - f.torso_bottom) / (hf - f.torso_bottom);
        const double gap = f.leg_gap_top + (f.leg_gap_bottom - f.leg_gap_top) * t;
        const double ad = std::abs(dx);
        if (ad >= gap && ad <= gap + f.leg_width && !(f.one_leg && dx < 0.0)) return 3;
    }
    return 0;
}

Shape rasterize_figure(const FigureShape& f, double hf, int cx, int top) {
    const int half = static_cast<int>(std::ceil(std::max(f.shoulder + f.skew, f.leg_gap_bottom + f.leg_width) +
                                                std::abs(f.head_dx))) + 2;
    Shape s;
    s.x0 = cx - half;
    s.y0 = top;
    s.w = 2 * half;
    s.h = static_cast<int>(std::ceil(hf)) + 1;
    s.part.assign(static_cast<std::size_t>(s.w) * s.h, 0);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
            s.part[static_cast<std::size_t>(y) * s.w + x] =
                figure_part(f, hf, (s.x0 + x + 0.5) - cx, y + 0.5);
    return s;
}

void paint(Canvas& c, const Shape& s, const std::array<Color, 3>& colors, int ring, std::vector<std::uint8_t>* mask) {
    for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
            const std::uint8_t p = s.get(x, y);
            if (!p) continue;
            const int gx = s.x0 + x, gy = s.y0 + y;
            if (gx < 0 || gy < 0 || gx >= c.w || gy >= c.h) continue;
            bool edge = false;
            for (int ey = -ring; ey <= ring && !edge; ++ey)
                for (int ex = -ring; ex <= ring && !edge; ++ex) edge = s.get(x + ex, y + ey) == 0;
            const Color& col = colors[static_cast<std::size_t>(p - 1)];
            double* d = c.at(gx, gy);
            for (int k = 0; k < 3; ++k) d[k] = edge ? col[static_cast<std::size_t>(k)] * 0.45 : col[static_cast<std::size_t>(k)];
            if (mask) (*mask)[static_cast<std::size_t>(gy) * c.w + gx] = 1;
        }
    }
}

Shape rasterize_rect(int x0, int y0, int w, int h) {
    Shape s{x0, y0, w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 1)};
    return s;
}

Shape rasterize_triangle(int x0, int y0, int w, int h, bool flip) {
    Shape s{x0, y0, w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
    for (int y = 0; y < h; ++y) {
        const int extent = static_cast<int>(std::lround((y + 1.0) / h * w));
        for (int x = 0; x < extent; ++x) s.part[static_cast<std::size_t>(y) * w + (flip ? w - 1 - x : x)] = 1;
    }
    return s;
}

void draw_background(Canvas& c, Rng& rng) {
    const double base = 128.0 + rng.uniform_real(-6.0, 6.0);
    Color tint{rng.uniform_real(-25, 25), rng.uniform_real(-25, 25), rng.uniform_real(-25, 25)};
    const double mt = (tint[0] + tint[1] + tint[2]) / 3.0;
    for (auto& t : tint) t -= mt;
    struct Wave {
        double fx, fy, phase, amp;
        Color mix;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < 3; ++i) {
        const double period = rng.uniform_real(20.0, 80.0);
        const double angle = rng.uniform_real(0.0, 3.141592653589793);
        waves.push_back({std::cos(angle) * 6.283185307179586 / period, std::sin(angle) * 6.283185307179586 / period,
                         rng.uniform_real(0.0, 6.283185307179586), rng.uniform_real(8.0, 20.0),
                         {rng.uniform_real(0.6, 1.0), rng.uniform_real(0.6, 1.0), rng.uniform_real(0.6, 1.0)}});
    }
    for (int y = 0; y < c.h; ++y)
        for (int x = 0; x < c.w; ++x) {
            double* d = c.at(x, y);
            for (int k = 0; k < 3; ++k) {
                double v = base + tint[static_cast<std::size_t>(k)];
                for (const auto& wv : waves)
                    v += wv.amp * wv.mix[static_cast<std::size_t>(k)] * std::sin(wv.fx * x + wv.fy * y + wv.phase);
                d[k] = v;
            }
        }
}

bool window_fits(const Rect& r, int img_w, int img_h, const ModelGeometry& g) {
    const double bh = r.y1 - r.y0;
    const double s = g.object_h / bh;
    const double wx0 = 0.5 * (r.x0 + r.x1) - (g.object_x + 0.5 * g.object_w) / s, wy0 = r.y0 - g.object_y / s;
    return wx0 >= 1.0 && wy0 >= 1.0 && wx0 + g.template_w_px / s <= img_w - 1.0 &&
           wy0 + g.template_h_px / s <= img_h - 1.0;
}

} // namespace

SynthScene gen_scene(std::uint64_t seed, const SynthParams& params) {
    const ModelGeometry g;
    if (params.width < 2 * g.template_w_px || params.height < 2 * g.template_h_px)
        fail(ErrorCode::InvalidArgument, "scene must be at least twice the template size");
    if (params.n_targets < 0 || params.clutter < 0) fail(ErrorCode::InvalidArgument, "negative target or clutter count");
    if (params.min_target_h < 8 || params.max_target_h < params.min_target_h)
        fail(ErrorCode::InvalidArgument, "bad target height range");

    Rng rng(seed);
    SynthScene scene;
    scene.seed = seed;
    Canvas canvas(params.width, params.height);
    draw_background(canvas, rng);
    scene.mask.assign(static_cast<std::size_t>(params.width) * params.height, 0);

    // plan figures first so distractors can stay clear of them
    struct Planned {
        Shape shape;
        std::array<Color, 3> colors;
        int ring;
    };
    std::vector<Planned> figures;
    std::vector<Rect> taken;
    for (int t = 0; t < params.n_targets; ++t) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            const double hf = rng.uniform_real(params.min_target_h, params.max_target_h);
            const FigureShape f = random_figure(rng, hf);
            const int cx = rng.uniform(0, params.width - 1);
            const int top = rng.uniform(0, params.height - 1);
            Shape s = rasterize_figure(f, hf, cx, top);
            const Rect r = s.bounds();
            if (!window_fits(r, params.width, params.height, g)) continue;
            if (std::any_of(taken.begin(), taken.end(), [&](const Rect& o) { return o.grown(6).intersects(r); }))
                continue;
            Color skin{rng.uniform_real(150, 230), rng.uniform_real(110, 190), rng.uniform_real(90, 160)};
            figures.push_back({std::move(s), {skin, random_color(rng), random_color(rng)},
                               std::max(1, static_cast<int>(std::lround(hf / 45.0)))});
            taken.push_back(r);
            break;
        }
    }

    for (int d = 0; d < params.clutter; ++d) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            const double u = rng.uniform01();
            const int type = u < 0.2 ? 0 : u < 0.35 ? 1 : u < 0.8 ? 2 : 3;
            Shape s;
            std::array<Color, 3> colors{random_color(rng), random_color(rng), random_color(rng)};
            if (type == 0) {
                s = rasterize_rect(rng.uniform(-10, params.width - 10), rng.uniform(-10, params.height - 10),
                                   rng.uniform(10, 60), rng.uniform(10, 120));
            } else if (type == 1) {
                s = rasterize_triangle(rng.uniform(-10, params.width - 10), rng.uniform(-10, params.height - 10),
                                       rng.uniform(15, 70), rng.uniform(15, 110), rng.bernoulli(0.5));
            } else if (type == 2) {
                // figure-like but lopsided
                const double hf = rng.uniform_real(params.min_target_h, params.max_target_h);
                FigureShape f = random_figure(rng, hf);
                const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
                f.head_dx = side * hf * rng.uniform_real(0.08, 0.16);
                f.skew = hf * rng.uniform_real(0.06, 0.14);
                f.one_leg = rng.bernoulli(0.5);
                s = rasterize_figure(f, hf, rng.uniform(0, params.width - 1), rng.uniform(-20, params.height - 20));
                if (side < 0) {
                    // mirror the local grid so skew and missing leg land on either side
                    for (int y = 0; y < s.h; ++y)
                        std::reverse(s.part.begin() + static_cast<std::ptrdiff_t>(y) * s.w,
                                     s.part.begin() + static_cast<std::ptrdiff_t>(y + 1) * s.w);
                }
            } else {
                s = rasterize_rect(rng.uniform(0, params.width - 1), rng.uniform(-40, params.height - 40),
                                   rng.uniform(4, 14), rng.uniform(60, 200));
            }
            const Rect r = s.bounds();
            if (std::any_of(taken.begin(), taken.end(), [&](const Rect& o) { return o.grown(4).intersects(r); }))
                continue;
            paint(canvas, s, colors, 1, nullptr);
            break;
        }
    }

    for (const auto& f : figures) {
        paint(canvas, f.shape, f.colors, f.ring, &scene.mask);
        const Rect r = f.shape.bounds();
        scene.boxes.push_back(Box{static_cast<double>(r.x0), static_cast<double>(r.y0),
                                  static_cast<double>(r.x1 - r.x0), static_cast<double>(r.y1 - r.y0)});
    }

    scene.image = RgbImage(params.width, params.height);
    for (int y = 0; y < params.height; ++y)
        for (int x = 0; x < params.width; ++x) {
            const double* s = canvas.at(x, y);
            std::uint8_t* d = scene.image.at(x, y);
            for (int k = 0; k < 3; ++k)
                d[k] = static_cast<std::uint8_t>(std::clamp(std::lround(s[k] + params.noise_sigma * rng.normal()), 0L, 255L));
        }
    return scene;
}

std::vector<SynthScene> gen_scenes(std::uint64_t seed, int count, const SynthParams& params, int first, int jobs) {
    std::vector<SynthScene> out(static_cast<std::size_t>(std::max(count, 0)));
    parallel_for(out.size(), jobs, [&](std::size_t i) {
        out[i] = gen_scene(derive_seed(seed, static_cast<std::uint64_t>(first) + i), params);
    });
    return out;
}

namespace {

std::string scene_name(const std::string& prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%04zu.ppm", i);
    return prefix + buf;
}

} // namespace

std::vector<LabeledImage> to_labeled(const std::vector<SynthScene>& scenes, const std::string& prefix) {
    std::vector<LabeledImage> out;
    for (std::size_t i = 0; i < scenes.size(); ++i) out.push_back({scene_name(prefix, i), scenes[i].image, scenes[i].boxes});
    return out;
}

void write_scenes(const std::filesystem::path& dir, const std::vector<SynthScene>& scenes, const std::string& prefix) {
    std::filesystem::create_directories(dir);
    std::vector<GroundTruthBox> gts;
    std::ofstream list(dir / "images.txt");
    if (!list) fail(ErrorCode::IoError, "cannot write " + (dir / "images.txt").string());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const std::string name = scene_name(prefix, i);
        write_ppm(dir / name, scenes[i].image);
        list << name << '\n';
        for (const Box& b : scenes[i].boxes) gts.push_back({name, b, false});
    }
    std::ofstream ann(dir / "annotations.csv");
    if (!ann) fail(ErrorCode::IoError, "cannot write " + (dir / "annotations.csv").string());
    write_annotations_csv(ann, gts);
}

std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir) {
    const auto ann_path = dir / "annotations.csv";
    if (!std::filesystem::is_directory(dir)) fail(ErrorCode::InsufficientData, "dataset directory not found: " + dir.string());
    std::vector<std::string> names;
    std::map<std::string, std::vector<Box>> boxes;
    if (std::filesystem::exists(ann_path))
        for (const auto& g : load_annotations(ann_path))
            if (!g.ignore) boxes[g.image].push_back(g.box);
    const auto list_path = dir / "images.txt";
    if (std::filesystem::exists(list_path)) {
        std::ifstream in(list_path);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) names.push_back(line);
    } else {
        for (const auto& [name, _] : boxes) names.push_back(name);
    }
    if (names.empty()) fail(ErrorCode::InsufficientData, "no images listed in " + dir.string());
    std::vector<LabeledImage> out;
    for (const auto& name : names) {
        const auto it = boxes.find(name);
        out.push_back({name, decode_image(dir / name), it == boxes.end() ? std::vector<Box>{} : it->second});
    }
    return out;
}

RgbImage crop_window(const RgbImage& img, const Box& box, const ModelGeometry& g) {
    if (box.w <= 0.0 || box.h <= 0.0) fail(ErrorCode::InvalidArgument, "box must have positive size");
    const double s = g.object_h / box.h;
    const double wx0 = box.x + 0.5 * box.w - (g.object_x + 0.5 * g.object_w) / s, wy0 = box.y - g.object_y / s;
    const double step = 1.0 / s;
    RgbImage out(g.template_w_px, g.template_h_px);
    for (int v = 0; v < out.height; ++v) {
        const double sy = std::clamp(wy0 + (v + 0.5) * step - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double fy = sy - y0;
        for (int u = 0; u < out.width; ++u) {
            const double sx = std::clamp(wx0 + (u + 0.5) * step - 0.5, 0.0, img.width - 1.0);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double fx = sx - x0;
            for (int k = 0; k < 3; ++k) {
                const double top = img.at(x0, y0)[k] * (1 - fx) + img.at(x1, y0)[k] * fx;
                const double bot = img.at(x0, y1)[k] * (1 - fx) + img.at(x1, y1)[k] * fx;
                out.at(u, v)[k] = static_cast<std::uint8_t>(std::lround(top * (1 - fy) + bot * fy));
            }
        }
    }
    return out;
}

CellChannelStack window_channels(const RgbImage& img, const Box& box, const ModelGeometry& geometry,
                                 const ChannelParams& channels) {
    return aggregate_cells(compute_channels(crop_window(img, box, geometry), channels), geometry.cell_size);
}

CellChannelStack average_positive_channels(const std::vector<CellChannelStack>& positives) {
    if (positives.empty()) fail(ErrorCode::EmptyInput, "no positives to average");
    CellChannelStack avg;
    avg.cell_w = positives.front().cell_w;
    avg.cell_h = positives.front().cell_h;
    avg.cell_size = positives.front().cell_size;
    std::array<std::vector<double>, kNumChannels> acc;
    for (auto& a : acc) a.assign(static_cast<std::size_t>(avg.cell_w) * avg.cell_h, 0.0);
    for (const auto& p : positives) {
        if (p.cell_w != avg.cell_w || p.cell_h != avg.cell_h)
            fail(ErrorCode::InvalidArgument, "positives must share one template size");
        for (int c = 0; c < kNumChannels; ++c)
            for (std::size_t i = 0; i < acc[static_cast<std::size_t>(c)].size(); ++i)
                acc[static_cast<std::size_t>(c)][i] += p.planes[static_cast<std::size_t>(c)].data[i];
    }
    const double n = static_cast<double>(positives.size());
    for (int c = 0; c < kNumChannels; ++c) {
        Plane& out = avg.planes[static_cast<std::size_t>(c)];
        out = Plane(avg.cell_w, avg.cell_h);
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = static_cast<float>(acc[static_cast<std::size_t>(c)][i] / n);
    }
    return avg;
}

std::size_t TernaryModel::count(TernaryLabel l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

TernaryModel build_ternary_model(const Plane& plane, double low_percentile, double high_percentile) {
    if (plane.data.empty()) fail(ErrorCode::DegeneratePlane, "empty plane");
    if (!(0.0 <= low_percentile && low_percentile <= high_percentile && high_percentile <= 1.0))
        fail(ErrorCode::InvalidArgument, "percentiles must satisfy 0 <= low <= high <= 1");
    std::vector<float> sorted = plane.data;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) fail(ErrorCode::DegeneratePlane, "constant plane");
    const auto pick = [&](double p) { return sorted[static_cast<std::size_t>(std::floor(p * (sorted.size() - 1)))]; };
    const float t_low = pick(low_percentile), t_high = pick(high_percentile);

    TernaryModel tm;
    tm.width = plane.width;
    tm.height = plane.height;
    tm.labels.assign(plane.data.size(), TernaryLabel::Background);
    const auto is_contour = [&](float v) { return t_high == t_low ? v > t_low : v >= t_high; };
    for (int y = 0; y < plane.height; ++y) {
        int first = -1, last = -1;
        for (int x = 0; x < plane.width; ++x) {
            if (!is_contour(plane.at(x, y))) continue;
            tm.labels[static_cast<std::size_t>(y) * plane.width + x] = TernaryLabel::ContourBody;
            if (first < 0) first = x;
            last = x;
        }
        for (int x = first + 1; first >= 0 && x < last; ++x)
            if (plane.at(x, y) <= t_low) tm.labels[static_cast<std::size_t>(y) * plane.width + x] = TernaryLabel::InnerBody;
    }
    for (TernaryLabel l : {TernaryLabel::Background, TernaryLabel::ContourBody, TernaryLabel::InnerBody})
        if (tm.count(l) == 0) fail(ErrorCode::DegeneratePlane, "plane does not produce all three ternary labels");
    return tm;
}

const char* to_string(SidfClass c) {
    switch (c) {
    case SidfClass::CI: return "CI";
    case SidfClass::BP: return "BP";
    case SidfClass::O: return "O";
    }
    return "?";
}

namespace {

std::array<std::size_t, 3> label_counts(const Patch& p, const TernaryModel& tm) {
    std::array<std::size_t, 3> c{};
    for (int y = std::max(0, p.y); y < std::min(tm.height, p.y + p.h); ++y)
        for (int x = std::max(0, p.x); x < std::min(tm.width, p.x + p.w); ++x) ++c[static_cast<std::size_t>(tm.at(x, y))];
    return c;
}

} // namespace

TernaryLabel patch_label(const Patch& p, const Patch& other, const TernaryModel& tm) {
    const auto own = label_counts(p, tm);
    const auto oth = label_counts(other, tm);
    std::size_t best = 0;
    for (std::size_t l = 1; l < 3; ++l) {
        if (own[l] > own[best] || (own[l] == own[best] && own[l] + oth[l] > own[best] + oth[best])) best = l;
    }
    return static_cast<TernaryLabel>(best);
}

SidfClass classify_sidf(const FeatureDescriptor& d, const TernaryModel& tm) {
    const TernaryLabel la = patch_label(d.a, d.b, tm);
    const TernaryLabel lb = patch_label(d.b, d.a, tm);
    const auto bg = TernaryLabel::Background;
    if ((la == TernaryLabel::ContourBody && lb == TernaryLabel::InnerBody) ||
        (la == TernaryLabel::InnerBody && lb == TernaryLabel::ContourBody))
        return SidfClass::CI;
    if ((la == bg) != (lb == bg)) return SidfClass::BP;
    return SidfClass::O;
}

double SidfBreakdown::percent(SidfClass c) const {
    const std::size_t t = total();
    return t == 0 ? 0.0 : 100.0 * static_cast<double>(counts[static_cast<std::size_t>(c)]) / t;
}

SidfBreakdown analyze_sidf(const FeaturePool& pool, const std::vector<std::uint32_t>& indices, const TernaryModel& tm) {
    SidfBreakdown out;
    for (std::uint32_t i : indices) {
        if (i >= pool.size()) fail(ErrorCode::OutOfBounds, "descriptor index outside the pool");
        const auto& d = pool.descriptors[i];
        if (d.kind != FeatureKind::Sidf) continue;
        ++out.counts[static_cast<std::size_t>(classify_sidf(d, tm))];
    }
    return out;
}

} // namespace nnfdet
