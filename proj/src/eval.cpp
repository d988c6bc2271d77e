#include "nnfdet/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "nnfdet/error.hpp"

namespace nnfdet {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

[[noreturn]] void parse_fail(const std::string& source, std::size_t line, const std::string& what) {
    fail(ErrorCode::ParseError, source + ":" + std::to_string(line) + ": " + what);
}

double parse_number(std::string_view field, const std::string& source, std::size_t line) {
    double value = 0.0;
    // from_chars for double is available in libstdc++ 11
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
        parse_fail(source, line, "invalid number '" + std::string(field) + "'");
    if (!std::isfinite(value)) parse_fail(source, line, "non-finite number");
    return value;
}

template <class RowFn>
void for_each_row(std::istream& in, const std::string& source, RowFn&& fn) {
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = split_csv(line);
        if (fields.front() == "image_path") continue; // header
        fn(fields, line_no);
    }
    if (in.bad()) fail(ErrorCode::IoError, "read failed: " + source);
}

Box parse_box(const std::vector<std::string_view>& f, const std::string& source, std::size_t line) {
    Box b{parse_number(f[1], source, line), parse_number(f[2], source, line), parse_number(f[3], source, line),
          parse_number(f[4], source, line)};
    if (b.w <= 0.0 || b.h <= 0.0) parse_fail(source, line, "box width and height must be positive");
    return b;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    return in;
}

} // namespace

std::vector<GroundTruthBox> parse_annotations(std::istream& in, const std::string& source) {
    std::vector<GroundTruthBox> out;
    for_each_row(in, source, [&](const std::vector<std::string_view>& f, std::size_t line) {
        if (f.size() != 5 && f.size() != 6)
            parse_fail(source, line, "expected image_path,x,y,w,h[,ignore] but got " + std::to_string(f.size()) + " columns");
        if (f[0].empty()) parse_fail(source, line, "empty image path");
        GroundTruthBox gt;
        gt.image = std::string(f[0]);
        gt.box = parse_box(f, source, line);
        if (f.size() == 6) {
            if (f[5] == "1" || f[5] == "true")
                gt.ignore = true;
            else if (f[5] == "0" || f[5] == "false")
                gt.ignore = false;
            else
                parse_fail(source, line, "ignore flag must be 0/1/true/false");
        }
        out.push_back(std::move(gt));
    });
    return out;
}

std::vector<GroundTruthBox> load_annotations(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_annotations(in, path.string());
}

std::vector<ScoredDetection> parse_detections(std::istream& in, const std::string& source) {
    std::vector<ScoredDetection> out;
    for_each_row(in, source, [&](const std::vector<std::string_view>& f, std::size_t line) {
        if (f.size() != 6) parse_fail(source, line, "expected image_path,x,y,w,h,score");
        ScoredDetection d;
        d.image = std::string(f[0]);
        d.box = parse_box(f, source, line);
        d.score = parse_number(f[5], source, line);
        out.push_back(std::move(d));
    });
    return out;
}

std::vector<ScoredDetection> load_detections(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_detections(in, path.string());
}

void write_detections_csv(std::ostream& out, const std::string& image, std::span<const Detection> dets) {
    out << std::fixed;
    for (const auto& d : dets) {
        out << image << ',' << std::setprecision(2) << d.box.x << ',' << d.box.y << ',' << d.box.w << ','
            << d.box.h << ',' << std::setprecision(4) << d.score << '\n';
    }
    out.unsetf(std::ios::floatfield);
}

void write_annotations_csv(std::ostream& out, std::span<const GroundTruthBox> gts) {
    out << "image_path,x,y,w,h,ignore\n" << std::fixed << std::setprecision(2);
    for (const auto& g : gts)
        out << g.image << ',' << g.box.x << ',' << g.box.y << ',' << g.box.w << ',' << g.box.h << ','
            << (g.ignore ? 1 : 0) << '\n';
    out.unsetf(std::ios::floatfield);
}

MatchResult match_detections(std::span<const Box> dets, std::span<const double> scores,
                             std::span<const GroundTruthBox> gts, double iou_min) {
    if (dets.size() != scores.size()) fail(ErrorCode::InvalidArgument, "detections/scores size mismatch");
    MatchResult result;
    result.detections.assign(dets.size(), MatchOutcome::FalsePositive);
    result.gt_matched.assign(gts.size(), false);

    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    for (std::size_t di : order) {
        double best = iou_min;
        std::ptrdiff_t best_gt = -1;
        bool hits_ignore = false;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double overlap = iou(dets[di], gts[g].box);
            if (gts[g].ignore) {
                hits_ignore = hits_ignore || overlap >= iou_min;
                continue;
            }
            if (result.gt_matched[g]) continue;
            if (overlap >= best && (best_gt < 0 || overlap > best)) {
                best = overlap;
                best_gt = static_cast<std::ptrdiff_t>(g);
            }
        }
        if (best_gt >= 0) {
            result.gt_matched[static_cast<std::size_t>(best_gt)] = true;
            result.detections[di] = MatchOutcome::TruePositive;
        } else if (hits_ignore) {
            result.detections[di] = MatchOutcome::Ignored;
        }
    }
    return result;
}

double log_average_miss_rate(std::span<const CurvePoint> points) {
    if (points.empty()) return 1.0;
    constexpr int kRefs = 9;
    double log_sum = 0.0;
    for (int i = 0; i < kRefs; ++i) {
        const double ref = std::pow(10.0, -2.0 + 2.0 * i / (kRefs - 1));
        // lowest-threshold point whose fppi does not exceed the reference
        double miss = points.front().miss_rate;
        for (const auto& p : points) {
            if (p.fppi <= ref) miss = p.miss_rate;
            else break;
        }
        log_sum += std::log(std::max(miss, kMissRateFloor));
    }
    return std::exp(log_sum / kRefs);
}

EvalCurve roc(std::span<const ScoredDetection> dets, std::span<const GroundTruthBox> gts,
              std::span<const std::string> images, const EvalOptions& options) {
    std::map<std::string, std::vector<GroundTruthBox>> gt_by_image;
    std::map<std::string, std::vector<const ScoredDetection*>> det_by_image;
    std::set<std::string> image_ids(images.begin(), images.end());
    const bool implicit_images = images.empty();

    std::size_t n_gt = 0;
    for (const auto& g : gts) {
        if (!implicit_images && !image_ids.count(g.image)) continue;
        GroundTruthBox copy = g;
        if (options.min_height > 0.0 && copy.box.h < options.min_height) copy.ignore = true;
        if (!copy.ignore) ++n_gt;
        gt_by_image[g.image].push_back(std::move(copy));
        if (implicit_images) image_ids.insert(g.image);
    }
    for (const auto& d : dets) {
        if (!implicit_images && !image_ids.count(d.image)) continue;
        if (options.min_height > 0.0 && d.box.h < options.min_height) continue;
        det_by_image[d.image].push_back(&d);
        if (implicit_images) image_ids.insert(d.image);
    }
    if (n_gt == 0) fail(ErrorCode::NoGroundTruth, "no non-ignore ground-truth boxes to evaluate against");

    std::vector<std::pair<double, MatchOutcome>> scored;
    for (const auto& [image, list] : det_by_image) {
        std::vector<Box> boxes;
        std::vector<double> scores;
        for (const auto* d : list) {
            boxes.push_back(d->box);
            scores.push_back(d->score);
        }
        static const std::vector<GroundTruthBox> kNone;
        const auto it = gt_by_image.find(image);
        const auto& image_gts = it == gt_by_image.end() ? kNone : it->second;
        const MatchResult m = match_detections(boxes, scores, image_gts, options.iou_min);
        for (std::size_t i = 0; i < list.size(); ++i) scored.emplace_back(scores[i], m.detections[i]);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    const double n_images = static_cast<double>(image_ids.size());
    EvalCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        if (scored[i].second == MatchOutcome::TruePositive) ++tp;
        if (scored[i].second == MatchOutcome::FalsePositive) ++fp;
        const bool last_of_score = i + 1 == scored.size() || scored[i + 1].first != scored[i].first;
        if (!last_of_score) continue;
        curve.points.push_back({scored[i].first, fp / n_images, 1.0 - static_cast<double>(tp) / n_gt});
    }
    curve.lamr = log_average_miss_rate(curve.points);
    return curve;
}

void write_curve_csv(std::ostream& out, const EvalCurve& curve) {
    out << "threshold,fppi,miss_rate\n";
    out << std::setprecision(10);
    for (const auto& p : curve.points) out << p.threshold << ',' << p.fppi << ',' << p.miss_rate << '\n';
}

} // namespace nnfdet
