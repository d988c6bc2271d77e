#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nnfdet/detect.hpp"

namespace nnfdet {

struct GroundTruthBox {
    std::string image;
    Box box;
    bool ignore = false;
};

struct ScoredDetection {
    std::string image;
    Box box;
    double score = 0.0;
};

/// Parses `image_path,x,y,w,h[,ignore]` rows. A leading header row starting
/// with `image_path` is skipped. Throws ParseError naming the line.
std::vector<GroundTruthBox> parse_annotations(std::istream& in, const std::string& source = "<stream>");
std::vector<GroundTruthBox> load_annotations(const std::filesystem::path& path);

/// Parses `image_path,x,y,w,h,score` rows.
std::vector<ScoredDetection> parse_detections(std::istream& in, const std::string& source = "<stream>");
std::vector<ScoredDetection> load_detections(const std::filesystem::path& path);

/// Writes detections with 2 decimals for coordinates and 4 for the score.
void write_detections_csv(std::ostream& out, const std::string& image, std::span<const Detection> dets);
void write_annotations_csv(std::ostream& out, std::span<const GroundTruthBox> gts);

enum class MatchOutcome { TruePositive, FalsePositive, Ignored };

struct MatchResult {
    std::vector<MatchOutcome> detections; // in input order
    std::vector<bool> gt_matched;         // in input order
};

/// Greedy matching on one image: detections in descending score (ties by
/// input order) take the unmatched non-ignore box of highest IoU >= iou_min;
/// otherwise a detection overlapping an ignore box is neither TP nor FP.
MatchResult match_detections(std::span<const Box> dets, std::span<const double> scores,
                             std::span<const GroundTruthBox> gts, double iou_min = 0.5);

struct CurvePoint {
    double threshold = 0.0;
    double fppi = 0.0;
    double miss_rate = 1.0;
};

struct EvalCurve {
    std::vector<CurvePoint> points; // threshold descending
    double lamr = 1.0;
};

struct EvalOptions {
    double iou_min = 0.5;
    double min_height = 0.0; // gts below become ignore, detections below are dropped
};

inline constexpr double kMissRateFloor = 1e-4;

/// Log-average miss rate over 9 FPPI references log-spaced in [1e-2, 1].
double log_average_miss_rate(std::span<const CurvePoint> points);

/// Miss rate vs FPPI swept over every distinct detection score. `images` lists
/// the evaluated image ids; when empty, every id seen in either input is used.
EvalCurve roc(std::span<const ScoredDetection> dets, std::span<const GroundTruthBox> gts,
              std::span<const std::string> images = {}, const EvalOptions& options = {});

void write_curve_csv(std::ostream& out, const EvalCurve& curve);

} // namespace nnfdet
