#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nnfdet/config.hpp"
#include "nnfdet/error.hpp"
#include "nnfdet/eval.hpp"
#include "nnfdet/model_io.hpp"
#include "nnfdet/parallel.hpp"
#include "nnfdet/synthlab.hpp"

namespace fs = std::filesystem;
using namespace nnfdet;

namespace {

struct GlobalOptions {
    std::string config;
    std::string preset;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int jobs = 0;
};

RunConfig resolve_config(const GlobalOptions& g) {
    RunConfig cfg;
    if (g.config.empty()) {
        cfg = preset_config(g.preset.empty() ? "nnnf-l2" : g.preset);
    } else {
        // a --preset flag replaces the file's preset line; the file's other keys still apply on top
        std::istringstream in(read_text_file(g.config) + "\n" + (g.preset.empty() ? "" : "preset = " + g.preset + "\n"));
        cfg = parse_config(in, g.config);
    }
    for (const auto& kv : g.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail(ErrorCode::ConfigError, "--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed_given) cfg.seed = g.seed;
    if (g.jobs > 0) cfg.jobs = g.jobs;
    return cfg;
}

int jobs_of(const RunConfig& cfg) { return cfg.jobs > 0 ? cfg.jobs : default_jobs(); }

// Arguments may be image files or directories of .ppm/.png files.
// Images found inside a directory argument are named relative to it.
struct InputImage {
    fs::path path;
    std::string id;
};

std::vector<InputImage> expand_images(const std::vector<std::string>& args) {
    std::vector<InputImage> out;
    for (const auto& a : args) {
        if (fs::is_directory(a)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(a)) {
                const auto ext = e.path().extension().string();
                if (ext == ".ppm" || ext == ".png") found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            for (const auto& f : found) out.push_back({f, f.lexically_relative(a).generic_string()});
        } else {
            out.push_back({a, a});
        }
    }
    if (out.empty()) fail(ErrorCode::EmptyInput, "no input images");
    return out;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path);
    return out;
}

struct DetectFlags {
    int stride = 4;
    int scales_per_octave = 8;
    int upsample_octaves = 1;
    double threshold = 0.0;
    double nms_overlap = 0.65;
    bool no_nms = false;
};

void add_detect_flags(CLI::App* cmd, DetectFlags& f) {
    cmd->add_option("--stride", f.stride, "Window stride in pixels")->capture_default_str();
    cmd->add_option("--scales-per-octave", f.scales_per_octave)->capture_default_str();
    cmd->add_option("--upsample-octaves", f.upsample_octaves)->capture_default_str();
    cmd->add_option("--threshold", f.threshold, "Accept threshold on the boosted score")->capture_default_str();
    cmd->add_option("--nms-overlap", f.nms_overlap)->capture_default_str();
    cmd->add_flag("--no-nms", f.no_nms);
}

DetectParams to_params(const DetectFlags& f, int jobs) {
    DetectParams p;
    p.stride_px = f.stride;
    p.pyramid.scales_per_octave = f.scales_per_octave;
    p.pyramid.octaves_up = f.upsample_octaves;
    p.threshold = f.threshold;
    p.nms_overlap = f.nms_overlap;
    p.apply_nms = !f.no_nms;
    p.jobs = jobs;
    return p;
}

void write_plot_data(const std::string& path, const EvalCurve& curve) {
    // miss rate sampled on a log grid of fppi, one point per decade tenth
    auto out = open_output(path);
    out << "fppi,miss_rate\n";
    for (int i = 0; i <= 40; ++i) {
        const double ref = std::pow(10.0, -3.0 + i * 0.1);
        double miss = curve.points.front().miss_rate;
        for (const auto& p : curve.points) {
            if (p.fppi <= ref) miss = p.miss_rate;
            else break;
        }
        out << ref << ',' << std::max(miss, kMissRateFloor) << '\n';
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pedestrian detection with neighboring and non-neighboring channel features"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "key=value config file");
    app.add_option("--preset", g.preset, "nnnf-l2 | nnnf-l4 | nf-only | nnnf-no-norm");
    app.add_option("--set", g.sets, "Override a config key (key=value), repeatable");
    app.add_option("--seed", g.seed)->each([&](const std::string&) { g.seed_given = true; });
    app.add_option("--jobs", g.jobs, "Worker threads (default: all cores)");

    std::string out_path, trace_path, model_path, pos_dir, neg_dir, det_path, ann_path, plot_path, dump_dir, data_dir;
    std::vector<std::string> images;
    DetectFlags df;
    double min_height = 0.0;
    int count = 10, repeats = 1;
    std::string prefix = "scene";
    bool no_cascade = false;

    auto* pool_cmd = app.add_subcommand("pool", "Generate the candidate feature pool");
    pool_cmd->add_option("--out", out_path, "Pool JSON")->required();

    auto* train_cmd = app.add_subcommand("train", "Train a boosted detector with hard-negative mining");
    train_cmd->add_option("--positives", pos_dir, "Directory with annotations.csv and images")->required();
    train_cmd->add_option("--negatives", neg_dir, "Mining images; boxes mark regions to skip (default: positives)");
    train_cmd->add_option("--out", out_path, "Model JSON")->required();
    train_cmd->add_option("--trace", trace_path, "Per-round trace CSV");

    auto* detect_cmd = app.add_subcommand("detect", "Run the detector over images");
    detect_cmd->add_option("--model", model_path)->required();
    detect_cmd->add_option("images", images, "Image files or directories")->required();
    detect_cmd->add_option("--out", out_path, "Detections CSV (default: stdout)");
    detect_cmd->add_option("--dump-channels", dump_dir, "Write channel planes of each image as PGM");
    detect_cmd->add_flag("--no-cascade", no_cascade, "Score every window with all trees");
    add_detect_flags(detect_cmd, df);

    auto* eval_cmd = app.add_subcommand("eval", "Miss rate versus FPPI and log-average miss rate");
    eval_cmd->add_option("--detections", det_path)->required();
    eval_cmd->add_option("--annotations", ann_path)->required();
    eval_cmd->add_option("--out", out_path, "Curve CSV");
    eval_cmd->add_option("--min-height", min_height, "Ignore ground truth below this height");
    eval_cmd->add_option("--plot-data", plot_path, "Log-spaced samples for plotting");

    auto* synth_cmd = app.add_subcommand("synth", "Render synthetic scenes");
    synth_cmd->add_option("--count", count)->capture_default_str();
    synth_cmd->add_option("--out-dir", out_path)->required();
    synth_cmd->add_option("--prefix", prefix)->capture_default_str();

    auto* sidf_cmd = app.add_subcommand("analyze-sidf", "CI/BP/O breakdown of the SIDF features a model uses");
    sidf_cmd->add_option("--model", model_path)->required();
    sidf_cmd->add_option("--data", data_dir, "Annotated positives for the average G plane")->required();
    sidf_cmd->add_option("--out", out_path, "CSV (default: stdout)");

    auto* bench_cmd = app.add_subcommand("bench", "Detection throughput");
    bench_cmd->add_option("--model", model_path)->required();
    bench_cmd->add_option("images", images)->required();
    bench_cmd->add_option("--repeats", repeats)->capture_default_str();
    bench_cmd->add_flag("--no-cascade", no_cascade, "Score every window with all trees");
    add_detect_flags(bench_cmd, df);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: ConfigError: " << e.what() << '\n';
        return 2;
    }

    try {
        const RunConfig cfg = resolve_config(g);
        const int jobs = jobs_of(cfg);

        if (*pool_cmd) {
            save_pool(out_path, make_setup(cfg).pool);
        } else if (*train_cmd) {
            if (!fs::is_directory(pos_dir)) fail(ErrorCode::InsufficientData, "positives directory not found: " + pos_dir);
            const auto positives = load_dataset(pos_dir);
            const auto negatives = neg_dir.empty() ? positives : load_dataset(neg_dir);
            const TrainResult r = train_with_mining(positives, negatives, make_setup(cfg), effective_train_config(cfg));
            save_model(out_path, r.model);
            if (!trace_path.empty()) {
                auto out = open_output(trace_path);
                write_trace_csv(out, r.trace);
            }
        } else if (*detect_cmd) {
            BoostedModel model = load_model(model_path);
            if (no_cascade) model.disable_cascade();
            const auto paths = expand_images(images);
            std::ofstream file;
            if (!out_path.empty()) file = open_output(out_path);
            std::ostream& out = out_path.empty() ? std::cout : file;
            out << "image_path,x,y,w,h,score\n";
            for (const auto& in : paths) {
                const RgbImage img = decode_image(in.path);
                if (!dump_dir.empty())
                    dump_channels(compute_channels(img, model.channels), fs::path(dump_dir) / in.path.stem());
                const auto dets = detect(model, img, to_params(df, jobs));
                write_detections_csv(out, in.id, dets);
            }
        } else if (*eval_cmd) {
            EvalOptions opt;
            opt.min_height = min_height;
            const auto gts = load_annotations(ann_path);
            const auto dets = load_detections(det_path);
            const EvalCurve curve = roc(dets, gts, {}, opt);
            if (!out_path.empty()) {
                auto out = open_output(out_path);
                write_curve_csv(out, curve);
            }
            if (!plot_path.empty()) write_plot_data(plot_path, curve);
            std::cout << "LAMR=" << curve.lamr << '\n';
        } else if (*synth_cmd) {
            write_scenes(out_path, gen_scenes(cfg.seed, count, cfg.synth, 0, jobs), prefix);
        } else if (*sidf_cmd) {
            const BoostedModel model = load_model(model_path);
            std::vector<CellChannelStack> windows;
            for (const auto& li : load_dataset(data_dir))
                for (const auto& b : li.boxes) windows.push_back(window_channels(li.image, b, model.geometry, model.channels));
            const CellChannelStack avg = average_positive_channels(windows);
            const TernaryModel tm = build_ternary_model(avg.planes[kG]);
            const SidfBreakdown br = analyze_sidf(model.pool, used_features(model.trees), tm);
            std::ofstream file;
            if (!out_path.empty()) file = open_output(out_path);
            std::ostream& out = out_path.empty() ? std::cout : file;
            out << "class,count,percent\n";
            for (SidfClass c : {SidfClass::CI, SidfClass::BP, SidfClass::O})
                out << to_string(c) << ',' << br.counts[static_cast<std::size_t>(c)] << ',' << br.percent(c) << '\n';
        } else if (*bench_cmd) {
            BoostedModel model = load_model(model_path);
            if (no_cascade) model.disable_cascade();
            std::vector<RgbImage> imgs;
            for (const auto& in : expand_images(images)) imgs.push_back(decode_image(in.path));
            ScanStats stats;
            const auto t0 = std::chrono::steady_clock::now();
            for (int r = 0; r < std::max(repeats, 1); ++r)
                for (const auto& img : imgs) detect(model, img, to_params(df, jobs), &stats);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const double n_images = static_cast<double>(imgs.size()) * std::max(repeats, 1);
            std::cout << "images=" << n_images << "\nseconds=" << secs << "\nimages_per_s=" << n_images / secs
                      << "\nwindows=" << stats.windows << "\nwindows_per_s=" << stats.windows / secs << '\n';
            std::cout << "rejection_depth,count\n";
            for (std::size_t d = 0; d < stats.rejection_depth.size(); ++d) {
                if (!stats.rejection_depth[d]) continue;
                if (d + 1 == stats.rejection_depth.size())
                    std::cout << "accepted," << stats.rejection_depth[d] << '\n';
                else
                    std::cout << d << ',' << stats.rejection_depth[d] << '\n';
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: Internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
