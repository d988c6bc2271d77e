#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "nnfdet/eval.hpp"
#include "nnfdet/model_io.hpp"
#include "oracle.hpp"

using namespace nnfdet;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fs::path& work() {
    static const fs::path dir = oracle::temp_dir("cli");
    return dir;
}

Run cli(const std::string& args) {
    const fs::path out = work() / "stdout.txt", err = work() / "stderr.txt";
    const std::string cmd = std::string(NNFDET_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) out.push_back(l);
    return out;
}

const std::string kSmall = "--set pool.local_mean=100 --set pool.neighbor_diff=300 "
                           "--set train.rounds=4,16 --set train.initial_negatives=400 --set train.negatives_per_round=200 "
                           "--set train.feature_fraction=1/4 --seed 5 --jobs 2";

// Synthetic data and a trained model shared by the tests below.
const fs::path& data_dir() {
    static const fs::path d = [] {
        const fs::path dir = work() / "data";
        const Run r = cli("--seed 3 synth --count 12 --out-dir " + dir.string());
        REQUIRE(r.code == 0);
        return dir;
    }();
    return d;
}

const fs::path& model_path() {
    static const fs::path m = [] {
        const fs::path p = work() / "model.json";
        const Run r = cli(kSmall + " --set pool.sidf=120 --set pool.ssf=80 train --positives " + data_dir().string() + " --out " + p.string() + " --trace " +
                             (work() / "trace.csv").string());
        INFO(r.err);
        REQUIRE(r.code == 0);
        return p;
    }();
    return m;
}

} // namespace

TEST_CASE("pool command") {
    const fs::path a = work() / "pool_a.json", b = work() / "pool_b.json", nf = work() / "pool_nf.json";
    REQUIRE(cli("--seed 9 pool --out " + a.string()).code == 0);
    REQUIRE(cli("--seed 9 pool --out " + b.string()).code == 0);
    CHECK(slurp(a) == slurp(b));
    const FeaturePool pool = load_pool(a);
    for (int k = 0; k < kNumFeatureKinds; ++k) CHECK(pool.count(static_cast<FeatureKind>(k)) > 0);

    REQUIRE(cli("--preset nf-only pool --out " + nf.string()).code == 0);
    const FeaturePool p = load_pool(nf);
    CHECK(p.count(FeatureKind::Sidf) == 0);
    CHECK(p.count(FeatureKind::Ssf) == 0);
    CHECK(p.count(FeatureKind::NeighborDiff) > 0);
}

TEST_CASE("synth command") {
    const auto names = lines(slurp(data_dir() / "images.txt"));
    CHECK(names.size() == 12);
    CHECK(fs::exists(data_dir() / "scene_0000.ppm"));
    std::ifstream ann(data_dir() / "annotations.csv");
    CHECK(parse_annotations(ann).size() >= 12);
}

TEST_CASE("train command") {
    const BoostedModel m = load_model(model_path());
    CHECK(m.trees.size() == 16);
    const auto j = nlohmann::json::parse(slurp(model_path()));
    for (const char* key : {"version", "template", "cell_size", "channel_config", "pool", "trees", "cascade_thresholds",
                            "normalization"})
        CHECK(j.contains(key));

    const auto trace = lines(slurp(work() / "trace.csv"));
    REQUIRE(trace.size() == 3);
    CHECK(trace[0].rfind("round,trees,n_pos,n_neg,train_error,mined,wall_seconds", 0) == 0);
    // selected SIDF and SSF are the last two columns
    std::vector<std::string> cols;
    std::stringstream ss(trace.back());
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    CHECK(std::stoi(cols[cols.size() - 2]) + std::stoi(cols.back()) > 0);

    const fs::path nf = work() / "model_nf.json";
    const Run r = cli(kSmall + " --preset nf-only train --positives " + data_dir().string() + " --out " + nf.string());
    CHECK(r.code == 0);
    CHECK(load_model(nf).pool.count(FeatureKind::Sidf) == 0);

    const Run missing = cli("train --positives " + (work() / "nowhere").string() + " --out " + nf.string());
    CHECK(missing.code == 1);
    CHECK(missing.err.rfind("error: InsufficientData:", 0) == 0);
    CHECK(lines(missing.err).size() == 1);
}

TEST_CASE("detect and eval commands") {
    const fs::path blank = work() / "blank.ppm";
    write_ppm(blank, RgbImage(160, 256, 128));
    const Run b = cli("detect --model " + model_path().string() + " " + blank.string());
    CHECK(b.code == 0);
    CHECK(lines(b.out) == std::vector<std::string>{"image_path,x,y,w,h,score"});

    const fs::path dets = work() / "dets.csv";
    const Run d = cli("detect --model " + model_path().string() + " --out " + dets.string() + " " + data_dir().string());
    CHECK(d.code == 0);
    const auto rows = lines(slurp(dets));
    CHECK(rows.size() >= 2);
    if (rows.size() > 1) CHECK(rows[1].rfind("scene_", 0) == 0);

    const fs::path curve = work() / "curve.csv", plot = work() / "plot.csv";
    const Run e = cli("eval --detections " + dets.string() + " --annotations " + (data_dir() / "annotations.csv").string() +
                         " --out " + curve.string() + " --plot-data " + plot.string());
    CHECK(e.code == 0);
    const auto out = lines(e.out);
    REQUIRE(out.size() == 1);
    CHECK(out[0].rfind("LAMR=", 0) == 0);
    const double lamr = std::stod(out[0].substr(5));
    CHECK(lamr >= kMissRateFloor);
    CHECK(lamr <= 1.0);
    CHECK(lines(slurp(curve))[0] == "threshold,fppi,miss_rate");
    CHECK(lines(slurp(plot)).size() > 2);

    const Run bad = cli("detect --model " + (work() / "nope.json").string() + " " + blank.string());
    CHECK(bad.code == 1);
    CHECK(bad.err.rfind("error: IoError:", 0) == 0);

    const fs::path dump = work() / "dump";
    CHECK(cli("detect --model " + model_path().string() + " --dump-channels " + dump.string() + " " + blank.string()).code == 0);
    CHECK(fs::exists(dump / "blank" / "O1.pgm"));
    CHECK(fs::exists(dump / "blank" / "ranges.txt"));
}

TEST_CASE("analyze-sidf and bench commands") {
    const Run a = cli("analyze-sidf --model " + model_path().string() + " --data " + data_dir().string());
    CHECK(a.code == 0);
    const auto out = lines(a.out);
    REQUIRE(out.size() == 4);
    CHECK(out[0] == "class,count,percent");
    CHECK(out[1].rfind("CI,", 0) == 0);
    CHECK(out[2].rfind("BP,", 0) == 0);
    CHECK(out[3].rfind("O,", 0) == 0);

    const Run b = cli("bench --model " + model_path().string() + " --repeats 1 " + (data_dir() / "scene_0001.ppm").string());
    CHECK(b.code == 0);
    std::size_t windows = 0, total = 0;
    bool in_hist = false;
    for (const auto& l : lines(b.out)) {
        if (l.rfind("windows=", 0) == 0) windows = std::stoul(l.substr(8));
        if (l == "rejection_depth,count") {
            in_hist = true;
            continue;
        }
        if (in_hist) total += std::stoul(l.substr(l.find(',') + 1));
    }
    CHECK(windows > 0);
    CHECK(total == windows);
}

TEST_CASE("configuration errors") {
    const Run unknown = cli("--set train.bogus=1 pool --out " + (work() / "x.json").string());
    CHECK(unknown.code == 1);
    CHECK(unknown.err.rfind("error: ConfigError:", 0) == 0);
    const Run preset = cli("--preset nope pool --out " + (work() / "x.json").string());
    CHECK(preset.code == 1);
    const Run flag = cli("pool --frobnicate");
    CHECK(flag.code == 2);
    CHECK(flag.err.rfind("error: ConfigError:", 0) == 0);
    const Run none = cli("");
    CHECK(none.code != 0);

    const fs::path cfg = work() / "run.cfg";
    std::ofstream(cfg) << "preset = nf-only\nseed = 4\n";
    const fs::path p = work() / "cfg_pool.json";
    REQUIRE(cli("--config " + cfg.string() + " pool --out " + p.string()).code == 0);
    const FeaturePool pool = load_pool(p);
    CHECK(pool.seed == 4);
    CHECK(pool.count(FeatureKind::Ssf) == 0);
    // flags win over the file
    REQUIRE(cli("--config " + cfg.string() + " --seed 8 pool --out " + p.string()).code == 0);
    CHECK(load_pool(p).seed == 8);

    // --preset swaps the preset but keeps the file's other keys
    std::ofstream(cfg) << "pool.neighbor_diff = 50\n";
    REQUIRE(cli("--config " + cfg.string() + " --preset nf-only pool --out " + p.string()).code == 0);
    const FeaturePool swapped = load_pool(p);
    CHECK(swapped.count(FeatureKind::NeighborDiff) == 50);
    CHECK(swapped.count(FeatureKind::Sidf) == 0);
    REQUIRE(cli("--config " + cfg.string() + " pool --out " + p.string()).code == 0);
    CHECK(load_pool(p).count(FeatureKind::Sidf) > 0);
    CHECK(cli("--config " + (work() / "missing.cfg").string() + " pool --out " + p.string()).code == 1);
}
