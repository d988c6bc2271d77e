#include "nnfdet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "nnfdet/error.hpp"
#include "nnfdet/parallel.hpp"

namespace nnfdet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    fail(ErrorCode::ConfigError, "invalid value '" + value + "' for " + key);
}

template <class T>
T parse_int(const std::string& key, const std::string& value) {
    T out{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) bad_value(key, value);
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    // accept fractions such as 1/32
    const auto slash = value.find('/');
    if (slash != std::string::npos) {
        const double den = parse_double(key, value.substr(slash + 1));
        if (den == 0.0) bad_value(key, value);
        return parse_double(key, value.substr(0, slash)) / den;
    }
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) bad_value(key, value);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    bad_value(key, value);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
    if (out.empty()) bad_value(key, value);
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <class T>
Setter int_setter(T RunConfig::*group, int T::*field) {
    return [group, field](RunConfig& c, const std::string& k, const std::string& v) {
        (c.*group).*field = parse_int<int>(k, v);
    };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_int<std::uint64_t>(k, v); }},
        {"jobs", [](RunConfig& c, const std::string& k, const std::string& v) { c.jobs = parse_int<int>(k, v); }},
        {"pool.local_mean", [](RunConfig& c, const std::string& k, const std::string& v) { c.pool.counts[0] = parse_int<int>(k, v); }},
        {"pool.neighbor_diff", [](RunConfig& c, const std::string& k, const std::string& v) { c.pool.counts[1] = parse_int<int>(k, v); }},
        {"pool.sidf", [](RunConfig& c, const std::string& k, const std::string& v) { c.pool.counts[2] = parse_int<int>(k, v); }},
        {"pool.ssf", [](RunConfig& c, const std::string& k, const std::string& v) { c.pool.counts[3] = parse_int<int>(k, v); }},
        {"pool.max_square", int_setter(&RunConfig::pool, &PoolConfig::max_square)},
        {"pool.ssf_min", int_setter(&RunConfig::pool, &PoolConfig::ssf_min)},
        {"pool.ssf_max", int_setter(&RunConfig::pool, &PoolConfig::ssf_max)},
        {"train.rounds", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.rounds = parse_int_list(k, v); }},
        {"train.tree_depth", int_setter(&RunConfig::train, &TrainConfig::tree_depth)},
        {"train.feature_fraction",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.feature_fraction = parse_double(k, v); }},
        {"train.initial_negatives", int_setter(&RunConfig::train, &TrainConfig::initial_negatives)},
        {"train.negatives_per_round", int_setter(&RunConfig::train, &TrainConfig::negatives_per_round)},
        {"train.negative_cap", int_setter(&RunConfig::train, &TrainConfig::negative_cap)},
        {"train.mining_per_image", int_setter(&RunConfig::train, &TrainConfig::mining_per_image)},
        {"train.positive_jitter", int_setter(&RunConfig::train, &TrainConfig::positive_jitter)},
        {"train.exclusion_iou",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.exclusion_iou = parse_double(k, v); }},
        {"train.mirror_positives",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.mirror_positives = parse_bool(k, v); }},
        {"cascade.margin", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.cascade.margin = parse_double(k, v); }},
        {"cascade.drop_quantile",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.cascade.drop_quantile = parse_double(k, v); }},
        {"norm.enabled", [](RunConfig& c, const std::string& k, const std::string& v) { c.norm.enabled = parse_bool(k, v); }},
        {"norm.epsilon", [](RunConfig& c, const std::string& k, const std::string& v) { c.norm.epsilon = parse_double(k, v); }},
        {"detect.stride", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.detect.stride_px = parse_int<int>(k, v); }},
        {"detect.scales_per_octave",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.detect.pyramid.scales_per_octave = parse_int<int>(k, v); }},
        {"detect.upsample_octaves",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.detect.pyramid.octaves_up = parse_int<int>(k, v); }},
        {"detect.threshold", [](RunConfig& c, const std::string& k, const std::string& v) { c.train.detect.threshold = parse_double(k, v); }},
        {"detect.nms_overlap",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.train.detect.nms_overlap = parse_double(k, v); }},
        {"synth.width", int_setter(&RunConfig::synth, &SynthParams::width)},
        {"synth.height", int_setter(&RunConfig::synth, &SynthParams::height)},
        {"synth.targets", int_setter(&RunConfig::synth, &SynthParams::n_targets)},
        {"synth.clutter", int_setter(&RunConfig::synth, &SynthParams::clutter)},
        {"synth.min_target_h", int_setter(&RunConfig::synth, &SynthParams::min_target_h)},
        {"synth.max_target_h", int_setter(&RunConfig::synth, &SynthParams::max_target_h)},
        {"synth.noise_sigma", [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.noise_sigma = parse_double(k, v); }},
    };
    return table;
}

} // namespace

std::vector<std::string> preset_names() { return {"nnnf-l2", "nnnf-l4", "nf-only", "nnnf-no-norm"}; }

RunConfig preset_config(const std::string& name) {
    RunConfig c;
    c.preset = name;
    // candidate pool weighted like the selected-feature mix: ~70% NF, ~19% SIDF, ~11% SSF
    c.pool.counts = {7000, 21000, 7500, 4500};
    if (name == "nnnf-l2") return c;
    if (name == "nnnf-l4") {
        c.train.tree_depth = 4;
        c.train.feature_fraction = 0.5;
        c.train.negatives_per_round = 20000;
        c.train.negative_cap = 50000;
        return c;
    }
    if (name == "nf-only") {
        c.pool.counts[static_cast<int>(FeatureKind::Sidf)] = 0;
        c.pool.counts[static_cast<int>(FeatureKind::Ssf)] = 0;
        return c;
    }
    if (name == "nnnf-no-norm") {
        c.norm.enabled = false;
        return c;
    }
    fail(ErrorCode::ConfigError, "unknown preset '" + name + "'");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "preset") {
        RunConfig fresh = preset_config(value);
        fresh.seed = cfg.seed;
        fresh.jobs = cfg.jobs;
        cfg = std::move(fresh);
        return;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) fail(ErrorCode::ConfigError, "unknown config key '" + key + "'");
    it->second(cfg, key, value);
}

RunConfig parse_config(std::istream& in, const std::string& source) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string raw;
    std::size_t line_no = 0;
    std::string preset = "nnnf-l2";
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::ConfigError, source + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key == "preset")
            preset = value;
        else
            entries.emplace_back(key, value);
    }
    RunConfig cfg = preset_config(preset);
    for (const auto& [k, v] : entries) apply_setting(cfg, k, v);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open config " + path.string());
    return parse_config(in, path.string());
}

ModelSetup make_setup(const RunConfig& cfg) {
    ModelSetup s;
    PoolConfig pc = cfg.pool;
    pc.template_w = s.geometry.cells_w();
    pc.template_h = s.geometry.cells_h();
    pc.seed = cfg.seed;
    s.pool = gen_pool(pc);
    s.norm = cfg.norm;
    return s;
}

TrainConfig effective_train_config(const RunConfig& cfg) {
    TrainConfig t = cfg.train;
    t.seed = cfg.seed;
    t.jobs = cfg.jobs > 0 ? cfg.jobs : default_jobs();
    t.detect.jobs = 1;
    if (t.feature_fraction <= 0.0 || t.feature_fraction > 1.0)
        fail(ErrorCode::ConfigError, "train.feature_fraction must be in (0, 1]");
    if (t.tree_depth < 1 || t.tree_depth > 4) fail(ErrorCode::ConfigError, "train.tree_depth must be in 1..4");
    return t;
}

} // namespace nnfdet
