#include "nnfdet/model_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nnfdet/error.hpp"

namespace nnfdet {

using json = nlohmann::ordered_json;

namespace {

json patch_to_json(const Patch& p) { return json::array({p.x, p.y, p.w, p.h}); }

Patch patch_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) fail(ErrorCode::FormatError, "patch must be [x, y, w, h]");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

json descriptor_to_json(const FeatureDescriptor& d) {
    json j;
    j["kind"] = to_string(d.kind);
    j["channel"] = d.channel;
    json patches = json::array({patch_to_json(d.a)});
    if (d.kind == FeatureKind::NeighborDiff || d.kind == FeatureKind::Sidf) patches.push_back(patch_to_json(d.b));
    j["patches"] = patches;
    if (d.kind == FeatureKind::Ssf) {
        json subs = json::array();
        for (const auto& s : d.sub) subs.push_back(patch_to_json(s));
        j["subpatches"] = subs;
    }
    if (d.kind == FeatureKind::NeighborDiff)
        j["direction"] = d.direction == SplitDirection::Vertical ? "vertical" : "horizontal";
    return j;
}

FeatureDescriptor descriptor_from_json(const json& j) {
    FeatureDescriptor d;
    const auto kind = parse_feature_kind(j.at("kind").get<std::string>());
    if (!kind) fail(ErrorCode::FormatError, "unknown feature kind " + j.at("kind").dump());
    d.kind = *kind;
    d.channel = j.at("channel").get<int>();
    if (d.channel < 0 || d.channel >= kNumChannels) fail(ErrorCode::FormatError, "channel out of range");
    const json& patches = j.at("patches");
    const bool pair = d.kind == FeatureKind::NeighborDiff || d.kind == FeatureKind::Sidf;
    if (!patches.is_array() || patches.size() != (pair ? 2u : 1u))
        fail(ErrorCode::FormatError, "wrong patch count for " + std::string(to_string(d.kind)));
    d.a = patch_from_json(patches[0]);
    if (pair) d.b = patch_from_json(patches[1]);
    if (d.kind == FeatureKind::Ssf) {
        const json& subs = j.at("subpatches");
        if (!subs.is_array() || subs.size() != 3) fail(ErrorCode::FormatError, "ssf needs 3 subpatches");
        for (int i = 0; i < 3; ++i) d.sub[static_cast<std::size_t>(i)] = patch_from_json(subs[static_cast<std::size_t>(i)]);
    }
    if (d.kind == FeatureKind::NeighborDiff) {
        const std::string dir = j.at("direction").get<std::string>();
        if (dir == "vertical")
            d.direction = SplitDirection::Vertical;
        else if (dir == "horizontal")
            d.direction = SplitDirection::Horizontal;
        else
            fail(ErrorCode::FormatError, "unknown direction " + dir);
    }
    return d;
}

json pool_to_json(const FeaturePool& pool) {
    json j;
    j["version"] = kPoolFormatVersion;
    j["template_w"] = pool.template_w;
    j["template_h"] = pool.template_h;
    j["seed"] = pool.seed;
    json descs = json::array();
    for (const auto& d : pool.descriptors) descs.push_back(descriptor_to_json(d));
    j["descriptors"] = std::move(descs);
    return j;
}

FeaturePool pool_from_json(const json& j) {
    if (j.at("version").get<int>() != kPoolFormatVersion)
        fail(ErrorCode::FormatError, "unsupported pool version " + j.at("version").dump());
    FeaturePool pool;
    pool.template_w = j.at("template_w").get<int>();
    pool.template_h = j.at("template_h").get<int>();
    pool.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& d : j.at("descriptors")) pool.descriptors.push_back(descriptor_from_json(d));
    return pool;
}

// -inf has no JSON spelling; null stands for "never reject".
json threshold_to_json(float t) { return std::isinf(t) && t < 0 ? json(nullptr) : json(t); }
float threshold_from_json(const json& j) { return j.is_null() ? kNoRejection : j.get<float>(); }

template <class Fn>
auto guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("malformed document: ") + e.what());
    }
}

} // namespace

std::string serialize_pool(const FeaturePool& pool) { return pool_to_json(pool).dump(1) + "\n"; }

FeaturePool deserialize_pool(const std::string& text) {
    return guarded([&] { return pool_from_json(json::parse(text)); });
}

std::string serialize_model(const BoostedModel& model) {
    json j;
    j["version"] = kModelFormatVersion;
    const ModelGeometry& g = model.geometry;
    j["template"] = {{"width_px", g.template_w_px}, {"height_px", g.template_h_px},
                     {"object_box", json::array({g.object_x, g.object_y, g.object_w, g.object_h})}};
    j["cell_size"] = g.cell_size;
    const LuvScale& s = model.channels.luv;
    const json luv = {{"l_offset", s.l_offset}, {"l_range", s.l_range}, {"u_offset", s.u_offset},
                      {"u_range", s.u_range},   {"v_offset", s.v_offset}, {"v_range", s.v_range}};
    j["channel_config"] = {{"luv_scale", luv},
                           {"gradient_norm_radius", model.channels.norm_radius},
                           {"gradient_norm_eps", model.channels.norm_eps}};
    j["normalization"] = {
        {"enabled", model.norm.enabled}, {"epsilon", model.norm.epsilon}, {"stats", "l_cells"}, {"luv_scale", luv}};
    j["pool"] = pool_to_json(model.pool);
    json trees = json::array();
    for (const auto& t : model.trees) {
        json nodes = json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf())
                nodes.push_back({{"score", n.score}});
            else
                nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}});
        }
        trees.push_back({{"depth", t.depth}, {"nodes", std::move(nodes)}});
    }
    j["trees"] = std::move(trees);
    json cascade = json::array();
    for (float c : model.cascade) cascade.push_back(threshold_to_json(c));
    j["cascade_thresholds"] = std::move(cascade);
    return j.dump(1) + "\n";
}

BoostedModel deserialize_model(const std::string& text) {
    return guarded([&] {
        const json j = json::parse(text);
        if (!j.contains("version") || j.at("version").get<int>() != kModelFormatVersion)
            fail(ErrorCode::FormatError,
                 "unsupported model version " + (j.contains("version") ? j.at("version").dump() : "<missing>"));
        BoostedModel m;
        const json& t = j.at("template");
        m.geometry.template_w_px = t.at("width_px").get<int>();
        m.geometry.template_h_px = t.at("height_px").get<int>();
        const json& ob = t.at("object_box");
        m.geometry.object_x = ob.at(0).get<int>();
        m.geometry.object_y = ob.at(1).get<int>();
        m.geometry.object_w = ob.at(2).get<int>();
        m.geometry.object_h = ob.at(3).get<int>();
        m.geometry.cell_size = j.at("cell_size").get<int>();
        if (m.geometry.cell_size < 1) fail(ErrorCode::FormatError, "cell_size must be >= 1");

        const json& cc = j.at("channel_config");
        const json& luv = cc.at("luv_scale");
        m.channels.luv = {luv.at("l_offset").get<float>(), luv.at("l_range").get<float>(),
                          luv.at("u_offset").get<float>(), luv.at("u_range").get<float>(),
                          luv.at("v_offset").get<float>(), luv.at("v_range").get<float>()};
        m.channels.norm_radius = cc.at("gradient_norm_radius").get<int>();
        m.channels.norm_eps = cc.at("gradient_norm_eps").get<float>();
        const json& nm = j.at("normalization");
        m.norm.enabled = nm.at("enabled").get<bool>();
        m.norm.epsilon = nm.at("epsilon").get<double>();

        m.pool = pool_from_json(j.at("pool"));
        if (m.pool.template_w != m.geometry.cells_w() || m.pool.template_h != m.geometry.cells_h())
            fail(ErrorCode::FormatError, "pool template does not match model geometry");

        for (const auto& jt : j.at("trees")) {
            DecisionTree tree;
            tree.depth = jt.at("depth").get<int>();
            for (const auto& jn : jt.at("nodes")) {
                TreeNode n;
                if (jn.contains("score")) {
                    n.score = jn.at("score").get<float>();
                } else {
                    n.feature = jn.at("feature").get<std::int32_t>();
                    n.threshold = jn.at("threshold").get<float>();
                    if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= m.pool.size())
                        fail(ErrorCode::FormatError, "tree references a feature outside the pool");
                }
                tree.nodes.push_back(n);
            }
            if (tree.depth < 1 || tree.nodes.size() != (std::size_t{2} << tree.depth) - 1)
                fail(ErrorCode::FormatError, "tree node count does not match its depth");
            m.trees.push_back(std::move(tree));
        }
        for (const auto& c : j.at("cascade_thresholds")) m.cascade.push_back(threshold_from_json(c));
        if (m.cascade.size() != m.trees.size())
            fail(ErrorCode::FormatError, "cascade threshold count must equal tree count");
        return m;
    });
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(ErrorCode::IoError, "read failed: " + path.string());
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorCode::IoError, "write failed: " + path.string());
}

void save_pool(const std::filesystem::path& path, const FeaturePool& pool) { write_text_file(path, serialize_pool(pool)); }
FeaturePool load_pool(const std::filesystem::path& path) { return deserialize_pool(read_text_file(path)); }

void save_model(const std::filesystem::path& path, const BoostedModel& model) {
    write_text_file(path, serialize_model(model));
}
BoostedModel load_model(const std::filesystem::path& path) { return deserialize_model(read_text_file(path)); }

} // namespace nnfdet
