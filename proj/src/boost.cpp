#include "nnfdet/boost.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "nnfdet/error.hpp"
#include "nnfdet/random.hpp"

namespace nnfdet {

float QuantizedData::edge(std::size_t f, int t) const {
    if (degenerate[f]) return std::numeric_limits<float>::max();
    const float lo = min[f], hi = max[f];
    return lo + static_cast<float>(t + 1) * ((hi - lo) / 255.f);
}

QuantizedData quantize(const FeatureMatrix& features) {
    QuantizedData q;
    q.n_samples = features.n_samples;
    q.n_features = features.n_features;
    q.bins.assign(q.n_samples * q.n_features, 0);
    q.min.assign(q.n_features, 0.f);
    q.max.assign(q.n_features, 0.f);
    q.degenerate.assign(q.n_features, 1);
    if (q.n_samples == 0) return q;

    for (std::size_t f = 0; f < q.n_features; ++f) {
        q.min[f] = q.max[f] = features.at(0, f);
    }
    for (std::size_t i = 0; i < q.n_samples; ++i) {
        const float* row = features.row(i);
        for (std::size_t f = 0; f < q.n_features; ++f) {
            if (!std::isfinite(row[f])) fail(ErrorCode::InvalidArgument, "non-finite feature value");
            q.min[f] = std::min(q.min[f], row[f]);
            q.max[f] = std::max(q.max[f], row[f]);
        }
    }

    std::array<float, kNumBins - 1> edges{};
    for (std::size_t f = 0; f < q.n_features; ++f) {
        const float lo = q.min[f], hi = q.max[f];
        if (!(hi > lo)) continue;
        q.degenerate[f] = 0;
        for (int t = 0; t < kNumBins - 1; ++t) edges[t] = q.edge(f, t);
        const double scale = 255.0 / (static_cast<double>(hi) - lo);
        std::uint8_t* out = &q.bins[f * q.n_samples];
        for (std::size_t i = 0; i < q.n_samples; ++i) {
            const float x = features.at(i, f);
            int b = static_cast<int>(std::floor((static_cast<double>(x) - lo) * scale));
            b = std::clamp(b, 0, kNumBins - 1);
            // Snap to the float edges so bin <= t holds exactly when x < edge(t).
            while (b < kNumBins - 1 && x >= edges[b]) ++b;
            while (b > 0 && x < edges[b - 1]) --b;
            out[i] = static_cast<std::uint8_t>(b);
        }
    }
    return q;
}

namespace {

struct Split {
    double error = std::numeric_limits<double>::infinity();
    std::int32_t feature = -1;
    int bin = 0;
};

struct ClassWeights {
    double pos = 0.0;
    double neg = 0.0;
};

float leaf_score(const ClassWeights& w, double eps) {
    return static_cast<float>(0.5 * std::log((w.pos + eps) / (w.neg + eps)));
}

Split best_split(const QuantizedData& data, std::span<const std::int8_t> labels, std::span<const double> weights,
                 std::span<const std::uint32_t> samples, std::span<const std::uint32_t> candidates,
                 const ClassWeights& total) {
    Split best;
    std::array<double, kNumBins> hist_pos{}, hist_neg{};
    for (std::uint32_t f : candidates) {
        if (data.degenerate[f]) continue;
        hist_pos.fill(0.0);
        hist_neg.fill(0.0);
        const std::uint8_t* col = &data.bins[static_cast<std::size_t>(f) * data.n_samples];
        for (std::uint32_t i : samples) {
            if (labels[i] > 0)
                hist_pos[col[i]] += weights[i];
            else
                hist_neg[col[i]] += weights[i];
        }
        double left_pos = 0.0, left_neg = 0.0;
        for (int t = 0; t < kNumBins - 1; ++t) {
            left_pos += hist_pos[t];
            left_neg += hist_neg[t];
            const double err = std::min(left_pos, left_neg) +
                               std::min(total.pos - left_pos, total.neg - left_neg);
            if (err < best.error) {
                best.error = err;
                best.feature = static_cast<std::int32_t>(f);
                best.bin = t;
            }
        }
    }
    return best;
}

} // namespace

DecisionTree train_tree(const QuantizedData& data, std::span<const std::int8_t> labels,
                        std::span<const double> weights, std::span<const std::uint32_t> candidates, int depth,
                        double leaf_eps) {
    if (depth < 1 || depth > 8) fail(ErrorCode::InvalidArgument, "tree depth must lie in [1, 8]");
    if (labels.size() != data.n_samples || weights.size() != data.n_samples)
        fail(ErrorCode::InvalidArgument, "labels/weights size mismatch");
    if (candidates.empty()) fail(ErrorCode::InvalidArgument, "empty candidate feature set");
    for (std::uint32_t f : candidates)
        if (f >= data.n_features) fail(ErrorCode::OutOfBounds, "candidate feature out of range");

    const std::size_t n_nodes = (std::size_t{1} << (depth + 1)) - 1;
    const std::size_t first_leaf = (std::size_t{1} << depth) - 1;
    DecisionTree tree;
    tree.depth = depth;
    tree.nodes.resize(n_nodes);

    std::vector<std::vector<std::uint32_t>> members(n_nodes);
    std::vector<ClassWeights> mass(n_nodes);
    std::vector<bool> empty(n_nodes, false);
    members[0].resize(data.n_samples);
    std::iota(members[0].begin(), members[0].end(), 0u);
    for (std::size_t i = 0; i < data.n_samples; ++i) {
        if (weights[i] < 0.0) fail(ErrorCode::InvalidArgument, "negative sample weight");
        (labels[i] > 0 ? mass[0].pos : mass[0].neg) += weights[i];
    }
    if (mass[0].pos + mass[0].neg <= 0.0) fail(ErrorCode::InvalidArgument, "weights sum to zero");

    for (std::size_t node = 0; node < first_leaf; ++node) {
        TreeNode& n = tree.nodes[node];
        const std::size_t left = 2 * node + 1, right = 2 * node + 2;
        Split split;
        if (!empty[node]) split = best_split(data, labels, weights, members[node], candidates, mass[node]);
        if (split.feature < 0) {
            // nothing to split: route everything left, children inherit this node's mass
            n.feature = static_cast<std::int32_t>(candidates.front());
            n.threshold = std::numeric_limits<float>::max();
            members[left] = std::move(members[node]);
            mass[left] = mass[node];
            empty[left] = empty[node];
            mass[right] = mass[node];
            empty[right] = true;
            continue;
        }
        n.feature = split.feature;
        n.threshold = data.edge(static_cast<std::size_t>(split.feature), split.bin);
        const std::uint8_t* col = &data.bins[static_cast<std::size_t>(split.feature) * data.n_samples];
        for (std::uint32_t i : members[node]) {
            const std::size_t child = col[i] <= split.bin ? left : right;
            members[child].push_back(i);
            (labels[i] > 0 ? mass[child].pos : mass[child].neg) += weights[i];
        }
        members[node].clear();
        members[node].shrink_to_fit();
        for (std::size_t child : {left, right}) {
            if (members[child].empty()) {
                empty[child] = true;
                mass[child] = mass[node];
            }
        }
    }
    for (std::size_t node = first_leaf; node < n_nodes; ++node) {
        tree.nodes[node].feature = -1;
        tree.nodes[node].score = leaf_score(mass[node], leaf_eps);
    }
    return tree;
}

std::vector<std::uint32_t> sample_candidates(std::size_t n_features, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) fail(ErrorCode::InvalidArgument, "feature_fraction must lie in (0, 1]");
    std::vector<std::uint32_t> all(n_features);
    std::iota(all.begin(), all.end(), 0u);
    const std::size_t k =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(n_features * fraction)), 1, n_features);
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                                static_cast<std::int64_t>(n_features - 1)));
        std::swap(all[i], all[j]);
    }
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
}

namespace {

float tree_output_binned(const DecisionTree& tree, const QuantizedData& data, std::size_t sample) {
    std::size_t i = 0;
    while (!tree.nodes[i].is_leaf()) {
        const TreeNode& n = tree.nodes[i];
        const auto f = static_cast<std::size_t>(n.feature);
        // threshold == edge(f, t) and bin <= t <=> value < edge(f, t); degenerate
        // columns carry the max-float sentinel and always go left.
        bool go_left;
        if (data.degenerate[f]) {
            go_left = true;
        } else {
            const std::uint8_t b = data.bin(sample, f);
            go_left = b == 0 || data.edge(f, b - 1) < n.threshold;
        }
        i = 2 * i + (go_left ? 1 : 2);
    }
    return tree.nodes[i].score;
}

} // namespace

BoostResult boost(const QuantizedData& data, std::span<const std::int8_t> labels, const BoostConfig& cfg) {
    if (labels.size() != data.n_samples) fail(ErrorCode::InvalidArgument, "labels size mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (auto y : labels) (y > 0 ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) fail(ErrorCode::InsufficientData, "boosting needs both positives and negatives");
    if (cfg.n_trees < 1) fail(ErrorCode::InvalidArgument, "n_trees must be >= 1");

    const std::size_t n = data.n_samples;
    std::vector<double> weights(n);
    for (std::size_t i = 0; i < n; ++i) weights[i] = labels[i] > 0 ? 0.5 / n_pos : 0.5 / n_neg;
    std::vector<double> margin(n, 0.0);

    BoostResult result;
    result.trees.reserve(static_cast<std::size_t>(cfg.n_trees));
    for (int t = 0; t < cfg.n_trees; ++t) {
        const auto candidates =
            sample_candidates(data.n_features, cfg.feature_fraction, derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
        DecisionTree tree = train_tree(data, labels, weights, candidates, cfg.depth, cfg.leaf_eps);

        double sum = 0.0;
        std::size_t errors = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double h = tree_output_binned(tree, data, i);
            margin[i] += h;
            weights[i] *= std::exp(-labels[i] * h);
            sum += weights[i];
            if ((margin[i] > 0.0) != (labels[i] > 0)) ++errors;
        }
        for (auto& w : weights) w /= sum;
        const double check = std::accumulate(weights.begin(), weights.end(), 0.0);
        result.trace.weight_sum_error.push_back(std::abs(check - 1.0));
        result.trace.train_error.push_back(static_cast<double>(errors) / n);
        result.trees.push_back(std::move(tree));
    }
    return result;
}

namespace {

double quantile_value(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size())));
    return values[std::min(idx, values.size() - 1)];
}

} // namespace

std::vector<float> set_cascade(const std::vector<std::vector<double>>& running, const CascadeParams& params) {
    if (running.empty()) fail(ErrorCode::InsufficientData, "cascade calibration needs positives");
    const std::size_t n_trees = running.front().size();
    std::vector<float> thresholds(n_trees);
    std::vector<double> stage(running.size());
    for (std::size_t t = 0; t < n_trees; ++t) {
        for (std::size_t p = 0; p < running.size(); ++p) stage[p] = running[p][t];
        // min over the positives at or above the drop quantile is the quantile itself
        const double floor_value = quantile_value(stage, params.drop_quantile);
        thresholds[t] = static_cast<float>(floor_value - params.margin);
    }
    return thresholds;
}

std::vector<bool> retained_positives(const std::vector<std::vector<double>>& running, const CascadeParams& params) {
    std::vector<bool> kept(running.size(), true);
    if (running.empty()) return kept;
    const std::size_t n_trees = running.front().size();
    std::vector<double> stage(running.size());
    for (std::size_t t = 0; t < n_trees; ++t) {
        for (std::size_t p = 0; p < running.size(); ++p) stage[p] = running[p][t];
        const double floor_value = quantile_value(stage, params.drop_quantile);
        for (std::size_t p = 0; p < running.size(); ++p)
            if (running[p][t] < floor_value) kept[p] = false;
    }
    return kept;
}

WindowScore score_window_unchecked(const BoostedModel& model, const IntegralStack& is, int wx, int wy) {
    const int tw = model.pool.template_w;
    const int th = model.pool.template_h;
    const NormStats ns = window_stats(is, CellRect{wx, wy, tw, th});
    WindowScore out;
    double running = 0.0;
    const auto& descriptors = model.pool.descriptors;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        running += model.trees[t].evaluate([&](std::int32_t f) {
            return evaluate_unchecked(is, descriptors[static_cast<std::size_t>(f)], wx, wy, ns, tw, model.norm);
        });
        if (running < model.cascade[t]) {
            out.score = running;
            out.rejected_at = static_cast<int>(t);
            return out;
        }
    }
    out.score = running;
    return out;
}

WindowScore score_window(const BoostedModel& model, const IntegralStack& is, const CellRect& win) {
    if (win.w != model.pool.template_w || win.h != model.pool.template_h)
        fail(ErrorCode::InvalidArgument, "window size must equal the model template");
    if (!is.contains(win)) fail(ErrorCode::OutOfBounds, "window outside integral stack");
    if (model.cascade.size() != model.trees.size())
        fail(ErrorCode::InvalidArgument, "cascade threshold count must equal tree count");
    return score_window_unchecked(model, is, win.x, win.y);
}

double score_features(const BoostedModel& model, std::span<const float> pool_values) {
    if (pool_values.size() != model.pool.size()) fail(ErrorCode::InvalidArgument, "feature vector size mismatch");
    double sum = 0.0;
    for (const auto& tree : model.trees) sum += tree.evaluate_row(pool_values.data());
    return sum;
}

std::vector<std::uint32_t> used_features(const std::vector<DecisionTree>& trees) {
    std::vector<std::uint32_t> out;
    for (const auto& tree : trees)
        for (const auto& n : tree.nodes)
            if (!n.is_leaf()) out.push_back(static_cast<std::uint32_t>(n.feature));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace nnfdet
