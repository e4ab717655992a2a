// Copyright 2026 The aknn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.

#include "aknn/metak.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include <fmt/core.h>

#include "aknn/util.hpp"

namespace aknn {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr std::string_view kCheckpointMagic = "ADKNNMK1";

// Scratch buffers for one forward/backward pass.
struct Workspace {
    std::vector<double> x;
    std::vector<double> pre;
    std::vector<double> h;
    std::vector<double> z;
    std::vector<double> dz;
    std::vector<double> dh;

    explicit Workspace(const MetakParams& p)
        : x(p.inputs()), pre(p.hidden()), h(p.hidden()), z(p.outputs()), dz(p.outputs()), dh(p.hidden()) {}
};

double activate(Activation act, double v) {
    return act == Activation::kRelu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
}

double activate_grad(Activation act, double pre, double post) {
    return act == Activation::kRelu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

// Fills ws.z with softmax probabilities.
void forward_into(const MetakModel& model, std::span<const double> features, Workspace& ws) {
    const auto& p = model.params;
    AKNN_THROW_IF_NOT(features.size() == p.inputs(), kShapeMismatch,
                      fmt::format("meta-k expects {} input features, got {}", p.inputs(), features.size()));
    if (model.config.standardize) {
        for (std::size_t i = 0; i < features.size(); ++i) {
            ws.x[i] = (features[i] - model.feature_mean[i]) * model.feature_scale[i];
        }
    } else {
        std::copy(features.begin(), features.end(), ws.x.begin());
    }
    const auto w1 = p.w1();
    const auto b1 = p.b1();
    for (std::size_t j = 0; j < p.hidden(); ++j) {
        double acc = b1[j];
        const double* row = w1.data() + j * p.inputs();
        for (std::size_t i = 0; i < p.inputs(); ++i) {
            acc += row[i] * ws.x[i];
        }
        ws.pre[j] = acc;
        ws.h[j] = activate(model.config.activation, acc);
    }
    const auto w2 = p.w2();
    const auto b2 = p.b2();
    double z_max = -std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < p.outputs(); ++o) {
        double acc = b2[o];
        const double* row = w2.data() + o * p.hidden();
        for (std::size_t j = 0; j < p.hidden(); ++j) {
            acc += row[j] * ws.h[j];
        }
        ws.z[o] = acc;
        z_max = std::max(z_max, acc);
    }
    double total = 0.0;
    for (auto& v : ws.z) {
        v = std::exp(v - z_max);
        total += v;
    }
    for (auto& v : ws.z) {
        v /= total;
    }
}

// Accumulates the gradient of -log(sum_j p_j q_j) into grad. Returns the loss
// and whether the floor was hit.
std::pair<double, bool> backward_accumulate(const MetakModel& model, std::span<const double> gold_probs,
                                            Workspace& ws, std::span<double> grad, double scale) {
    const auto& p = model.params;
    AKNN_THROW_IF_NOT(gold_probs.size() == p.outputs(), kShapeMismatch, "gold probabilities do not match choice set");
    double mix = 0.0;
    for (std::size_t o = 0; o < p.outputs(); ++o) {
        mix += ws.z[o] * gold_probs[o];
    }
    if (!(mix > kLogFloor)) {
        // Flat region of the clamp: no gradient.
        return {-std::log(kLogFloor), true};
    }
    for (std::size_t o = 0; o < p.outputs(); ++o) {
        ws.dz[o] = -ws.z[o] * (gold_probs[o] - mix) / mix;
    }

    const std::size_t w2_off = p.hidden() * p.inputs() + p.hidden();
    const std::size_t b2_off = w2_off + p.outputs() * p.hidden();
    const std::size_t b1_off = p.hidden() * p.inputs();
    const auto w2 = p.w2();
    std::fill(ws.dh.begin(), ws.dh.end(), 0.0);
    for (std::size_t o = 0; o < p.outputs(); ++o) {
        const double g = ws.dz[o];
        grad[b2_off + o] += scale * g;
        double* grow = grad.data() + w2_off + o * p.hidden();
        const double* wrow = w2.data() + o * p.hidden();
        for (std::size_t j = 0; j < p.hidden(); ++j) {
            grow[j] += scale * g * ws.h[j];
            ws.dh[j] += g * wrow[j];
        }
    }
    for (std::size_t j = 0; j < p.hidden(); ++j) {
        const double g = ws.dh[j] * activate_grad(model.config.activation, ws.pre[j], ws.h[j]);
        if (g == 0.0) {
            continue;
        }
        grad[b1_off + j] += scale * g;
        double* grow = grad.data() + j * p.inputs();
        for (std::size_t i = 0; i < p.inputs(); ++i) {
            grow[i] += scale * g * ws.x[i];
        }
    }
    return {-std::log(mix), false};
}

void check_model(const MetakModel& model) {
    const std::size_t s = KChoices(model.config.max_k).size();
    AKNN_THROW_IF_NOT(model.params.inputs() == 2 * model.config.max_k && model.params.outputs() == s &&
                          model.params.hidden() == model.config.hidden,
                      kShapeMismatch, "meta-k parameters do not match the configured K and hidden size");
    if (model.config.standardize) {
        AKNN_THROW_IF_NOT(model.feature_mean.size() == model.params.inputs() &&
                              model.feature_scale.size() == model.params.inputs(),
                          kShapeMismatch, "meta-k standardization statistics have the wrong size");
    }
}

}  // namespace

std::string_view to_string(FeatureMask mask) {
    switch (mask) {
        case FeatureMask::kFull:
            return "full";
        case FeatureMask::kNoCounts:
            return "no-counts";
        case FeatureMask::kNoDistances:
            return "no-distances";
        case FeatureMask::kNone:
            return "none";
    }
    return "full";
}

std::string_view to_string(Activation act) {
    return act == Activation::kRelu ? "relu" : "tanh";
}

FeatureMask parse_feature_mask(std::string_view s) {
    if (s == "full") return FeatureMask::kFull;
    if (s == "no-counts") return FeatureMask::kNoCounts;
    if (s == "no-distances") return FeatureMask::kNoDistances;
    if (s == "none") return FeatureMask::kNone;
    throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown feature mask '{}'", s));
}

Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::kRelu;
    if (s == "tanh") return Activation::kTanh;
    throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown nonlinearity '{}'", s));
}

std::vector<double> MetaFeatures::concat() const {
    std::vector<double> out(distances);
    out.insert(out.end(), counts.begin(), counts.end());
    return out;
}

MetaFeatures extract_features(std::span<const Neighbor> neighbors, std::size_t max_k, FeatureMask mask) {
    AKNN_THROW_IF_NOT(neighbors.size() == max_k, kShapeMismatch,
                      fmt::format("meta-k features need exactly {} neighbors, got {}", max_k, neighbors.size()));
    MetaFeatures f;
    f.distances.resize(max_k);
    f.counts.resize(max_k);
    std::unordered_set<TokenId> seen;
    for (std::size_t i = 0; i < max_k; ++i) {
        f.distances[i] = neighbors[i].distance;
        seen.insert(neighbors[i].value);
        f.counts[i] = static_cast<double>(seen.size());
        AKNN_THROW_IF_NOT(i == 0 || f.distances[i] >= f.distances[i - 1], kInvalidArgument,
                          "neighbor distances must be non-decreasing");
    }
    if (mask == FeatureMask::kNoDistances || mask == FeatureMask::kNone) {
        std::fill(f.distances.begin(), f.distances.end(), 0.0);
    }
    if (mask == FeatureMask::kNoCounts || mask == FeatureMask::kNone) {
        std::fill(f.counts.begin(), f.counts.end(), 0.0);
    }
    return f;
}

MetakParams::MetakParams(std::size_t inputs, std::size_t hidden, std::size_t outputs)
    : inputs_(inputs), hidden_(hidden), outputs_(outputs), data_(hidden * inputs + hidden + outputs * hidden + outputs) {
    AKNN_THROW_IF_NOT(inputs > 0 && hidden > 0 && outputs > 0, kInvalidArgument, "meta-k layer sizes must be positive");
}

MetakParams MetakParams::glorot(std::size_t inputs, std::size_t hidden, std::size_t outputs, std::uint64_t seed) {
    MetakParams p(inputs, hidden, outputs);
    Rng rng(seed);
    const double a1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
    for (auto& w : p.w1()) {
        w = rng.uniform(-a1, a1);
    }
    const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + outputs));
    for (auto& w : p.w2()) {
        w = rng.uniform(-a2, a2);
    }
    return p;
}

MetakModel MetakModel::init(const MetakConfig& config) {
    const KChoices choices(config.max_k);
    AKNN_THROW_IF_NOT(config.hidden >= 1, kInvalidArgument, "meta-k hidden size must be >= 1");
    MetakModel m;
    m.config = config;
    m.params = MetakParams::glorot(2 * config.max_k, config.hidden, choices.size(), derive_seed(config.seed, 1));
    if (config.standardize) {
        m.feature_mean.assign(m.input_size(), 0.0);
        m.feature_scale.assign(m.input_size(), 1.0);
    }
    return m;
}

Distribution metak_forward(const MetakModel& model, std::span<const double> features) {
    check_model(model);
    Workspace ws(model.params);
    forward_into(model, features, ws);
    return ws.z;
}

Distribution metak_forward(const MetakModel& model, const MetaFeatures& features) {
    return metak_forward(model, features.concat());
}

Distribution aggregate(std::span<const double> p_meta, std::span<const Neighbor> neighbors,
                       std::span<const double> base_dist, double temperature) {
    const KChoices choices(neighbors.size());
    AKNN_THROW_IF_NOT(p_meta.size() == choices.size(), kShapeMismatch,
                      fmt::format("p_meta has {} entries, choice set for K={} has {}", p_meta.size(), neighbors.size(),
                                  choices.size()));
    Distribution out(base_dist.size(), 0.0);
    if (p_meta[0] != 0.0) {
        for (std::size_t v = 0; v < out.size(); ++v) {
            out[v] = p_meta[0] * base_dist[v];
        }
    }
    for (std::size_t i = 1; i < choices.size(); ++i) {
        if (p_meta[i] != 0.0) {
            add_knn_distribution(neighbors.first(choices[i]), temperature, p_meta[i], out);
        }
    }
    return out;
}

PreparedSample prepare_sample(std::span<const double> features, std::span<const Neighbor> neighbors,
                              double base_gold_prob, TokenId gold, double temperature, std::size_t group) {
    const KChoices choices(neighbors.size());
    AKNN_THROW_IF_NOT(features.size() == 2 * neighbors.size(), kShapeMismatch, "feature length must be 2K");
    AKNN_THROW_IF_NOT(temperature > 0.0, kInvalidArgument, "temperature must be positive");
    PreparedSample s;
    s.input.assign(features.begin(), features.end());
    s.group = group;
    s.gold_probs.resize(choices.size());
    s.gold_probs[0] = base_gold_prob;
    // Incremental softmax over growing prefixes: the shift is the nearest
    // distance for every prefix, so weights can be reused.
    const double d0 = neighbors.front().distance;
    double total = 0.0;
    double gold_mass = 0.0;
    std::size_t done = 0;
    for (std::size_t i = 1; i < choices.size(); ++i) {
        for (; done < choices[i]; ++done) {
            const double w = std::exp(-(neighbors[done].distance - d0) / temperature);
            total += w;
            if (neighbors[done].value == gold) {
                gold_mass += w;
            }
        }
        s.gold_probs[i] = gold_mass / total;
    }
    return s;
}

PreparedSample prepare_sample(const MetakSample& sample, double temperature, std::size_t group) {
    AKNN_THROW_IF_NOT(sample.gold < sample.base_dist.size(), kOutOfRange,
                      fmt::format("gold token {} outside vocab of size {}", sample.gold, sample.base_dist.size()));
    return prepare_sample(sample.features.concat(), sample.neighbors, sample.base_dist[sample.gold], sample.gold,
                          temperature, group);
}

LossAndGrad loss_and_grad(const MetakModel& model, std::span<const PreparedSample> batch) {
    check_model(model);
    AKNN_THROW_IF_NOT(!batch.empty(), kInvalidArgument, "loss_and_grad needs a non-empty batch");
    LossAndGrad out;
    out.grad.assign(model.params.size(), 0.0);
    Workspace ws(model.params);
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& s : batch) {
        forward_into(model, s.input, ws);
        auto [loss, clamped] = backward_accumulate(model, s.gold_probs, ws, out.grad, scale);
        out.loss += loss;
        out.clamped += clamped ? 1 : 0;
    }
    out.loss *= scale;
    return out;
}

LossAndGrad loss_and_grad(const MetakModel& model, std::span<const MetakSample> batch, double temperature) {
    std::vector<PreparedSample> prepared;
    prepared.reserve(batch.size());
    for (const auto& s : batch) {
        prepared.push_back(prepare_sample(s, temperature));
    }
    return loss_and_grad(model, prepared);
}

double mean_loss(const MetakModel& model, std::span<const PreparedSample> samples) {
    check_model(model);
    AKNN_THROW_IF_NOT(!samples.empty(), kInvalidArgument, "mean_loss needs samples");
    Workspace ws(model.params);
    double total = 0.0;
    for (const auto& s : samples) {
        forward_into(model, s.input, ws);
        double mix = 0.0;
        for (std::size_t o = 0; o < ws.z.size(); ++o) {
            mix += ws.z[o] * s.gold_probs[o];
        }
        total += -std::log(std::max(mix, kLogFloor));
    }
    return total / static_cast<double>(samples.size());
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    AKNN_THROW_IF_NOT(params.size() == grads.size() && params.size() == state.m.size(), kShapeMismatch,
                      "adam: params, grads and moments must have the same size");
    for (double g : grads) {
        AKNN_THROW_IF_NOT(std::isfinite(g), kNumeric, "adam: non-finite gradient");
    }
    const auto& o = state.options;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * grads[i];
        state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
}

TrainResult train_metak(std::span<const PreparedSample> train_set, const MetakConfig& config,
                        const TrainOptions& options) {
    AKNN_THROW_IF_NOT(!train_set.empty(), kInvalidArgument, "meta-k training set is empty");
    AKNN_THROW_IF_NOT(options.batch_size >= 1, kInvalidArgument, "batch size must be >= 1");
    TrainResult result;
    result.model = MetakModel::init(config);
    MetakModel& model = result.model;
    for (const auto& s : train_set) {
        AKNN_THROW_IF_NOT(s.input.size() == model.input_size() && s.gold_probs.size() == model.params.outputs(),
                          kShapeMismatch, "training sample shape does not match the meta-k configuration");
    }

    if (config.standardize) {
        const std::size_t n_in = model.input_size();
        std::vector<double> mean(n_in, 0.0);
        std::vector<double> sq(n_in, 0.0);
        for (const auto& s : train_set) {
            for (std::size_t i = 0; i < n_in; ++i) {
                mean[i] += s.input[i];
            }
        }
        for (auto& m : mean) {
            m /= static_cast<double>(train_set.size());
        }
        for (const auto& s : train_set) {
            for (std::size_t i = 0; i < n_in; ++i) {
                const double d = s.input[i] - mean[i];
                sq[i] += d * d;
            }
        }
        model.feature_mean = mean;
        model.feature_scale.resize(n_in);
        for (std::size_t i = 0; i < n_in; ++i) {
            const double sd = std::sqrt(sq[i] / static_cast<double>(train_set.size()));
            model.feature_scale[i] = sd > 1e-12 ? 1.0 / sd : 1.0;
        }
    }

    // Group samples by sentence; batches are drawn over groups.
    std::vector<std::size_t> group_ids;
    std::vector<std::vector<std::size_t>> members;
    {
        std::vector<std::pair<std::size_t, std::size_t>> keyed;
        keyed.reserve(train_set.size());
        for (std::size_t i = 0; i < train_set.size(); ++i) {
            keyed.emplace_back(train_set[i].group, i);
        }
        std::stable_sort(keyed.begin(), keyed.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [g, i] : keyed) {
            if (group_ids.empty() || group_ids.back() != g) {
                group_ids.push_back(g);
                members.emplace_back();
            }
            members.back().push_back(i);
        }
    }

    Rng rng(derive_seed(config.seed, 2));
    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    AdamState adam(model.params.size(), options.adam);
    std::vector<PreparedSample> batch;

    result.loss_curve.push_back({0, mean_loss(model, train_set)});
    for (std::size_t step = 1; step <= options.steps; ++step) {
        batch.clear();
        for (std::size_t b = 0; b < std::min(options.batch_size, order.size()); ++b) {
            if (cursor == order.size()) {
                for (std::size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[rng.uniform_index(i)]);
                }
                cursor = 0;
            }
            for (std::size_t idx : members[order[cursor++]]) {
                batch.push_back(train_set[idx]);
            }
        }
        auto lg = loss_and_grad(model, batch);
        result.clamped += lg.clamped;
        adam_step(adam, model.params.flat(), lg.grad);
        if (step % options.eval_every == 0 || step == options.steps) {
            result.loss_curve.push_back({step, mean_loss(model, train_set)});
        }
    }
    return result;
}

void save_metak(const MetakModel& model, const std::filesystem::path& path) {
    check_model(model);
    auto out = io::open_out(path);
    const auto& c = model.config;
    const std::string header =
        fmt::format("{}\nK {}\nH {}\nS {}\nnonlinearity {}\nfeature_mask {}\nseed {}\nstandardize {}\nend\n",
                    kCheckpointMagic, c.max_k, c.hidden, model.params.outputs(), to_string(c.activation),
                    to_string(c.mask), c.seed, c.standardize ? 1 : 0);
    io::write_bytes(out, header.data(), header.size());
    auto write_block = [&](std::span<const double> block) {
        std::vector<float> f(block.begin(), block.end());
        io::write_f32s(out, f);
    };
    write_block(model.params.w1());
    write_block(model.params.b1());
    write_block(model.params.w2());
    write_block(model.params.b2());
    if (c.standardize) {
        write_block(model.feature_mean);
        write_block(model.feature_scale);
    }
    out.flush();
    AKNN_THROW_IF_NOT(out.good(), kIo, fmt::format("failed writing '{}'", path.string()));
}

MetakModel load_metak(const std::filesystem::path& path) {
    auto in = io::open_in(path);
    std::string line;
    AKNN_THROW_IF_NOT(std::getline(in, line) && line == kCheckpointMagic, kCorrupt,
                      fmt::format("'{}' is not a meta-k checkpoint (bad magic)", path.string()));
    MetakConfig c;
    std::size_t s_size = 0;
    std::set<std::string> seen;
    bool ended = false;
    while (std::getline(in, line)) {
        if (line == "end") {
            ended = true;
            break;
        }
        std::istringstream fields(line);
        std::string key, value;
        AKNN_THROW_IF_NOT(fields >> key >> value, kCorrupt, fmt::format("malformed checkpoint header line '{}'", line));
        seen.insert(key);
        try {
            if (key == "K") {
                c.max_k = std::stoull(value);
            } else if (key == "H") {
                c.hidden = std::stoull(value);
            } else if (key == "S") {
                s_size = std::stoull(value);
            } else if (key == "nonlinearity") {
                c.activation = parse_activation(value);
            } else if (key == "feature_mask") {
                c.mask = parse_feature_mask(value);
            } else if (key == "seed") {
                c.seed = std::stoull(value);
            } else if (key == "standardize") {
                c.standardize = value == "1";
            } else {
                throw Error(ErrorCode::kCorrupt, fmt::format("unknown checkpoint header key '{}'", key));
            }
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::kCorrupt, fmt::format("bad value in checkpoint header line '{}'", line));
        } catch (const Error& e) {
            throw Error(ErrorCode::kCorrupt, e.what());
        }
    }
    AKNN_THROW_IF_NOT(ended, kCorrupt, "checkpoint header is not terminated");
    for (const char* k : {"K", "H", "S", "nonlinearity", "feature_mask", "seed"}) {
        AKNN_THROW_IF_NOT(seen.count(k) == 1, kCorrupt, fmt::format("checkpoint header is missing '{}'", k));
    }
    std::size_t expected_s = 0;
    try {
        expected_s = KChoices(c.max_k).size();
    } catch (const Error& e) {
        throw Error(ErrorCode::kCorrupt, e.what());
    }
    AKNN_THROW_IF_NOT(s_size == expected_s && c.hidden >= 1, kCorrupt,
                      fmt::format("checkpoint shape K={} H={} S={} is inconsistent", c.max_k, c.hidden, s_size));

    MetakModel m;
    m.config = c;
    m.params = MetakParams(2 * c.max_k, c.hidden, s_size);
    auto read_block = [&](std::span<double> block, const char* what) {
        std::vector<float> f(block.size());
        io::read_bytes(in, f.data(), f.size() * sizeof(float), what);
        for (std::size_t i = 0; i < f.size(); ++i) {
            AKNN_THROW_IF_NOT(std::isfinite(f[i]), kCorrupt, fmt::format("non-finite value in {}", what));
            block[i] = f[i];
        }
    };
    read_block(m.params.w1(), "W1");
    read_block(m.params.b1(), "b1");
    read_block(m.params.w2(), "W2");
    read_block(m.params.b2(), "b2");
    if (c.standardize) {
        m.feature_mean.resize(2 * c.max_k);
        m.feature_scale.resize(2 * c.max_k);
        read_block(m.feature_mean, "feature mean");
        read_block(m.feature_scale, "feature scale");
    }
    AKNN_THROW_IF_NOT(io::at_eof(in), kCorrupt, "trailing bytes after checkpoint parameters");
    return m;
}

}  // namespace aknn
