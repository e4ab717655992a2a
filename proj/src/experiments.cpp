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


#include "aknn/experiments.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "aknn/bleu.hpp"
#include "aknn/util.hpp"

namespace aknn {

namespace {

constexpr std::uint64_t kSeedWorld = 100;
constexpr std::uint64_t kSeedDomainA = 101;
constexpr std::uint64_t kSeedDomainB = 102;
constexpr std::uint64_t kSeedEncoder = 103;
constexpr std::uint64_t kSeedGeneral = 104;
constexpr std::uint64_t kSeedIvf = 105;
constexpr std::uint64_t kSeedMetak = 106;

const char* const kAuto = "auto";

std::vector<std::pair<std::string, std::string>> make_defaults() {
    std::vector<std::pair<std::string, std::string>> d = {
        {"task.seed", ""},
        {"task.vocab_size", "1424"},
        {"task.dim", "16"},
        {"task.encoder_window", "2"},
        {"task.encoder_source_scale", "2.0"},
        {"task.base_source_window", "1"},
        {"task.base_prefix_window", "0"},
        {"task.smoothing", "0.01"},
        {"task.general_pairs", "20000"},
        {"task.train_pairs", "1100"},
        {"task.dev_pairs", "2000"},
        {"task.test_pairs", "2000"},
        {"task.world_seed", kAuto},
        {"task.encoder_seed", kAuto},
    };
    for (const char* dom : {"a", "b"}) {
        const bool a = dom[0] == 'a';
        const std::string p = fmt::format("domain.{}.", dom);
        d.emplace_back(p + "source_lo", a ? "2" : "702");
        d.emplace_back(p + "source_hi", a ? "702" : "1402");
        d.emplace_back(p + "zipf", "1.0");
        d.emplace_back(p + "successor_prob", "0.5");
        d.emplace_back(p + "general_rate", "0.1");
        d.emplace_back(p + "override_rate", "0.5");
        d.emplace_back(p + "noise_rate", "0.05");
        d.emplace_back(p + "n_distractors", "4");
        d.emplace_back(p + "min_len", "6");
        d.emplace_back(p + "max_len", "12");
        d.emplace_back(p + "seed", kAuto);
    }
    const std::vector<std::pair<std::string, std::string>> rest = {
        {"knn.metric", "squared_l2"},
        {"knn.temperature", "2.0"},
        {"knn.k", "8"},
        {"knn.lambda", "0.7"},
        {"knn.lambda_grid", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"},
        {"knn.exclude_self", "false"},
        {"ivf.n_centroids", "64"},
        {"ivf.iters", "20"},
        {"ivf.nprobe", "0"},
        {"ivf.seed", kAuto},
        {"metak.max_k", "8"},
        {"metak.hidden", "32"},
        {"metak.activation", "relu"},
        {"metak.feature_mask", "full"},
        {"metak.standardize", "false"},
        {"metak.seed", kAuto},
        {"metak.steps", "5000"},
        {"metak.batch_size", "32"},
        {"metak.lr", "3e-4"},
        {"metak.beta1", "0.9"},
        {"metak.beta2", "0.999"},
        {"metak.epsilon", "1e-8"},
        {"metak.eval_every", "250"},
        {"decode.variant", "adaptive"},
        {"decode.beam", "4"},
        {"decode.length_penalty", "0.6"},
        {"decode.max_len_a", "2"},
        {"decode.max_len_b", "10"},
        {"decode.batch_size", "1"},
        {"experiment.domain", "a"},
        {"experiment.other_domain", "b"},
        {"experiment.sweep_ks", "1,2,4,8,16,32"},
        {"experiment.bleu_sentences", "300"},
        {"experiment.transfer_k", "32"},
        {"experiment.mismatch_k", "32"},
        {"experiment.ablate_k", "8"},
        {"experiment.ablate_train_sizes", "100,500,2000"},
        {"experiment.ablate_hidden_sizes", "4,8,32"},
        {"experiment.timing_ks", "8,16,32"},
        {"experiment.timing_batches", "1,16,32"},
        {"experiment.timing_sentences", "64"},
        {"paths.dir", "work"},
        {"paths.train", ""},
        {"paths.dev", ""},
        {"paths.test", ""},
        {"paths.datastore", ""},
        {"paths.index", ""},
        {"paths.checkpoint", ""},
        {"paths.loss_curve", ""},
        {"paths.hypotheses", ""},
        {"paths.references", ""},
    };
    d.insert(d.end(), rest.begin(), rest.end());
    return d;
}

std::uint64_t seed_or(const Config& c, std::string_view key, std::uint64_t base, std::uint64_t tag) {
    const auto v = c.get_string(key, kAuto);
    return v == kAuto ? derive_seed(base, tag) : parse_u64(v, key);
}

std::size_t to_size(std::uint64_t v) { return static_cast<std::size_t>(v); }

std::vector<std::size_t> to_sizes(const std::vector<std::uint64_t>& v) { return {v.begin(), v.end()}; }

char parse_domain(std::string_view s, std::string_view key) {
    AKNN_THROW_IF_NOT(s == "a" || s == "b", kInvalidArgument, fmt::format("{} must be 'a' or 'b', got '{}'", key, s));
    return s[0];
}

Metric parse_metric(std::string_view s) {
    if (s == "squared_l2") return Metric::kSquaredL2;
    if (s == "l2") return Metric::kL2;
    throw Error(ErrorCode::kInvalidArgument, fmt::format("knn.metric must be squared_l2 or l2, got '{}'", s));
}

DomainSpec read_domain(const Config& c, char dom, const TaskConfig& task, std::uint64_t world) {
    const std::string p = fmt::format("domain.{}.", dom);
    DomainSpec s;
    s.name = std::string(1, dom);
    s.vocab_size = task.vocab_size;
    s.source_lo = static_cast<TokenId>(c.get_u64(p + "source_lo"));
    s.source_hi = static_cast<TokenId>(c.get_u64(p + "source_hi"));
    s.zipf = c.get_double(p + "zipf");
    s.successor_prob = c.get_double(p + "successor_prob");
    s.general_rate = c.get_double(p + "general_rate");
    s.override_rate = c.get_double(p + "override_rate");
    s.noise_rate = c.get_double(p + "noise_rate");
    s.n_distractors = to_size(c.get_u64(p + "n_distractors"));
    s.min_len = to_size(c.get_u64(p + "min_len"));
    s.max_len = to_size(c.get_u64(p + "max_len"));
    s.world_seed = world;
    s.seed = seed_or(c, p + "seed", task.seed, dom == 'a' ? kSeedDomainA : kSeedDomainB);
    validate(s);
    return s;
}

std::string path_or(const Config& c, std::string_view key, const std::string& dir, std::string_view file) {
    const auto v = c.get_string(key, "");
    return v.empty() ? (std::filesystem::path(dir) / file).string() : v;
}

double population_variance(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return var / static_cast<double>(xs.size());
}

bool is_power_of_two(std::size_t k) { return k >= 1 && (k & (k - 1)) == 0; }

}  // namespace

const std::vector<std::pair<std::string, std::string>>& config_defaults() {
    static const auto defaults = make_defaults();
    return defaults;
}

ExperimentConfig resolve_config(const Config& user) {
    std::set<std::string> known;
    Config c;
    for (const auto& [k, v] : config_defaults()) {
        known.insert(k);
        if (!v.empty()) c.set(k, v);
    }
    for (const auto& k : user.keys()) {
        AKNN_THROW_IF_NOT(known.count(k), kInvalidArgument, fmt::format("unknown config key '{}'", k));
        c.set(k, user.get_string(k));
    }
    AKNN_THROW_IF_NOT(user.has("task.seed"), kInvalidArgument, "config must set task.seed");

    ExperimentConfig e;
    TaskConfig& t = e.task;
    t.seed = c.get_u64("task.seed");
    t.vocab_size = static_cast<std::uint32_t>(c.get_u64("task.vocab_size"));
    t.dim = static_cast<std::uint32_t>(c.get_u64("task.dim"));
    t.encoder_window = to_size(c.get_u64("task.encoder_window"));
    t.encoder_source_scale = c.get_double("task.encoder_source_scale");
    t.base_window = {to_size(c.get_u64("task.base_source_window")), to_size(c.get_u64("task.base_prefix_window"))};
    t.smoothing = c.get_double("task.smoothing");
    t.general_pairs = to_size(c.get_u64("task.general_pairs"));
    t.train_pairs = to_size(c.get_u64("task.train_pairs"));
    t.dev_pairs = to_size(c.get_u64("task.dev_pairs"));
    t.test_pairs = to_size(c.get_u64("task.test_pairs"));
    const std::uint64_t world = seed_or(c, "task.world_seed", t.seed, kSeedWorld);
    t.domain_a = read_domain(c, 'a', t, world);
    t.domain_b = read_domain(c, 'b', t, world);

    e.metric = parse_metric(c.get_string("knn.metric"));
    e.temperature = c.get_double("knn.temperature");
    e.k = to_size(c.get_u64("knn.k"));
    e.lambda = c.get_double("knn.lambda");
    e.lambda_grid = c.get_double_list("knn.lambda_grid", {});
    AKNN_THROW_IF_NOT(!e.lambda_grid.empty(), kInvalidArgument, "knn.lambda_grid is empty");
    e.exclude_self = c.get_bool("knn.exclude_self", false);

    e.ivf.n_centroids = to_size(c.get_u64("ivf.n_centroids"));
    e.ivf.n_iters = to_size(c.get_u64("ivf.iters"));
    e.ivf.seed = seed_or(c, "ivf.seed", t.seed, kSeedIvf);
    e.nprobe = to_size(c.get_u64("ivf.nprobe"));

    e.metak.max_k = to_size(c.get_u64("metak.max_k"));
    e.metak.hidden = to_size(c.get_u64("metak.hidden"));
    e.metak.activation = parse_activation(c.get_string("metak.activation"));
    e.metak.mask = parse_feature_mask(c.get_string("metak.feature_mask"));
    e.metak.standardize = c.get_bool("metak.standardize", false);
    e.metak.seed = seed_or(c, "metak.seed", t.seed, kSeedMetak);
    e.train.steps = to_size(c.get_u64("metak.steps"));
    e.train.batch_size = to_size(c.get_u64("metak.batch_size"));
    e.train.adam = {c.get_double("metak.lr"), c.get_double("metak.beta1"), c.get_double("metak.beta2"),
                    c.get_double("metak.epsilon")};
    e.train.eval_every = to_size(c.get_u64("metak.eval_every"));

    e.variant = parse_variant(c.get_string("decode.variant"));
    e.decode.beam = to_size(c.get_u64("decode.beam"));
    e.decode.length_penalty = c.get_double("decode.length_penalty");
    e.decode.max_len_a = to_size(c.get_u64("decode.max_len_a"));
    e.decode.max_len_b = to_size(c.get_u64("decode.max_len_b"));
    e.decode.batch_size = to_size(c.get_u64("decode.batch_size"));

    e.domain = parse_domain(c.get_string("experiment.domain"), "experiment.domain");
    e.other_domain = parse_domain(c.get_string("experiment.other_domain"), "experiment.other_domain");
    e.sweep_ks = to_sizes(c.get_u64_list("experiment.sweep_ks", {}));
    e.bleu_sentences = to_size(c.get_u64("experiment.bleu_sentences"));
    e.transfer_k = to_size(c.get_u64("experiment.transfer_k"));
    e.mismatch_k = to_size(c.get_u64("experiment.mismatch_k"));
    e.ablate_k = to_size(c.get_u64("experiment.ablate_k"));
    e.ablate_train_sizes = to_sizes(c.get_u64_list("experiment.ablate_train_sizes", {}));
    e.ablate_hidden_sizes = to_sizes(c.get_u64_list("experiment.ablate_hidden_sizes", {}));
    e.timing_ks = to_sizes(c.get_u64_list("experiment.timing_ks", {}));
    e.timing_batches = to_sizes(c.get_u64_list("experiment.timing_batches", {}));
    e.timing_sentences = to_size(c.get_u64("experiment.timing_sentences"));

    auto& p = e.paths;
    p.dir = c.get_string("paths.dir");
    const char dom = e.domain;
    p.train = path_or(c, "paths.train", p.dir, fmt::format("{}.train.txt", dom));
    p.dev = path_or(c, "paths.dev", p.dir, fmt::format("{}.dev.txt", dom));
    p.test = path_or(c, "paths.test", p.dir, fmt::format("{}.test.txt", dom));
    p.datastore = path_or(c, "paths.datastore", p.dir, fmt::format("{}.ds", dom));
    p.index = path_or(c, "paths.index", p.dir, fmt::format("{}.ivf", dom));
    p.checkpoint = path_or(c, "paths.checkpoint", p.dir, fmt::format("{}.k{}.metak", dom, e.metak.max_k));
    p.loss_curve = path_or(c, "paths.loss_curve", p.dir, fmt::format("{}.k{}.loss.tsv", dom, e.metak.max_k));
    p.hypotheses = path_or(c, "paths.hypotheses", p.dir, fmt::format("{}.hyp.txt", dom));
    p.references = c.get_string("paths.references", "");

    AKNN_THROW_IF_NOT(e.temperature > 0.0, kInvalidArgument, "knn.temperature must be > 0");
    for (double l : e.lambda_grid) {
        AKNN_THROW_IF_NOT(l >= 0.0 && l <= 1.0, kInvalidArgument, "knn.lambda_grid entries must lie in [0, 1]");
    }
    for (std::size_t k : e.sweep_ks) AKNN_THROW_IF_NOT(k >= 1, kInvalidArgument, "experiment.sweep_ks must be >= 1");
    return e;
}

const DomainSpec& domain_spec(const TaskConfig& task, char domain) {
    AKNN_THROW_IF_NOT(domain == 'a' || domain == 'b', kInvalidArgument, fmt::format("unknown domain '{}'", domain));
    return domain == 'a' ? task.domain_a : task.domain_b;
}

DomainSpec general_domain(const TaskConfig& task) {
    DomainSpec s;
    s.name = "general";
    s.vocab_size = task.vocab_size;
    s.source_lo = kFirstContentToken;
    s.source_hi = task.vocab_size;
    s.zipf = 0.0;
    s.successor_prob = 0.5;
    s.override_rate = 0.0;
    s.noise_rate = 0.0;
    s.n_distractors = 0;
    s.min_len = task.domain_a.min_len;
    s.max_len = task.domain_a.max_len;
    s.world_seed = task.domain_a.world_seed;
    s.seed = derive_seed(task.seed, kSeedGeneral);
    return s;
}

ToyBaseModel build_base_model(const TaskConfig& task) {
    const auto general = gen_corpus(general_domain(task), task.general_pairs, Split::kTrain,
                                    derive_seed(task.seed, kSeedGeneral));
    ToyEncoder encoder(task.vocab_size, task.dim, task.encoder_window, derive_seed(task.seed, kSeedEncoder),
                       task.encoder_source_scale);
    return ToyBaseModel(std::move(encoder), fit_count_model(general, task.smoothing, task.vocab_size, task.base_window));
}

Corpus domain_corpus(const TaskConfig& task, char domain, Split split) {
    const auto& spec = domain_spec(task, domain);
    const std::size_t n = split == Split::kTrain ? task.train_pairs : split == Split::kDev ? task.dev_pairs
                                                                                            : task.test_pairs;
    return gen_corpus(spec, n, split, spec.seed);
}

IvfTrainOptions effective_ivf_options(const ExperimentConfig& cfg, std::size_t entries) {
    IvfTrainOptions o = cfg.ivf;
    o.n_centroids = std::max<std::size_t>(1, std::min(o.n_centroids, entries));
    return o;
}

EvalSet build_eval_set(const BaseModel& base, const Retriever& retriever, const Corpus& corpus, std::size_t k_max,
                       bool exclude_own_entry) {
    EvalSet set;
    set.k_max = k_max;
    const std::size_t dim = base.context_dim();
    std::vector<float> queries;
    for (std::size_t s = 0; s < corpus.size(); ++s) {
        const auto& pair = corpus.pairs[s];
        const std::span<const TokenId> target = pair.target;
        for (std::size_t t = 0; t < target.size(); ++t) {
            set.sentence.push_back(static_cast<std::uint32_t>(s));
            set.position.push_back(static_cast<std::uint32_t>(t));
            set.gold.push_back(target[t]);
            queries.resize(queries.size() + dim);
            base.encode_context(pair.source, target.first(t), std::span<float>(queries).last(dim));
        }
    }
    if (set.gold.empty()) return set;
    if (exclude_own_entry) {
        AKNN_THROW_IF_NOT(set.size() == retriever.datastore().size(), kShapeMismatch,
                          "self-exclusion needs the corpus the datastore was built from");
        set.neighbors.reserve(set.size());
        for (std::size_t i = 0; i < set.size(); ++i) {
            set.neighbors.push_back(
                retriever.search_excluding(std::span<const float>(queries).subspan(i * dim, dim), k_max, i));
        }
    } else {
        set.neighbors = retriever.search_batch(queries, k_max);
    }
    return set;
}

AccuracyReport eval_accuracy(const EvalSet& set, const Corpus& corpus, const BaseModel& base,
                             const PredictorConfig& cfg, const MetakModel* metak) {
    validate(cfg);
    AKNN_THROW_IF_NOT(cfg.variant == Variant::kBase || cfg.k <= set.k_max, kShapeMismatch,
                      fmt::format("eval set holds {} neighbors, {} requested", set.k_max, cfg.k));
    AccuracyReport r;
    Distribution base_dist(base.vocab_size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& pair = corpus.pairs[set.sentence[i]];
        base.next_token_dist(pair.source, std::span<const TokenId>(pair.target).first(set.position[i]), base_dist);
        const auto p = cfg.variant == Variant::kBase ? base_dist : combine(cfg, metak, base_dist, set.neighbors[i]);
        r.correct += argmax(p) == set.gold[i];
        ++r.total;
    }
    return r;
}

std::vector<PreparedSample> training_samples(const EvalSet& set, const Corpus& corpus, const BaseModel& base,
                                             std::size_t K, double temperature, FeatureMask mask,
                                             std::size_t max_sentences) {
    AKNN_THROW_IF_NOT(K <= set.k_max, kShapeMismatch,
                      fmt::format("eval set holds {} neighbors, K = {} requested", set.k_max, K));
    std::vector<PreparedSample> out;
    Distribution base_dist(base.vocab_size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.sentence[i] >= max_sentences) continue;
        const auto& pair = corpus.pairs[set.sentence[i]];
        base.next_token_dist(pair.source, std::span<const TokenId>(pair.target).first(set.position[i]), base_dist);
        const auto top = std::span<const Neighbor>(set.neighbors[i]).first(K);
        const auto features = extract_features(top, K, mask).concat();
        out.push_back(prepare_sample(features, top, base_dist[set.gold[i]], set.gold[i], temperature, set.sentence[i]));
    }
    return out;
}

struct Suite::DomainState {
    Corpus train;
    Corpus dev;
    Corpus test;
    std::unique_ptr<Datastore> ds;
    std::unique_ptr<IvfIndex> index;
    std::unique_ptr<Retriever> retriever;
};

Suite::Suite(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    k_max_ = std::max<std::size_t>({32, cfg_.metak.max_k, cfg_.transfer_k, cfg_.mismatch_k, cfg_.ablate_k, cfg_.k});
    for (std::size_t k : cfg_.sweep_ks) k_max_ = std::max(k_max_, k);
    for (std::size_t k : cfg_.timing_ks) k_max_ = std::max(k_max_, k);
}

Suite::~Suite() = default;

const ToyBaseModel& Suite::base() {
    if (!base_) base_ = std::make_unique<ToyBaseModel>(build_base_model(cfg_.task));
    return *base_;
}

Suite::DomainState& Suite::state(char domain) {
    auto& slot = domains_[domain];
    if (!slot) {
        slot = std::make_unique<DomainState>();
        slot->train = domain_corpus(cfg_.task, domain, Split::kTrain);
        slot->dev = domain_corpus(cfg_.task, domain, Split::kDev);
        slot->test = domain_corpus(cfg_.task, domain, Split::kTest);
        slot->ds = std::make_unique<Datastore>(build_datastore(base(), slot->train));
        std::size_t nprobe = 0;
        if (cfg_.nprobe > 0) {
            const auto opts = effective_ivf_options(cfg_, slot->ds->size());
            slot->index = std::make_unique<IvfIndex>(train_ivf(*slot->ds, opts));
            nprobe = std::min(cfg_.nprobe, slot->index->n_centroids());
        }
        slot->retriever = std::make_unique<Retriever>(*slot->ds, slot->index.get(), nprobe, cfg_.metric);
    }
    return *slot;
}

const Corpus& Suite::corpus(char domain, Split split) {
    auto& s = state(domain);
    return split == Split::kTrain ? s.train : split == Split::kDev ? s.dev : s.test;
}

const Datastore& Suite::datastore(char domain) { return *state(domain).ds; }

const Retriever& Suite::retriever(char domain) { return *state(domain).retriever; }

const EvalSet& Suite::eval(char datastore_domain, char corpus_domain, Split split) {
    const auto key = std::make_tuple(datastore_domain, corpus_domain, split);
    auto it = evals_.find(key);
    if (it == evals_.end()) {
        const bool self = split == Split::kTrain && datastore_domain == corpus_domain;
        it = evals_
                 .emplace(key, build_eval_set(base(), retriever(datastore_domain), corpus(corpus_domain, split),
                                              k_max_, self))
                 .first;
    }
    return it->second;
}

double Suite::accuracy(char datastore_domain, char corpus_domain, Split split, const PredictorConfig& pc,
                       const MetakModel* metak) {
    return eval_accuracy(eval(datastore_domain, corpus_domain, split), corpus(corpus_domain, split), base(), pc, metak)
        .accuracy();
}

double Suite::tuned_lambda(char domain, std::size_t k) {
    const auto key = std::make_pair(domain, k);
    auto it = lambdas_.find(key);
    if (it != lambdas_.end()) return it->second;
    double best = cfg_.lambda_grid.front();
    double best_acc = -1.0;
    for (double l : cfg_.lambda_grid) {
        const double acc = accuracy(domain, domain, Split::kDev, {Variant::kVanilla, k, cfg_.temperature, l});
        if (acc > best_acc) {
            best_acc = acc;
            best = l;
        }
    }
    lambdas_.emplace(key, best);
    return best;
}

PredictorConfig Suite::vanilla_config(char domain, std::size_t k) {
    return {Variant::kVanilla, k, cfg_.temperature, tuned_lambda(domain, k)};
}

MetakConfig Suite::metak_config(std::size_t K) const {
    MetakConfig mc = cfg_.metak;
    mc.max_k = K;
    return mc;
}

TrainResult Suite::train(char domain, const MetakConfig& mc, std::size_t max_sentences) {
    const auto samples = training_samples(eval(domain, domain, Split::kDev), corpus(domain, Split::kDev), base(),
                                          mc.max_k, cfg_.temperature, mc.mask, max_sentences);
    return train_metak(samples, mc, cfg_.train);
}

const MetakModel& Suite::metak(char domain, std::size_t K) {
    const auto key = std::make_pair(domain, K);
    auto it = metaks_.find(key);
    if (it == metaks_.end()) it = metaks_.emplace(key, train(domain, metak_config(K)).model).first;
    return it->second;
}

void Suite::adopt_metak(char domain, MetakModel model) {
    const std::size_t K = model.config.max_k;
    metaks_.insert_or_assign(std::make_pair(domain, K), std::move(model));
}

namespace {

double greedy_bleu(Suite& suite, char domain, const PredictorConfig& pc, const MetakModel* metak) {
    const auto& test = suite.corpus(domain, Split::kTest);
    Corpus subset;
    subset.split = Split::kTest;
    const std::size_t n = std::min(test.size(), suite.config().bleu_sentences);
    subset.pairs.assign(test.pairs.begin(), test.pairs.begin() + static_cast<std::ptrdiff_t>(n));
    if (subset.empty()) return 0.0;
    const Predictor predictor(suite.base(), &suite.retriever(domain), pc, metak);
    DecodeOptions opts = suite.config().decode;
    opts.beam = 0;
    opts.batch_size = 32;
    const auto hyps = decode_corpus(predictor, subset, opts);
    std::vector<std::vector<TokenId>> refs;
    for (const auto& p : subset.pairs) refs.push_back(p.target);
    return corpus_bleu(hyps, refs).bleu;
}

std::string pct(double acc) { return fmt::format("{:.2f}", 100.0 * acc); }

}  // namespace

SweepReport run_sweep(Suite& suite) {
    const auto& cfg = suite.config();
    const char d = cfg.domain;
    const double T = cfg.temperature;
    SweepReport r;
    const PredictorConfig base_cfg{Variant::kBase, 1, T, 0.0};
    r.base_accuracy = suite.accuracy(d, d, Split::kTest, base_cfg);
    r.base_bleu = greedy_bleu(suite, d, base_cfg, nullptr);
    std::map<Variant, std::vector<double>> for_variance;
    for (std::size_t k : cfg.sweep_ks) {
        const auto van = suite.vanilla_config(d, k);
        const double va = suite.accuracy(d, d, Split::kTest, van);
        r.rows.push_back({Variant::kVanilla, k, van.lambda, va, greedy_bleu(suite, d, van, nullptr)});
        r.best_vanilla = std::max(r.best_vanilla, va);
        if (k >= 4) for_variance[Variant::kVanilla].push_back(100.0 * va);
        if (!is_power_of_two(k)) continue;
        const PredictorConfig uni{Variant::kUniform, k, T, 0.0};
        const double ua = suite.accuracy(d, d, Split::kTest, uni);
        r.rows.push_back({Variant::kUniform, k, 0.0, ua, greedy_bleu(suite, d, uni, nullptr)});
        if (k >= 4) for_variance[Variant::kUniform].push_back(100.0 * ua);
        const PredictorConfig ad{Variant::kAdaptive, k, T, 0.0};
        const auto& model = suite.metak(d, k);
        const double aa = suite.accuracy(d, d, Split::kTest, ad, &model);
        r.rows.push_back({Variant::kAdaptive, k, 0.0, aa, greedy_bleu(suite, d, ad, &model)});
        if (k >= 4) for_variance[Variant::kAdaptive].push_back(100.0 * aa);
    }
    for (Variant v : {Variant::kVanilla, Variant::kUniform, Variant::kAdaptive}) {
        r.variance[v] = population_variance(for_variance[v]);
    }
    return r;
}

Table render(const SweepReport& r) {
    Table t;
    std::vector<std::size_t> ks;
    for (const auto& row : r.rows) {
        if (std::find(ks.begin(), ks.end(), row.k) == ks.end()) ks.push_back(row.k);
    }
    t.text = fmt::format("K-sweep: teacher-forced accuracy (%) on the test set\n");
    t.text += fmt::format("{:<10}", "model");
    for (std::size_t k : ks) t.text += fmt::format("{:>8}", fmt::format("K={}", k));
    t.text += fmt::format("{:>12}\n", "var(K>=4)");
    t.text += fmt::format("{:<10}{:>8}\n", "base", pct(r.base_accuracy));
    for (Variant v : {Variant::kVanilla, Variant::kUniform, Variant::kAdaptive}) {
        t.text += fmt::format("{:<10}", to_string(v));
        for (std::size_t k : ks) {
            auto it = std::find_if(r.rows.begin(), r.rows.end(),
                                   [&](const SweepRow& row) { return row.variant == v && row.k == k; });
            t.text += fmt::format("{:>8}", it == r.rows.end() ? std::string("-") : pct(it->accuracy));
        }
        t.text += fmt::format("{:>12.4f}\n", r.variance.at(v));
    }
    t.text += fmt::format("best vanilla {}\n\nGreedy BLEU\n", pct(r.best_vanilla));
    t.text += fmt::format("{:<10}{:>8.2f}\n", "base", r.base_bleu);
    for (Variant v : {Variant::kVanilla, Variant::kUniform, Variant::kAdaptive}) {
        t.text += fmt::format("{:<10}", to_string(v));
        for (std::size_t k : ks) {
            auto it = std::find_if(r.rows.begin(), r.rows.end(),
                                   [&](const SweepRow& row) { return row.variant == v && row.k == k; });
            t.text += it == r.rows.end() ? fmt::format("{:>8}", "-") : fmt::format("{:>8.2f}", it->bleu);
        }
        t.text += '\n';
    }

    t.tsv = "variant\tk\tlambda\taccuracy\tbleu\n";
    t.tsv += fmt::format("base\t0\t0\t{:.6f}\t{:.4f}\n", r.base_accuracy, r.base_bleu);
    for (const auto& row : r.rows) {
        t.tsv += fmt::format("{}\t{}\t{:.2f}\t{:.6f}\t{:.4f}\n", to_string(row.variant), row.k, row.lambda,
                             row.accuracy, row.bleu);
    }
    for (const auto& [v, var] : r.variance) t.tsv += fmt::format("variance\t{}\t\t{:.6f}\t\n", to_string(v), var);
    return t;
}

TransferReport run_transfer(Suite& suite) {
    const auto& cfg = suite.config();
    const char src = cfg.domain;
    const char tgt = cfg.other_domain;
    const std::size_t K = cfg.transfer_k;
    const PredictorConfig ad{Variant::kAdaptive, K, cfg.temperature, 0.0};
    TransferReport r;
    r.k = K;
    r.in_domain = suite.accuracy(tgt, tgt, Split::kTest, ad, &suite.metak(tgt, K));
    r.transferred = src == tgt ? r.in_domain : suite.accuracy(tgt, tgt, Split::kTest, ad, &suite.metak(src, K));
    r.vanilla_target = suite.accuracy(tgt, tgt, Split::kTest, suite.vanilla_config(tgt, K));
    return r;
}

Table render(const TransferReport& r) {
    Table t;
    t.text = fmt::format(
        "Transfer at K={}: accuracy (%) on the target test set\n"
        "{:<28}{:>8}\n{:<28}{:>8}\n{:<28}{:>8}\n{:<28}{:>8.2f}\n",
        r.k, "vanilla (target-tuned)", pct(r.vanilla_target), "adaptive (in-domain)", pct(r.in_domain),
        "adaptive (transferred)", pct(r.transferred), "delta (points)", 100.0 * r.delta());
    t.tsv = fmt::format("k\tvanilla_target\tin_domain\ttransferred\tdelta\n{}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}\n", r.k,
                        r.vanilla_target, r.in_domain, r.transferred, r.delta());
    return t;
}

MismatchReport run_mismatch(Suite& suite) {
    const auto& cfg = suite.config();
    const char d = cfg.domain;
    const char o = cfg.other_domain;
    const std::size_t K = cfg.mismatch_k;
    MismatchReport r;
    r.k = K;
    r.lambda = suite.tuned_lambda(d, K);
    const PredictorConfig base_cfg{Variant::kBase, 1, cfg.temperature, 0.0};
    const auto van = suite.vanilla_config(d, K);
    const PredictorConfig ad{Variant::kAdaptive, K, cfg.temperature, 0.0};
    const auto& model = suite.metak(d, K);
    r.control = {suite.accuracy(d, d, Split::kTest, base_cfg), suite.accuracy(d, d, Split::kTest, van),
                 suite.accuracy(d, d, Split::kTest, ad, &model)};
    r.mismatch = {suite.accuracy(d, o, Split::kTest, base_cfg), suite.accuracy(d, o, Split::kTest, van),
                  suite.accuracy(d, o, Split::kTest, ad, &model)};
    return r;
}

Table render(const MismatchReport& r) {
    Table t;
    t.text = fmt::format("Datastore mismatch at K={} (vanilla lambda {:.2f}): accuracy (%)\n", r.k, r.lambda);
    t.text += fmt::format("{:<10}{:>10}{:>10}{:>10}\n", "setting", "base", "vanilla", "adaptive");
    t.text += fmt::format("{:<10}{:>10}{:>10}{:>10}\n", "matched", pct(r.control.base), pct(r.control.vanilla),
                          pct(r.control.adaptive));
    t.text += fmt::format("{:<10}{:>10}{:>10}{:>10}\n", "mismatch", pct(r.mismatch.base), pct(r.mismatch.vanilla),
                          pct(r.mismatch.adaptive));
    t.tsv = "setting\tk\tbase\tvanilla\tadaptive\n";
    t.tsv += fmt::format("matched\t{}\t{:.6f}\t{:.6f}\t{:.6f}\n", r.k, r.control.base, r.control.vanilla,
                         r.control.adaptive);
    t.tsv += fmt::format("mismatch\t{}\t{:.6f}\t{:.6f}\t{:.6f}\n", r.k, r.mismatch.base, r.mismatch.vanilla,
                         r.mismatch.adaptive);
    return t;
}

double AblationReport::find(std::string_view group, std::string_view setting) const {
    for (const auto& row : rows) {
        if (row.group == group && row.setting == setting) return row.accuracy;
    }
    throw Error(ErrorCode::kOutOfRange, fmt::format("no ablation row {}/{}", group, setting));
}

AblationReport run_ablate(Suite& suite) {
    const auto& cfg = suite.config();
    const char d = cfg.domain;
    const std::size_t K = cfg.ablate_k;
    const PredictorConfig ad{Variant::kAdaptive, K, cfg.temperature, 0.0};
    AblationReport r;
    r.k = K;
    for (std::size_t k : cfg.sweep_ks) {
        r.best_vanilla = std::max(r.best_vanilla, suite.accuracy(d, d, Split::kTest, suite.vanilla_config(d, k)));
    }
    auto score = [&](const MetakModel& m) { return suite.accuracy(d, d, Split::kTest, ad, &m); };
    for (FeatureMask mask : {FeatureMask::kFull, FeatureMask::kNoCounts, FeatureMask::kNoDistances}) {
        auto mc = suite.metak_config(K);
        mc.mask = mask;
        const double acc = mask == cfg.metak.mask ? score(suite.metak(d, K)) : score(suite.train(d, mc).model);
        r.rows.push_back({"features", std::string(to_string(mask)), acc});
    }
    for (std::size_t n : cfg.ablate_train_sizes) {
        r.rows.push_back({"train_sentences", std::to_string(n), score(suite.train(d, suite.metak_config(K), n).model)});
    }
    for (std::size_t h : cfg.ablate_hidden_sizes) {
        auto mc = suite.metak_config(K);
        mc.hidden = h;
        const double acc = h == cfg.metak.hidden ? score(suite.metak(d, K)) : score(suite.train(d, mc).model);
        r.rows.push_back({"hidden", std::to_string(h), acc});
    }
    return r;
}

Table render(const AblationReport& r) {
    Table t;
    t.text = fmt::format("Ablations at K={}: adaptive accuracy (%) on the test set (best vanilla {})\n", r.k,
                         pct(r.best_vanilla));
    t.text += fmt::format("{:<18}{:<16}{:>10}\n", "group", "setting", "accuracy");
    t.tsv = "group\tsetting\taccuracy\n";
    for (const auto& row : r.rows) {
        t.text += fmt::format("{:<18}{:<16}{:>10}\n", row.group, row.setting, pct(row.accuracy));
        t.tsv += fmt::format("{}\t{}\t{:.6f}\n", row.group, row.setting, row.accuracy);
    }
    t.tsv += fmt::format("best_vanilla\t-\t{:.6f}\n", r.best_vanilla);
    return t;
}

double TimingReport::find(Variant v, std::size_t k, std::size_t batch) const {
    for (const auto& row : rows) {
        if (row.variant == v && row.k == k && row.batch == batch) return row.ms_per_sentence;
    }
    throw Error(ErrorCode::kOutOfRange, fmt::format("no timing row {}/{}/{}", to_string(v), k, batch));
}

TimingReport run_timing(Suite& suite) {
    const auto& cfg = suite.config();
    const char d = cfg.domain;
    const auto& test = suite.corpus(d, Split::kTest);
    Corpus subset;
    subset.split = Split::kTest;
    const std::size_t n = std::min(test.size(), cfg.timing_sentences);
    subset.pairs.assign(test.pairs.begin(), test.pairs.begin() + static_cast<std::ptrdiff_t>(n));
    TimingReport r;
    r.sentences = n;
    if (n == 0) return r;
    for (std::size_t K : cfg.timing_ks) suite.metak(d, K);  // train outside the timed region
    auto time_it = [&](const Predictor& p, std::size_t batch) {
        DecodeOptions opts = cfg.decode;
        opts.beam = 0;
        opts.batch_size = batch;
        const auto start = std::chrono::steady_clock::now();
        const auto hyps = decode_corpus(p, subset, opts);
        const auto stop = std::chrono::steady_clock::now();
        return std::chrono::duration<double, std::milli>(stop - start).count() / static_cast<double>(n);
    };
    for (std::size_t b : cfg.timing_batches) {
        const Predictor base(suite.base(), nullptr, {Variant::kBase, 1, cfg.temperature, 0.0});
        r.rows.push_back({Variant::kBase, 0, b, time_it(base, b)});
    }
    for (std::size_t K : cfg.timing_ks) {
        for (std::size_t b : cfg.timing_batches) {
            const Predictor van(suite.base(), &suite.retriever(d), {Variant::kVanilla, K, cfg.temperature, cfg.lambda});
            r.rows.push_back({Variant::kVanilla, K, b, time_it(van, b)});
            const Predictor ad(suite.base(), &suite.retriever(d), {Variant::kAdaptive, K, cfg.temperature, 0.0},
                               &suite.metak(d, K));
            r.rows.push_back({Variant::kAdaptive, K, b, time_it(ad, b)});
        }
    }
    return r;
}

Table render(const TimingReport& r) {
    Table t;
    t.text = fmt::format("Greedy decoding time (ms per sentence, {} sentences)\n", r.sentences);
    t.text += fmt::format("{:<10}{:>4}{:>8}{:>12}{:>18}\n", "model", "K", "batch", "ms/sent", "adaptive/vanilla");
    t.tsv = "variant\tk\tbatch\tms_per_sentence\n";
    for (const auto& row : r.rows) {
        std::string ratio;
        if (row.variant == Variant::kAdaptive) {
            ratio = fmt::format("{:.3f}", row.ms_per_sentence / r.find(Variant::kVanilla, row.k, row.batch));
        }
        t.text += fmt::format("{:<10}{:>4}{:>8}{:>12.3f}{:>18}\n", to_string(row.variant), row.k, row.batch,
                              row.ms_per_sentence, ratio);
        t.tsv += fmt::format("{}\t{}\t{}\t{:.6f}\n", to_string(row.variant), row.k, row.batch, row.ms_per_sentence);
    }
    return t;
}

}  // namespace aknn
