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


#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "aknn/basemodel.hpp"
#include "aknn/config.hpp"
#include "aknn/datastore.hpp"
#include "aknn/decode.hpp"
#include "aknn/ivf.hpp"
#include "aknn/metak.hpp"

namespace aknn {

/// The synthetic world: vocabulary, encoder, base model and two domains.
struct TaskConfig {
    std::uint64_t seed = 0;
    std::uint32_t vocab_size = 1424;
    std::uint32_t dim = 16;
    std::size_t encoder_window = 2;
    double encoder_source_scale = 2.0;
    CountWindow base_window{1, 0};
    double smoothing = 0.01;
    std::size_t general_pairs = 20000;
    DomainSpec domain_a;
    DomainSpec domain_b;
    std::size_t train_pairs = 1100;
    std::size_t dev_pairs = 2000;
    std::size_t test_pairs = 2000;
};

struct PathsConfig {
    std::string dir = "work";
    std::string train;
    std::string dev;
    std::string test;
    std::string datastore;
    std::string index;
    std::string checkpoint;
    std::string loss_curve;
    std::string hypotheses;
    std::string references;
};

struct ExperimentConfig {
    TaskConfig task;
    Metric metric = Metric::kSquaredL2;
    double temperature = 2.0;

    // vanilla
    std::size_t k = 8;
    double lambda = 0.7;
    std::vector<double> lambda_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    IvfTrainOptions ivf{64, 20, 0};
    /// 0 probes every list.
    std::size_t nprobe = 0;
    bool exclude_self = false;

    MetakConfig metak;
    TrainOptions train;

    Variant variant = Variant::kAdaptive;
    DecodeOptions decode{4, 0.6, 2, 10, 1};

    /// Domain whose train/dev/test drive single-domain commands ("a" or "b").
    char domain = 'a';
    char other_domain = 'b';

    std::vector<std::size_t> sweep_ks{1, 2, 4, 8, 16, 32};
    std::size_t bleu_sentences = 300;
    std::size_t transfer_k = 32;
    std::size_t mismatch_k = 32;
    std::size_t ablate_k = 8;
    std::vector<std::size_t> ablate_train_sizes{100, 500, 2000};
    std::vector<std::size_t> ablate_hidden_sizes{4, 8, 32};
    std::vector<std::size_t> timing_ks{8, 16, 32};
    std::vector<std::size_t> timing_batches{1, 16, 32};
    std::size_t timing_sentences = 64;

    PathsConfig paths;
};

/// Every key the configuration understands, with its default value.
/// task.seed has no default and must be supplied.
const std::vector<std::pair<std::string, std::string>>& config_defaults();

/// Builds an ExperimentConfig, rejecting unknown keys and a missing task.seed.
ExperimentConfig resolve_config(const Config& cfg);

const DomainSpec& domain_spec(const TaskConfig& task, char domain);

/// General-domain corpus the base model is fit on: uniform source tokens,
/// shared translations, no noise.
DomainSpec general_domain(const TaskConfig& task);

ToyBaseModel build_base_model(const TaskConfig& task);

Corpus domain_corpus(const TaskConfig& task, char domain, Split split);

/// Index options with the list count capped at the datastore size.
IvfTrainOptions effective_ivf_options(const ExperimentConfig& cfg, std::size_t entries);

/// Teacher-forced positions of a corpus with their retrieved neighbors.
struct EvalSet {
    std::vector<std::uint32_t> sentence;
    std::vector<std::uint32_t> position;
    std::vector<TokenId> gold;
    std::vector<NeighborList> neighbors;  // k_max each, nearest first
    std::size_t k_max = 0;

    std::size_t size() const { return gold.size(); }
};

/// With `exclude_own_entry`, `corpus` must be the corpus the datastore was
/// built from; each position's own entry is then left out of its neighbors.
EvalSet build_eval_set(const BaseModel& base, const Retriever& retriever, const Corpus& corpus, std::size_t k_max,
                       bool exclude_own_entry = false);

/// Teacher-forced accuracy from an EvalSet; equal to teacher_forced_accuracy()
/// with the same retriever.
AccuracyReport eval_accuracy(const EvalSet& set, const Corpus& corpus, const BaseModel& base,
                             const PredictorConfig& cfg, const MetakModel* metak = nullptr);

/// Meta-k training samples for max_k = K from the first `max_sentences` sentences.
std::vector<PreparedSample> training_samples(const EvalSet& set, const Corpus& corpus, const BaseModel& base,
                                             std::size_t K, double temperature, FeatureMask mask,
                                             std::size_t max_sentences = SIZE_MAX);

/// Lazily built and cached artifacts shared by the experiment suites.
class Suite {
  public:
    explicit Suite(ExperimentConfig cfg);
    ~Suite();

    const ExperimentConfig& config() const { return cfg_; }
    const ToyBaseModel& base();
    const Corpus& corpus(char domain, Split split);
    const Datastore& datastore(char domain);
    const Retriever& retriever(char domain);
    /// Neighbors from `datastore_domain` for the `corpus_domain` split, k_max = 32 or more.
    const EvalSet& eval(char datastore_domain, char corpus_domain, Split split);

    /// Best lambda on the domain's dev set for fixed k (ties go to the smaller lambda).
    double tuned_lambda(char domain, std::size_t k);
    /// Meta-k trained on the domain's dev set.
    TrainResult train(char domain, const MetakConfig& mc, std::size_t max_sentences = SIZE_MAX);
    /// Cached default-configuration Meta-k for the domain and K.
    const MetakModel& metak(char domain, std::size_t K);
    /// Replaces the cached Meta-k for (domain, model.config.max_k).
    void adopt_metak(char domain, MetakModel model);

    double accuracy(char datastore_domain, char corpus_domain, Split split, const PredictorConfig& pc,
                    const MetakModel* metak = nullptr);
    PredictorConfig vanilla_config(char domain, std::size_t k);
    MetakConfig metak_config(std::size_t K) const;

  private:
    struct DomainState;
    DomainState& state(char domain);

    ExperimentConfig cfg_;
    std::size_t k_max_;
    std::unique_ptr<ToyBaseModel> base_;
    std::map<char, std::unique_ptr<DomainState>> domains_;
    std::map<std::tuple<char, char, Split>, EvalSet> evals_;
    std::map<std::pair<char, std::size_t>, double> lambdas_;
    std::map<std::pair<char, std::size_t>, MetakModel> metaks_;
};

/// A rendered result: human-readable text and tab-separated rows.
struct Table {
    std::string text;
    std::string tsv;
};

struct SweepRow {
    Variant variant;
    std::size_t k;
    double lambda;  // vanilla only
    double accuracy;
    double bleu;
};

struct SweepReport {
    double base_accuracy = 0.0;
    double base_bleu = 0.0;
    std::vector<SweepRow> rows;
    /// Population variance of accuracy (in percentage points squared) over K >= 4.
    std::map<Variant, double> variance;
    double best_vanilla = 0.0;
};

SweepReport run_sweep(Suite& suite);
Table render(const SweepReport& r);

struct TransferReport {
    std::size_t k = 0;
    double in_domain = 0.0;     // target-trained Meta-k on target
    double transferred = 0.0;   // source-trained Meta-k on target
    double vanilla_target = 0.0;
    double delta() const { return transferred - in_domain; }
};

TransferReport run_transfer(Suite& suite);
Table render(const TransferReport& r);

struct MismatchScores {
    double base = 0.0;
    double vanilla = 0.0;
    double adaptive = 0.0;
};

struct MismatchReport {
    std::size_t k = 0;
    double lambda = 0.0;
    MismatchScores control;   // test and datastore from the training domain
    MismatchScores mismatch;  // other-domain test, training-domain datastore
};

MismatchReport run_mismatch(Suite& suite);
Table render(const MismatchReport& r);

struct AblationRow {
    std::string group;  // "features", "train_sentences", "hidden"
    std::string setting;
    double accuracy;
};

struct AblationReport {
    std::size_t k = 0;
    double best_vanilla = 0.0;
    std::vector<AblationRow> rows;
    double find(std::string_view group, std::string_view setting) const;
};

AblationReport run_ablate(Suite& suite);
Table render(const AblationReport& r);

struct TimingRow {
    Variant variant;
    std::size_t k;  // 0 for the base model
    std::size_t batch;
    double ms_per_sentence;
};

struct TimingReport {
    std::size_t sentences = 0;
    std::vector<TimingRow> rows;
    double find(Variant v, std::size_t k, std::size_t batch) const;
};

TimingReport run_timing(Suite& suite);
Table render(const TimingReport& r);

}  // namespace aknn
