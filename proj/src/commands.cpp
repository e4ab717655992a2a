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


#include "aknn/commands.hpp"

#include <fmt/format.h>

#include <fstream>
#include <memory>
#include <ostream>
#include <string>

#include "aknn/basemodel.hpp"
#include "aknn/bleu.hpp"
#include "aknn/decode.hpp"
#include "aknn/experiments.hpp"
#include "aknn/util.hpp"

namespace aknn {

namespace {

void ensure_parent(const std::filesystem::path& path) {
    const auto parent = path.parent_path();
    if (parent.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
    AKNN_THROW_IF_NOT(!ec, kIo, fmt::format("cannot create directory {}: {}", parent.string(), ec.message()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    ensure_parent(path);
    auto f = io::open_out(path);
    f << text;
    f.flush();
    AKNN_THROW_IF_NOT(f.good(), kIo, fmt::format("write failed: {}", path.string()));
}

struct Retrieval {
    std::unique_ptr<Datastore> ds;
    std::unique_ptr<IvfIndex> index;
    std::unique_ptr<Retriever> retriever;
};

Retrieval load_retrieval(const ExperimentConfig& cfg, const BaseModel& base) {
    Retrieval r;
    r.ds = std::make_unique<Datastore>(load_datastore(cfg.paths.datastore));
    AKNN_THROW_IF_NOT(r.ds->dim() == base.context_dim() && r.ds->vocab_size() == base.vocab_size(), kShapeMismatch,
                      fmt::format("{} has dim {} and vocab {}, config expects {} and {}", cfg.paths.datastore,
                                  r.ds->dim(), r.ds->vocab_size(), base.context_dim(), base.vocab_size()));
    r.index = std::make_unique<IvfIndex>(load_ivf(cfg.paths.index));
    r.index->check_compatible(*r.ds);
    const std::size_t lists = r.index->n_centroids();
    const std::size_t nprobe = cfg.nprobe == 0 ? lists : std::min(cfg.nprobe, lists);
    r.retriever = std::make_unique<Retriever>(*r.ds, r.index.get(), nprobe, cfg.metric);
    return r;
}

MetakModel load_checkpoint(const ExperimentConfig& cfg) {
    auto model = load_metak(cfg.paths.checkpoint);
    AKNN_THROW_IF_NOT(model.config.max_k == cfg.metak.max_k, kShapeMismatch,
                      fmt::format("{} was trained for K={}, config has metak.max_k={}", cfg.paths.checkpoint,
                                  model.config.max_k, cfg.metak.max_k));
    return model;
}

/// Base model, retrieval and Meta-k for the configured decode variant.
struct Pipeline {
    ExperimentConfig cfg;
    std::unique_ptr<ToyBaseModel> base;
    Retrieval retrieval;
    std::unique_ptr<MetakModel> metak;
    std::unique_ptr<Predictor> predictor;

    explicit Pipeline(ExperimentConfig c) : cfg(std::move(c)) {
        base = std::make_unique<ToyBaseModel>(build_base_model(cfg.task));
        PredictorConfig pc{cfg.variant, 1, cfg.temperature, 0.0};
        switch (cfg.variant) {
            case Variant::kBase:
                break;
            case Variant::kVanilla:
                pc.k = cfg.k;
                pc.lambda = cfg.lambda;
                break;
            case Variant::kUniform:
                pc.k = cfg.metak.max_k;
                break;
            case Variant::kAdaptive:
                pc.k = cfg.metak.max_k;
                metak = std::make_unique<MetakModel>(load_checkpoint(cfg));
                break;
        }
        if (cfg.variant != Variant::kBase) retrieval = load_retrieval(cfg, *base);
        predictor = std::make_unique<Predictor>(*base, retrieval.retriever.get(), pc, metak.get());
    }
};

void cmd_gen_corpus(const ExperimentConfig& cfg, std::ostream& out) {
    const std::pair<Split, const std::string*> splits[] = {
        {Split::kTrain, &cfg.paths.train}, {Split::kDev, &cfg.paths.dev}, {Split::kTest, &cfg.paths.test}};
    for (const auto& [split, path] : splits) {
        const auto corpus = domain_corpus(cfg.task, cfg.domain, split);
        ensure_parent(*path);
        write_corpus(corpus, *path);
        out << fmt::format("{} {}: {} sentences, {} target tokens -> {}\n", cfg.domain, to_string(split),
                           corpus.size(), corpus.target_tokens(), *path);
    }
}

void cmd_build_datastore(const ExperimentConfig& cfg, std::ostream& out) {
    const auto corpus = read_corpus(cfg.paths.train, Split::kTrain, cfg.task.vocab_size);
    const auto base = build_base_model(cfg.task);
    const auto ds = build_datastore(base, corpus);
    const auto index = train_ivf(ds, effective_ivf_options(cfg, ds.size()));
    ensure_parent(cfg.paths.datastore);
    save_datastore(ds, cfg.paths.datastore);
    ensure_parent(cfg.paths.index);
    save_ivf(index, cfg.paths.index);
    out << fmt::format("entries {} dim {} lists {}\n", ds.size(), ds.dim(), index.n_centroids());
    out << fmt::format("datastore -> {}\nindex -> {}\n", cfg.paths.datastore, cfg.paths.index);
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
    const auto base = build_base_model(cfg.task);
    const auto retrieval = load_retrieval(cfg, base);
    const std::size_t K = cfg.metak.max_k;
    // With exclude_self the network trains on the datastore's own corpus.
    const auto& path = cfg.exclude_self ? cfg.paths.train : cfg.paths.dev;
    const auto corpus = read_corpus(path, cfg.exclude_self ? Split::kTrain : Split::kDev, cfg.task.vocab_size);
    const auto set = build_eval_set(base, *retrieval.retriever, corpus, K, cfg.exclude_self);
    const auto samples = training_samples(set, corpus, base, K, cfg.temperature, cfg.metak.mask);
    const auto result = train_metak(samples, cfg.metak, cfg.train);
    ensure_parent(cfg.paths.checkpoint);
    save_metak(result.model, cfg.paths.checkpoint);
    std::string curve = "step\tloss\n";
    for (const auto& p : result.loss_curve) curve += fmt::format("{}\t{:.9g}\n", p.step, p.loss);
    write_text(cfg.paths.loss_curve, curve);
    out << fmt::format("K {} parameters {} samples {} steps {}\n", K, result.model.parameter_count(), samples.size(),
                       cfg.train.steps);
    if (!result.loss_curve.empty()) {
        out << fmt::format("loss {:.6f} -> {:.6f}\n", result.loss_curve.front().loss, result.loss_curve.back().loss);
    }
    if (result.clamped) out << fmt::format("warning: {} samples hit the probability floor\n", result.clamped);
    out << fmt::format("checkpoint -> {}\nloss curve -> {}\n", cfg.paths.checkpoint, cfg.paths.loss_curve);
}

void cmd_decode(const ExperimentConfig& cfg, std::ostream& out) {
    const auto test = read_corpus(cfg.paths.test, Split::kTest, cfg.task.vocab_size);
    const Pipeline p(cfg);
    const auto hyps = decode_corpus(*p.predictor, test, cfg.decode);
    ensure_parent(cfg.paths.hypotheses);
    write_sequences(hyps, cfg.paths.hypotheses);
    out << fmt::format("{} {} sentences ({}) -> {}\n", to_string(cfg.variant), hyps.size(),
                       cfg.decode.beam ? fmt::format("beam {}", cfg.decode.beam) : std::string("greedy"),
                       cfg.paths.hypotheses);
}

void cmd_score(const ExperimentConfig& cfg, std::ostream& out) {
    const auto test = read_corpus(cfg.paths.test, Split::kTest, cfg.task.vocab_size);
    const Pipeline p(cfg);
    const auto r = teacher_forced_accuracy(*p.predictor, test);
    out << fmt::format("variant {} k {} accuracy {:.6f} ({}/{})\n", to_string(cfg.variant),
                       p.predictor->config().k, r.accuracy(), r.correct, r.total);
}

void cmd_evaluate(const ExperimentConfig& cfg, std::ostream& out) {
    const auto hyps = read_sequences(cfg.paths.hypotheses);
    std::vector<std::vector<TokenId>> refs;
    if (!cfg.paths.references.empty()) {
        refs = read_sequences(cfg.paths.references);
    } else {
        for (auto& pair : read_corpus(cfg.paths.test, Split::kTest, cfg.task.vocab_size).pairs) {
            refs.push_back(std::move(pair.target));
        }
    }
    AKNN_THROW_IF_NOT(hyps.size() == refs.size(), kShapeMismatch,
                      fmt::format("{} has {} lines but there are {} references", cfg.paths.hypotheses, hyps.size(),
                                  refs.size()));
    const auto b = corpus_bleu(hyps, refs);
    out << fmt::format("BLEU {:.2f} ({:.1f}/{:.1f}/{:.1f}/{:.1f}, BP {:.4f}, hyp {} ref {})\n", b.bleu,
                       100.0 * b.precisions[0], 100.0 * b.precisions[1], 100.0 * b.precisions[2],
                       100.0 * b.precisions[3], b.brevity_penalty, b.hyp_length, b.ref_length);
    out << fmt::format("positional accuracy {:.6f}\n", positional_accuracy(hyps, refs));
}

template <typename Run>
void report(const ExperimentConfig& cfg, std::string_view name, Run run, std::ostream& out) {
    Suite suite(cfg);
    const Table t = render(run(suite));
    const std::filesystem::path dir(cfg.paths.dir);
    write_text(dir / fmt::format("{}.txt", name), t.text);
    write_text(dir / fmt::format("{}.tsv", name), t.tsv);
    out << t.text;
}

void cmd_transfer(const ExperimentConfig& cfg, std::ostream& out) {
    Suite suite(cfg);
    if (std::filesystem::exists(cfg.paths.checkpoint)) {
        auto model = load_metak(cfg.paths.checkpoint);
        AKNN_THROW_IF_NOT(model.config.max_k == cfg.transfer_k, kShapeMismatch,
                          fmt::format("{} was trained for K={}, experiment.transfer_k is {}", cfg.paths.checkpoint,
                                      model.config.max_k, cfg.transfer_k));
        out << fmt::format("source Meta-k from {}\n", cfg.paths.checkpoint);
        suite.adopt_metak(cfg.domain, std::move(model));
    }
    const Table t = render(run_transfer(suite));
    const std::filesystem::path dir(cfg.paths.dir);
    write_text(dir / "transfer.txt", t.text);
    write_text(dir / "transfer.tsv", t.tsv);
    out << t.text;
}

}  // namespace

const std::vector<CommandInfo>& commands() {
    static const std::vector<CommandInfo> list = {
        {"gen-corpus", "write the synthetic train/dev/test corpora of experiment.domain"},
        {"build-datastore", "encode the training corpus into a datastore and IVF index"},
        {"train", "train the Meta-k network on the dev set"},
        {"decode", "translate the test set with decode.variant"},
        {"score", "teacher-forced token accuracy of decode.variant on the test set"},
        {"evaluate", "corpus BLEU and positional accuracy of a hypothesis file"},
        {"sweep", "vanilla, uniform and adaptive accuracy over K"},
        {"transfer", "apply a Meta-k trained on one domain to the other"},
        {"mismatch", "query a datastore from the other domain"},
        {"timing", "decoding time per sentence by variant, K and batch size"},
        {"ablate", "Meta-k feature, training-size and hidden-size ablations"},
    };
    return list;
}

void run_command(std::string_view name, const Config& config, std::ostream& out) {
    bool known = false;
    for (const auto& c : commands()) known = known || c.name == name;
    AKNN_THROW_IF_NOT(known, kInvalidArgument, fmt::format("unknown command '{}'", name));
    const auto cfg = resolve_config(config);
    if (name == "gen-corpus") return cmd_gen_corpus(cfg, out);
    if (name == "build-datastore") return cmd_build_datastore(cfg, out);
    if (name == "train") return cmd_train(cfg, out);
    if (name == "decode") return cmd_decode(cfg, out);
    if (name == "score") return cmd_score(cfg, out);
    if (name == "evaluate") return cmd_evaluate(cfg, out);
    if (name == "transfer") return cmd_transfer(cfg, out);
    if (name == "sweep") return report(cfg, name, run_sweep, out);
    if (name == "mismatch") return report(cfg, name, run_mismatch, out);
    if (name == "timing") return report(cfg, name, run_timing, out);
    report(cfg, name, run_ablate, out);
}

std::vector<std::vector<std::uint32_t>> read_sequences(const std::filesystem::path& path) {
    auto in = io::open_in(path);
    std::vector<std::vector<std::uint32_t>> seqs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        try {
            seqs.push_back(parse_token_ids(line));
        } catch (const Error& e) {
            throw Error(ErrorCode::kCorrupt, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
    }
    return seqs;
}

void write_sequences(const std::vector<std::vector<std::uint32_t>>& seqs, const std::filesystem::path& path) {
    std::string text;
    for (const auto& s : seqs) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) text += ' ';
            text += std::to_string(s[i]);
        }
        text += '\n';
    }
    write_text(path, text);
}

}  // namespace aknn
