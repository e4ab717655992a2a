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


#include "aknn/aknn.h"

#include <algorithm>
#include <cstdint>
#include <exception>
#include <memory>
#include <new>
#include <ostream>
#include <streambuf>
#include <string>
#include <utility>
#include <vector>

#include "aknn/commands.hpp"
#include "aknn/config.hpp"
#include "aknn/datastore.hpp"
#include "aknn/experiments.hpp"
#include "aknn/ivf.hpp"
#include "aknn/knn.hpp"
#include "aknn/metak.hpp"
#include "aknn/util.hpp"

struct aknn_datastore {
    explicit aknn_datastore(aknn::Datastore d) : ds(std::move(d)), fingerprint(ds.fingerprint()) {}
    aknn::Datastore ds;
    std::uint64_t fingerprint;
};
struct aknn_ivf {
    aknn::IvfIndex index;
};
struct aknn_metak {
    aknn::MetakModel model;
};
struct aknn_config {
    aknn::Config config;
};

namespace {

thread_local std::string g_last_error;

aknn_status fail(aknn_status status, std::string message) {
    g_last_error = std::move(message);
    return status;
}

template <typename F>
aknn_status guard(F&& f) {
    try {
        f();
        g_last_error.clear();
        return AKNN_OK;
    } catch (const aknn::Error& e) {
        return fail(static_cast<aknn_status>(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(AKNN_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(AKNN_INTERNAL, e.what());
    }
}

void require(const void* p, const char* what) {
    AKNN_THROW_IF_NOT(p != nullptr, kInvalidArgument, std::string(what) + " is null");
}

aknn::Metric to_metric(aknn_metric m) {
    AKNN_THROW_IF_NOT(m == AKNN_SQUARED_L2 || m == AKNN_L2, kInvalidArgument, "unknown metric");
    return m == AKNN_L2 ? aknn::Metric::kL2 : aknn::Metric::kSquaredL2;
}

void copy_out(const aknn::NeighborList& list, uint64_t* indices, uint32_t* values, double* distances) {
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (indices) indices[i] = list[i].index;
        if (values) values[i] = list[i].value;
        if (distances) distances[i] = list[i].distance;
    }
}

class SinkBuf : public std::streambuf {
  public:
    SinkBuf(aknn_write_fn fn, void* user) : fn_(fn), user_(user) {}

  protected:
    std::streamsize xsputn(const char* s, std::streamsize n) override {
        if (fn_ && n > 0) fn_(s, static_cast<size_t>(n), user_);
        return n;
    }
    int_type overflow(int_type c) override {
        if (c != traits_type::eof()) {
            const char ch = traits_type::to_char_type(c);
            if (fn_) fn_(&ch, 1, user_);
        }
        return traits_type::not_eof(c);
    }

  private:
    aknn_write_fn fn_;
    void* user_;
};

}  // namespace

extern "C" {

const char* aknn_last_error(void) { return g_last_error.c_str(); }

const char* aknn_status_name(aknn_status status) {
    switch (status) {
        case AKNN_OK:
            return "ok";
        case AKNN_INTERNAL:
            return "internal";
        default:
            if (status >= AKNN_INVALID_ARGUMENT && status <= AKNN_SHAPE_MISMATCH) {
                return aknn::error_code_name(static_cast<aknn::ErrorCode>(status));
            }
            return "unknown";
    }
}

const char* aknn_version(void) { return "0.1.0"; }

aknn_status aknn_datastore_create(uint32_t dim, uint32_t vocab_size, const float* keys, const uint32_t* values,
                                  uint64_t n, aknn_datastore** out) {
    return guard([&] {
        require(out, "out");
        if (n > 0) {
            require(keys, "keys");
            require(values, "values");
        }
        std::vector<float> k(keys, keys + n * dim);
        std::vector<aknn::TokenId> v(values, values + n);
        *out = new aknn_datastore(aknn::Datastore(dim, vocab_size, std::move(k), std::move(v)));
    });
}

aknn_status aknn_datastore_load(const char* path, aknn_datastore** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = new aknn_datastore(aknn::load_datastore(path));
    });
}

aknn_status aknn_datastore_save(const aknn_datastore* ds, const char* path) {
    return guard([&] {
        require(ds, "datastore");
        require(path, "path");
        aknn::save_datastore(ds->ds, path);
    });
}

void aknn_datastore_free(aknn_datastore* ds) { delete ds; }

uint64_t aknn_datastore_size(const aknn_datastore* ds) { return ds ? ds->ds.size() : 0; }

uint32_t aknn_datastore_dim(const aknn_datastore* ds) { return ds ? ds->ds.dim() : 0; }

uint32_t aknn_datastore_vocab_size(const aknn_datastore* ds) { return ds ? ds->ds.vocab_size() : 0; }

aknn_status aknn_exact_search(const aknn_datastore* ds, const float* query, size_t k, aknn_metric metric,
                              uint64_t* indices, uint32_t* values, double* distances) {
    return guard([&] {
        require(ds, "datastore");
        require(query, "query");
        const auto list = aknn::exact_search(ds->ds, {query, ds->ds.dim()}, k, to_metric(metric));
        copy_out(list, indices, values, distances);
    });
}

aknn_status aknn_ivf_train(const aknn_datastore* ds, size_t n_centroids, size_t n_iters, uint64_t seed,
                           aknn_ivf** out) {
    return guard([&] {
        require(ds, "datastore");
        require(out, "out");
        *out = new aknn_ivf{aknn::train_ivf(ds->ds, {n_centroids, n_iters, seed})};
    });
}

aknn_status aknn_ivf_load(const char* path, aknn_ivf** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = new aknn_ivf{aknn::load_ivf(path)};
    });
}

aknn_status aknn_ivf_save(const aknn_ivf* index, const char* path) {
    return guard([&] {
        require(index, "index");
        require(path, "path");
        aknn::save_ivf(index->index, path);
    });
}

void aknn_ivf_free(aknn_ivf* index) { delete index; }

size_t aknn_ivf_n_centroids(const aknn_ivf* index) { return index ? index->index.n_centroids() : 0; }

aknn_status aknn_ivf_search(const aknn_ivf* index, const aknn_datastore* ds, const float* query, size_t k,
                            size_t nprobe, aknn_metric metric, uint64_t* indices, uint32_t* values,
                            double* distances, size_t* found) {
    return guard([&] {
        require(index, "index");
        require(ds, "datastore");
        require(query, "query");
        const auto& ix = index->index;
        AKNN_THROW_IF_NOT(ix.dim() == ds->ds.dim() && ix.entry_count() == ds->ds.size() &&
                              ix.datastore_fingerprint() == ds->fingerprint,
                          kShapeMismatch, "index was not built from this datastore");
        const auto list = index->index.search(ds->ds, {query, ds->ds.dim()}, k, nprobe, to_metric(metric));
        copy_out(list, indices, values, distances);
        if (found) *found = list.size();
    });
}

aknn_status aknn_knn_distribution(const double* distances, const uint32_t* values, size_t n, double temperature,
                                  uint32_t vocab_size, double* out) {
    return guard([&] {
        require(out, "out");
        if (n > 0) {
            require(distances, "distances");
            require(values, "values");
        }
        aknn::NeighborList list(n);
        for (std::size_t i = 0; i < n; ++i) list[i] = {distances[i], values[i], i};
        const auto p = aknn::knn_distribution(list, temperature, vocab_size);
        std::copy(p.begin(), p.end(), out);
    });
}

aknn_status aknn_metak_load(const char* path, aknn_metak** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = new aknn_metak{aknn::load_metak(path)};
    });
}

aknn_status aknn_metak_save(const aknn_metak* model, const char* path) {
    return guard([&] {
        require(model, "model");
        require(path, "path");
        aknn::save_metak(model->model, path);
    });
}

void aknn_metak_free(aknn_metak* model) { delete model; }

size_t aknn_metak_max_k(const aknn_metak* model) { return model ? model->model.config.max_k : 0; }

size_t aknn_metak_n_choices(const aknn_metak* model) { return model ? model->model.choices().size() : 0; }

aknn_status aknn_metak_forward(const aknn_metak* model, const double* features, double* out) {
    return guard([&] {
        require(model, "model");
        require(features, "features");
        require(out, "out");
        const auto p = aknn::metak_forward(model->model, {features, model->model.input_size()});
        std::copy(p.begin(), p.end(), out);
    });
}

aknn_status aknn_config_new(aknn_config** out) {
    return guard([&] {
        require(out, "out");
        *out = new aknn_config{};
    });
}

aknn_status aknn_config_load(const char* path, aknn_config** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = new aknn_config{aknn::Config::load(path)};
    });
}

aknn_status aknn_config_parse(const char* text, aknn_config** out) {
    return guard([&] {
        require(text, "text");
        require(out, "out");
        *out = new aknn_config{aknn::Config::parse(text)};
    });
}

void aknn_config_free(aknn_config* config) { delete config; }

aknn_status aknn_config_set(aknn_config* config, const char* key, const char* value) {
    return guard([&] {
        require(config, "config");
        require(key, "key");
        require(value, "value");
        config->config.set(key, value);
    });
}

aknn_status aknn_config_override(aknn_config* config, const char* assignment) {
    return guard([&] {
        require(config, "config");
        require(assignment, "assignment");
        config->config.apply_override(assignment);
    });
}

size_t aknn_config_key_count(void) { return aknn::config_defaults().size(); }

const char* aknn_config_key(size_t i) {
    const auto& d = aknn::config_defaults();
    return i < d.size() ? d[i].first.c_str() : nullptr;
}

const char* aknn_config_default(size_t i) {
    const auto& d = aknn::config_defaults();
    return i < d.size() ? d[i].second.c_str() : nullptr;
}

size_t aknn_command_count(void) { return aknn::commands().size(); }

const char* aknn_command_name(size_t i) {
    const auto& c = aknn::commands();
    return i < c.size() ? c[i].name.data() : nullptr;
}

const char* aknn_command_summary(size_t i) {
    const auto& c = aknn::commands();
    return i < c.size() ? c[i].summary.data() : nullptr;
}

aknn_status aknn_command_run(const char* name, const aknn_config* config, aknn_write_fn sink, void* user) {
    return guard([&] {
        require(name, "name");
        require(config, "config");
        SinkBuf buf(sink, user);
        std::ostream out(&buf);
        aknn::run_command(name, config->config, out);
    });
}

}  // extern "C"
