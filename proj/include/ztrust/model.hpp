// Multinomial logistic regression and the local SGD trainer. Parameters are a
// flat vector, class-major: [w_c0..w_c(F-1), b_c] for each class c, so
// dim = n_classes * (n_features + 1). Everything here is a pure function of
// its inputs; identical inputs give bit-identical outputs.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ztrust/data.hpp"
#include "ztrust/hash.hpp"
#include "ztrust/rng.hpp"

namespace ztrust {

using ParamVector = std::vector<double>;

struct ModelShape {
    int n_features = 0;
    int n_classes = 0;

    int param_dim() const { return n_classes * (n_features + 1); }

    void validate() const {
        if (n_features < 1) throw std::invalid_argument("ModelShape: n_features must be >= 1");
        if (n_classes < 2) throw std::invalid_argument("ModelShape: n_classes must be >= 2");
    }
};

struct TrainConfig {
    int epochs = 1;
    int batch_size = 10;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(learning_rate >= 0.0)) {
            throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
        }
    }
};

namespace detail {

inline void check_params(const ParamVector& params, const ModelShape& shape) {
    shape.validate();
    if (params.size() != static_cast<std::size_t>(shape.param_dim())) {
        throw std::invalid_argument("model: params dimension does not match shape");
    }
}

inline void class_scores(const ParamVector& params, const ModelShape& shape,
                         std::span<const double> features, std::vector<double>& scores) {
    const int stride = shape.n_features + 1;
    scores.resize(shape.n_classes);
    for (int c = 0; c < shape.n_classes; ++c) {
        const double* w = params.data() + static_cast<std::size_t>(c) * stride;
        double s = w[shape.n_features];  // bias
        for (int d = 0; d < shape.n_features; ++d) s += w[d] * features[d];
        scores[c] = s;
    }
}

inline void softmax_inplace(std::vector<double>& scores) {
    const double max_score = *std::max_element(scores.begin(), scores.end());
    double total = 0.0;
    for (double& s : scores) {
        s = std::exp(s - max_score);
        total += s;
    }
    for (double& s : scores) s /= total;
}

}  // namespace detail

inline std::vector<double> predict(const ParamVector& params, const ModelShape& shape,
                                   std::span<const double> features) {
    detail::check_params(params, shape);
    if (features.size() != static_cast<std::size_t>(shape.n_features)) {
        throw std::invalid_argument("predict: feature dimension does not match shape");
    }
    std::vector<double> probs;
    detail::class_scores(params, shape, features, probs);
    detail::softmax_inplace(probs);
    return probs;
}

inline int predict_class(const ParamVector& params, const ModelShape& shape,
                         std::span<const double> features) {
    const auto probs = predict(params, shape, features);
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// Gradient of the mean cross-entropy loss over the batch; same layout as params.
inline ParamVector gradient(const ParamVector& params, const ModelShape& shape,
                            std::span<const Sample> batch) {
    detail::check_params(params, shape);
    if (batch.empty()) throw std::invalid_argument("gradient: empty batch");

    const int stride = shape.n_features + 1;
    ParamVector grad(params.size(), 0.0);
    std::vector<double> probs;
    for (const Sample& sample : batch) {
        if (sample.features.size() != static_cast<std::size_t>(shape.n_features)) {
            throw std::invalid_argument("gradient: feature dimension does not match shape");
        }
        if (sample.label < 0 || sample.label >= shape.n_classes) {
            throw std::invalid_argument("gradient: label out of range");
        }
        detail::class_scores(params, shape, sample.features, probs);
        detail::softmax_inplace(probs);
        for (int c = 0; c < shape.n_classes; ++c) {
            const double residual = probs[c] - (c == sample.label ? 1.0 : 0.0);
            double* g = grad.data() + static_cast<std::size_t>(c) * stride;
            for (int d = 0; d < shape.n_features; ++d) g[d] += residual * sample.features[d];
            g[shape.n_features] += residual;
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : grad) g *= inv;
    return grad;
}

inline double mean_cross_entropy(const ParamVector& params, const ModelShape& shape,
                                 std::span<const Sample> samples) {
    detail::check_params(params, shape);
    if (samples.empty()) throw std::invalid_argument("mean_cross_entropy: empty sample set");
    double total = 0.0;
    std::vector<double> probs;
    for (const Sample& sample : samples) {
        detail::class_scores(params, shape, sample.features, probs);
        detail::softmax_inplace(probs);
        total += -std::log(std::max(probs[sample.label], 1e-300));
    }
    return total / static_cast<double>(samples.size());
}

// Local SGD: warm-starts from the global parameters, per-epoch Fisher-Yates
// shuffle seeded by derive_seed(cfg.seed, epoch, 0, "shuffle"), consecutive
// batches with a final partial batch. Returns the parameter delta
// (trained - global).
inline ParamVector local_train(const ParamVector& global_params, const ModelShape& shape,
                               std::span<const Sample> shard, const TrainConfig& cfg) {
    detail::check_params(global_params, shape);
    cfg.validate();
    if (shard.empty()) throw std::invalid_argument("local_train: empty shard");

    ParamVector params = global_params;
    std::vector<Sample> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, epoch, 0, "shuffle"));
        const auto order = rng.permutation(shard.size());
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(shard[order[i]]);
            const ParamVector grad = gradient(params, shape, batch);
            for (std::size_t j = 0; j < params.size(); ++j) {
                params[j] -= cfg.learning_rate * grad[j];
            }
        }
    }
    for (std::size_t j = 0; j < params.size(); ++j) params[j] -= global_params[j];
    return params;
}

}  // namespace ztrust
