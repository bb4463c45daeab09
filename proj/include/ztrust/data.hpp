// Dataset generation, holdout splitting, and per-device partitioning.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ztrust/rng.hpp"

namespace ztrust {

struct Sample {
    std::vector<double> features;
    int label = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    int n_features = 0;
    int n_classes = 0;

    std::size_t size() const { return samples.size(); }
};

enum class PartitionMode { iid, label_shard };

struct PartitionSpec {
    PartitionMode mode = PartitionMode::iid;
    int shards_per_device = 1;  // label_shard only
    std::uint64_t seed = 0;
};

// Gaussian blobs laid out as a ladder: class c's mean sits at
// c * class_separation along the first feature axis, so adjacent class means
// are exactly class_separation apart and the remaining axes carry pure noise.
// Unit covariance around the mean, class counts balanced within +-1, then a
// global seeded shuffle.
inline Dataset gen_synthetic(std::size_t n_samples, int n_features, int n_classes,
                             double class_separation, std::uint64_t seed) {
    if (n_classes < 2) throw std::invalid_argument("gen_synthetic: n_classes must be >= 2");
    if (n_features < 1) throw std::invalid_argument("gen_synthetic: n_features must be >= 1");
    if (n_samples < static_cast<std::size_t>(n_classes)) {
        throw std::invalid_argument("gen_synthetic: n_samples must be >= n_classes");
    }
    if (!(class_separation > 0.0)) {
        throw std::invalid_argument("gen_synthetic: class_separation must be > 0");
    }

    Rng rng(seed);
    std::vector<std::vector<double>> means(n_classes, std::vector<double>(n_features));
    for (int c = 0; c < n_classes; ++c) {
        means[c][0] = (static_cast<double>(c) + 1.0) * class_separation;
    }

    Dataset ds;
    ds.n_features = n_features;
    ds.n_classes = n_classes;
    ds.samples.reserve(n_samples);
    const std::size_t base = n_samples / static_cast<std::size_t>(n_classes);
    const std::size_t extra = n_samples % static_cast<std::size_t>(n_classes);
    for (int c = 0; c < n_classes; ++c) {
        const std::size_t count = base + (static_cast<std::size_t>(c) < extra ? 1 : 0);
        for (std::size_t k = 0; k < count; ++k) {
            Sample s;
            s.label = c;
            s.features.resize(n_features);
            for (int d = 0; d < n_features; ++d) {
                s.features[d] = means[c][d] + rng.gaussian();
            }
            ds.samples.push_back(std::move(s));
        }
    }

    const auto order = rng.permutation(ds.samples.size());
    std::vector<Sample> shuffled(ds.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) shuffled[i] = std::move(ds.samples[order[i]]);
    ds.samples = std::move(shuffled);
    return ds;
}

struct HoldoutSplit {
    Dataset train;
    Dataset test;
};

// Seeded shuffle, then the first round(n * test_fraction) samples become the
// held-out set.
inline HoldoutSplit split_holdout(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("split_holdout: test_fraction must be in [0, 1)");
    }
    Rng rng(seed);
    const auto order = rng.permutation(ds.samples.size());
    const auto n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(ds.samples.size()) * test_fraction));

    HoldoutSplit split;
    split.train.n_features = split.test.n_features = ds.n_features;
    split.train.n_classes = split.test.n_classes = ds.n_classes;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_test ? split.test : split.train).samples.push_back(ds.samples[order[i]]);
    }
    return split;
}

// Shards are index lists into the dataset: pairwise disjoint and exhaustive.
// iid deals a seeded shuffle round-robin; label_shard slices the label-sorted
// index list into n_devices * shards_per_device chunks and deals
// shards_per_device random chunks to each device.
inline std::vector<std::vector<std::size_t>> partition(const Dataset& ds, int n_devices,
                                                       const PartitionSpec& spec) {
    if (n_devices < 1) throw std::invalid_argument("partition: n_devices must be >= 1");
    if (static_cast<std::size_t>(n_devices) > ds.samples.size()) {
        throw std::invalid_argument("partition: n_devices exceeds n_samples");
    }

    Rng rng(spec.seed);
    std::vector<std::vector<std::size_t>> shards(n_devices);

    if (spec.mode == PartitionMode::iid) {
        const auto order = rng.permutation(ds.samples.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            shards[i % static_cast<std::size_t>(n_devices)].push_back(order[i]);
        }
        return shards;
    }

    if (spec.shards_per_device < 1) {
        throw std::invalid_argument("partition: shards_per_device must be >= 1");
    }
    const std::size_t n_chunks =
        static_cast<std::size_t>(n_devices) * static_cast<std::size_t>(spec.shards_per_device);
    if (n_chunks > ds.samples.size()) {
        throw std::invalid_argument("partition: n_devices * shards_per_device exceeds n_samples");
    }

    std::vector<std::size_t> by_label(ds.samples.size());
    std::iota(by_label.begin(), by_label.end(), 0);
    std::stable_sort(by_label.begin(), by_label.end(), [&](std::size_t a, std::size_t b) {
        return ds.samples[a].label < ds.samples[b].label;
    });

    std::vector<std::vector<std::size_t>> chunks(n_chunks);
    for (std::size_t c = 0; c < n_chunks; ++c) {
        const std::size_t begin = by_label.size() * c / n_chunks;
        const std::size_t end = by_label.size() * (c + 1) / n_chunks;
        chunks[c].assign(by_label.begin() + begin, by_label.begin() + end);
    }

    const auto chunk_order = rng.permutation(n_chunks);
    for (int d = 0; d < n_devices; ++d) {
        for (int s = 0; s < spec.shards_per_device; ++s) {
            const auto& chunk = chunks[chunk_order[static_cast<std::size_t>(d) *
                                                       spec.shards_per_device +
                                                   s]];
            shards[d].insert(shards[d].end(), chunk.begin(), chunk.end());
        }
    }
    return shards;
}

inline std::vector<Sample> materialize_shard(const Dataset& ds,
                                             const std::vector<std::size_t>& shard) {
    std::vector<Sample> out;
    out.reserve(shard.size());
    for (std::size_t idx : shard) out.push_back(ds.samples[idx]);
    return out;
}

}  // namespace ztrust
