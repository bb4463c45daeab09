// Incremental fixed-width hyperspherical clustering of context features,
// inter-cluster-distance anomaly scoring, and the per-device anomaly score
// that feeds trust. Devices cluster locally and share only cluster summaries;
// summaries merge into a global set where sparse, far-away clusters stand out.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace ztrust {

struct ClusterSummary {
    std::vector<double> center;
    std::uint64_t count = 0;
};

struct AnomalyParams {
    std::size_t k_neighbors = 3;   // nearest-cluster count for ICD
    double sensitivity = 2.0;      // deviation multiplier for flagging
    double score_normalizer = 0.0; // <= 0 selects auto: mean ICD, or 1.0 if that is 0

    void validate() const {
        if (k_neighbors == 0) throw std::invalid_argument("AnomalyParams: k_neighbors must be >= 1");
        if (!(sensitivity > 0.0)) {
            throw std::invalid_argument("AnomalyParams: sensitivity must be > 0");
        }
        if (std::isnan(score_normalizer)) {
            throw std::invalid_argument("AnomalyParams: score_normalizer is NaN");
        }
    }
};

namespace detail {

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

}  // namespace detail

// Nearest summary by center distance; ties go to the lower index. Returns
// SIZE_MAX when the list is empty.
inline std::size_t nearest_cluster(std::span<const ClusterSummary> clusters,
                                   std::span<const double> point, double* distance_out = nullptr) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const double d = detail::euclidean(clusters[i].center, point);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    if (distance_out) *distance_out = best_d;
    return best;
}

// A width-w set of hyperspherical clusters over fixed-dimension points. The
// width is fixed for the set's lifetime; insertion is single-pass and
// order-dependent by design.
class ClusterSet {
  public:
    ClusterSet(double width, std::size_t dim) : width_(width), dim_(dim) {
        if (!(width > 0.0)) throw std::invalid_argument("ClusterSet: width must be > 0");
        if (dim == 0) throw std::invalid_argument("ClusterSet: dim must be >= 1");
    }

    double width() const { return width_; }
    std::size_t dim() const { return dim_; }
    const std::vector<ClusterSummary>& clusters() const { return clusters_; }
    bool empty() const { return clusters_.empty(); }
    std::size_t size() const { return clusters_.size(); }

    std::uint64_t total_count() const {
        std::uint64_t total = 0;
        for (const auto& c : clusters_) total += c.count;
        return total;
    }

    // Numbers on the wire when this set is shared: each summary is its center
    // plus a count.
    std::size_t payload_numbers() const { return clusters_.size() * (dim_ + 1); }

    // A point within `width` of the nearest center joins that cluster
    // (running-mean center update); otherwise it seeds a new singleton.
    // Returns the index the point landed in.
    std::size_t insert(std::span<const double> point) {
        if (point.size() != dim_) throw std::invalid_argument("ClusterSet::insert: wrong dimension");
        double d = 0.0;
        const std::size_t idx = nearest_cluster(clusters_, point, &d);
        if (idx != std::numeric_limits<std::size_t>::max() && d <= width_) {
            ClusterSummary& c = clusters_[idx];
            c.count += 1;
            const double inv = 1.0 / static_cast<double>(c.count);
            for (std::size_t j = 0; j < dim_; ++j) c.center[j] += (point[j] - c.center[j]) * inv;
            return idx;
        }
        clusters_.push_back(ClusterSummary{{point.begin(), point.end()}, 1});
        return clusters_.size() - 1;
    }

    // Adopts an existing summary verbatim (merge plumbing).
    void adopt(ClusterSummary summary) {
        if (summary.center.size() != dim_) {
            throw std::invalid_argument("ClusterSet::adopt: wrong dimension");
        }
        if (summary.count == 0) throw std::invalid_argument("ClusterSet::adopt: zero count");
        clusters_.push_back(std::move(summary));
    }

    // Repeatedly merges the closest pair of centers at distance <= width into
    // a count-weighted mean (ties: lexicographically smallest index pair)
    // until no pair qualifies.
    void compact() {
        while (clusters_.size() >= 2) {
            std::size_t best_i = 0, best_j = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i + 1 < clusters_.size(); ++i) {
                for (std::size_t j = i + 1; j < clusters_.size(); ++j) {
                    const double d = detail::euclidean(clusters_[i].center, clusters_[j].center);
                    if (d < best_d) {
                        best_d = d;
                        best_i = i;
                        best_j = j;
                    }
                }
            }
            if (!(best_d <= width_)) break;

            ClusterSummary& a = clusters_[best_i];
            const ClusterSummary& b = clusters_[best_j];
            const double na = static_cast<double>(a.count);
            const double nb = static_cast<double>(b.count);
            for (std::size_t k = 0; k < dim_; ++k) {
                a.center[k] = (a.center[k] * na + b.center[k] * nb) / (na + nb);
            }
            a.count += b.count;
            clusters_.erase(clusters_.begin() + static_cast<std::ptrdiff_t>(best_j));
        }
    }

  private:
    double width_;
    std::size_t dim_;
    std::vector<ClusterSummary> clusters_;
};

// Folds device-local sets into one global set: summaries are concatenated in
// input order and then compacted by the closest-pair rule. All sets must
// share width and dimension.
inline ClusterSet merge_cluster_sets(std::span<const ClusterSet> sets) {
    if (sets.empty()) throw std::invalid_argument("merge_cluster_sets: no sets");
    for (const auto& s : sets) {
        if (s.width() != sets.front().width()) {
            throw std::invalid_argument("merge_cluster_sets: mixed widths");
        }
        if (s.dim() != sets.front().dim()) {
            throw std::invalid_argument("merge_cluster_sets: mixed dimensions");
        }
    }
    ClusterSet global(sets.front().width(), sets.front().dim());
    for (const auto& s : sets) {
        for (const auto& c : s.clusters()) global.adopt(c);
    }
    global.compact();
    return global;
}

// Mean distance from each center to its k nearest other centers. Requires
// more clusters than k.
inline std::vector<double> inter_cluster_distances(std::span<const ClusterSummary> clusters,
                                                   std::size_t k_neighbors) {
    if (k_neighbors == 0) throw std::invalid_argument("inter_cluster_distances: k must be >= 1");
    if (clusters.size() <= k_neighbors) {
        throw std::invalid_argument("inter_cluster_distances: need more clusters than k");
    }

    std::vector<double> icd(clusters.size());
    std::vector<double> dists(clusters.size() - 1);
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < clusters.size(); ++j) {
            if (j == i) continue;
            dists[m++] = detail::euclidean(clusters[i].center, clusters[j].center);
        }
        std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k_neighbors),
                          dists.end());
        double sum = 0.0;
        for (std::size_t n = 0; n < k_neighbors; ++n) sum += dists[n];
        icd[i] = sum / static_cast<double>(k_neighbors);
    }
    return icd;
}

struct ClusterScores {
    std::vector<double> icd;     // empty when too few clusters to assess
    std::vector<double> scores;  // per-cluster anomaly score in [0, 1]
    std::vector<bool> flagged;   // icd > mean + sensitivity * std
    double mean_icd = 0.0;
    double std_icd = 0.0;        // population std across clusters
};

// Flags clusters whose ICD exceeds mean + s * std and scores each as
// clamp(max(0, icd - mean) / normalizer, 0, 1). With k_neighbors or fewer
// clusters there is no meaningful neighborhood, so everything scores 0.
inline ClusterScores local_anomaly_scores(const ClusterSet& set, const AnomalyParams& params) {
    params.validate();
    ClusterScores out;
    out.scores.assign(set.size(), 0.0);
    out.flagged.assign(set.size(), false);
    if (set.size() <= params.k_neighbors) return out;

    out.icd = inter_cluster_distances(set.clusters(), params.k_neighbors);
    double mean = 0.0;
    for (double v : out.icd) mean += v;
    mean /= static_cast<double>(out.icd.size());
    double var = 0.0;
    for (double v : out.icd) var += (v - mean) * (v - mean);
    var /= static_cast<double>(out.icd.size());
    out.mean_icd = mean;
    out.std_icd = std::sqrt(var);

    double normalizer = params.score_normalizer;
    if (!(normalizer > 0.0)) normalizer = mean > 0.0 ? mean : 1.0;

    const double threshold = mean + params.sensitivity * out.std_icd;
    for (std::size_t i = 0; i < out.icd.size(); ++i) {
        out.flagged[i] = out.icd[i] > threshold;
        out.scores[i] = std::clamp(std::max(0.0, out.icd[i] - mean) / normalizer, 0.0, 1.0);
    }
    return out;
}

// Score for one context point against precomputed per-cluster scores: the
// owning (nearest) cluster's score, or 1.0 for an orphan beyond the width.
inline double point_anomaly(const ClusterSet& set, std::span<const double> scores,
                            std::span<const double> point) {
    if (scores.size() != set.size()) {
        throw std::invalid_argument("point_anomaly: score count does not match clusters");
    }
    double d = 0.0;
    const std::size_t idx = nearest_cluster(set.clusters(), point, &d);
    if (idx == std::numeric_limits<std::size_t>::max() || d > set.width()) return 1.0;
    return scores[idx];
}

// Device anomaly a_i: mean point score over the device's round points.
inline double device_anomaly(const ClusterSet& global_set, const AnomalyParams& params,
                             std::span<const std::vector<double>> device_points) {
    if (device_points.empty()) throw std::invalid_argument("device_anomaly: no points");
    const ClusterScores scored = local_anomaly_scores(global_set, params);
    double sum = 0.0;
    for (const auto& p : device_points) sum += point_anomaly(global_set, scored.scores, p);
    return sum / static_cast<double>(device_points.size());
}

// Anomaly evidence enters trust as its complement.
inline double score_to_trust(double anomaly) {
    if (!(anomaly >= 0.0 && anomaly <= 1.0)) {
        throw std::invalid_argument("score_to_trust: anomaly must be in [0, 1]");
    }
    return 1.0 - anomaly;
}

// Per-dimension running standardizer (Welford) used to put context features
// into z-score space, where a single cluster width is serviceable.
class RunningStandardizer {
  public:
    explicit RunningStandardizer(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {
        if (dim == 0) throw std::invalid_argument("RunningStandardizer: dim must be >= 1");
    }

    std::size_t dim() const { return mean_.size(); }
    std::uint64_t observations() const { return n_; }

    void observe(std::span<const double> x) {
        if (x.size() != mean_.size()) {
            throw std::invalid_argument("RunningStandardizer::observe: wrong dimension");
        }
        n_ += 1;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double delta = x[i] - mean_[i];
            mean_[i] += delta / static_cast<double>(n_);
            m2_[i] += delta * (x[i] - mean_[i]);
        }
    }

    // z = (x - mean) / std, with std falling back to 1 for degenerate
    // dimensions so constant features pass through centered.
    std::vector<double> transform(std::span<const double> x) const {
        if (x.size() != mean_.size()) {
            throw std::invalid_argument("RunningStandardizer::transform: wrong dimension");
        }
        std::vector<double> z(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            double sd = 0.0;
            if (n_ >= 2) sd = std::sqrt(m2_[i] / static_cast<double>(n_));
            if (!(sd > 1e-12)) sd = 1.0;
            z[i] = (x[i] - mean_[i]) / sd;
        }
        return z;
    }

  private:
    std::uint64_t n_ = 0;
    std::vector<double> mean_;
    std::vector<double> m2_;
};

}  // namespace ztrust
