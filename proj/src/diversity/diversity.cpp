#include "diversity/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/error.hpp"

namespace synth::diversity {

EmbeddingMatrix embed_captions(const std::vector<capgen::CaptionRecord>& captions,
                               const lm::Lm<float>& model) {
    if (captions.empty()) throw DataError("embed_captions: empty corpus");
    EmbeddingMatrix m;
    m.rows = static_cast<int>(captions.size());
    m.cols = model.config().dim;
    m.data.resize(static_cast<size_t>(m.rows) * m.cols);
    for (int i = 0; i < m.rows; ++i) {
        const auto emb = model.pooled_embedding(captions[static_cast<size_t>(i)].token_ids);
        const auto v = emb.value();
        std::copy(v.begin(), v.end(), m.data.begin() + static_cast<size_t>(i) * m.cols);
    }
    return m;
}

namespace {

double sq_dist(const float* a, const double* b, int d) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
        const double diff = static_cast<double>(a[j]) - b[j];
        acc += diff * diff;
    }
    return acc;
}

int count_distinct_rows(const EmbeddingMatrix& x) {
    std::vector<int> order(static_cast<size_t>(x.rows));
    std::iota(order.begin(), order.end(), 0);
    const int d = x.cols;
    auto cmp = [&](int a, int b) {
        const float* ra = x.row(a);
        const float* rb = x.row(b);
        for (int j = 0; j < d; ++j) {
            if (ra[j] < rb[j]) return true;
            if (ra[j] > rb[j]) return false;
        }
        return false;
    };
    std::sort(order.begin(), order.end(), cmp);
    int distinct = x.rows == 0 ? 0 : 1;
    for (size_t i = 1; i < order.size(); ++i)
        if (cmp(order[i - 1], order[i])) ++distinct;
    return distinct;
}

}  // namespace

ClusterReport kmeans(const EmbeddingMatrix& x, int k, uint64_t seed, int max_iter, double tol) {
    if (k <= 0) throw ParameterError("kmeans: k must be positive");
    if (x.rows < k) throw ParameterError("kmeans: fewer points than clusters");
    const int distinct = count_distinct_rows(x);
    if (distinct < k)
        throw DataError("kmeans: only " + std::to_string(distinct) +
                        " distinct points; reduce k below that");

    const int m = x.rows, d = x.cols;
    Rng rng = Rng::derive(seed, 0x4b);

    // k-means++ seeding.
    std::vector<double> centroids(static_cast<size_t>(k) * d);
    std::vector<double> best_dist(static_cast<size_t>(m), std::numeric_limits<double>::infinity());
    {
        const int first = rng.randint(0, m);
        for (int j = 0; j < d; ++j) centroids[static_cast<size_t>(j)] = x.row(first)[j];
        for (int c = 1; c < k; ++c) {
            double total = 0.0;
            for (int i = 0; i < m; ++i) {
                const double dist = sq_dist(x.row(i), centroids.data() + static_cast<size_t>(c - 1) * d, d);
                best_dist[static_cast<size_t>(i)] = std::min(best_dist[static_cast<size_t>(i)], dist);
                total += best_dist[static_cast<size_t>(i)];
            }
            int chosen = m - 1;
            if (total > 0.0) {
                const double u = rng.uniform() * total;
                double acc = 0.0;
                for (int i = 0; i < m; ++i) {
                    acc += best_dist[static_cast<size_t>(i)];
                    if (u < acc) {
                        chosen = i;
                        break;
                    }
                }
            } else {
                chosen = rng.randint(0, m);
            }
            for (int j = 0; j < d; ++j)
                centroids[static_cast<size_t>(c) * d + j] = x.row(chosen)[j];
        }
    }

    ClusterReport report;
    report.k = k;
    report.assignments.assign(static_cast<size_t>(m), 0);
    report.sizes.assign(static_cast<size_t>(k), 0);

    std::vector<double> next(static_cast<size_t>(k) * d);
    std::vector<int> counts(static_cast<size_t>(k));
    for (int iter = 0; iter < max_iter; ++iter) {
        // Assignment step + objective under the current centroids.
        double wcss = 0.0;
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < m; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double dist = sq_dist(x.row(i), centroids.data() + static_cast<size_t>(c) * d, d);
                if (dist < bd) {
                    bd = dist;
                    best = c;
                }
            }
            report.assignments[static_cast<size_t>(i)] = best;
            counts[static_cast<size_t>(best)] += 1;
            wcss += bd;
        }
        // Empty clusters grab the point farthest from its centroid.
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0) continue;
            int far_i = -1;
            double far_d = -1.0;
            for (int i = 0; i < m; ++i) {
                const int a = report.assignments[static_cast<size_t>(i)];
                if (counts[static_cast<size_t>(a)] <= 1) continue;
                const double dist = sq_dist(x.row(i), centroids.data() + static_cast<size_t>(a) * d, d);
                if (dist > far_d) {
                    far_d = dist;
                    far_i = i;
                }
            }
            if (far_i < 0) continue;
            const int prev = report.assignments[static_cast<size_t>(far_i)];
            counts[static_cast<size_t>(prev)] -= 1;
            counts[static_cast<size_t>(c)] += 1;
            report.assignments[static_cast<size_t>(far_i)] = c;
            wcss -= far_d;  // that point now sits on its own centroid
            for (int j = 0; j < d; ++j)
                centroids[static_cast<size_t>(c) * d + j] = x.row(far_i)[j];
        }
        report.wcss_history.push_back(wcss);
        report.iterations = iter + 1;

        // Update step.
        std::fill(next.begin(), next.end(), 0.0);
        for (int i = 0; i < m; ++i) {
            const int a = report.assignments[static_cast<size_t>(i)];
            for (int j = 0; j < d; ++j) next[static_cast<size_t>(a) * d + j] += x.row(i)[j];
        }
        double shift_sq = 0.0;
        double norm_sq = 0.0;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) continue;
            for (int j = 0; j < d; ++j) {
                const double mean = next[static_cast<size_t>(c) * d + j] / counts[static_cast<size_t>(c)];
                const double old = centroids[static_cast<size_t>(c) * d + j];
                shift_sq += (mean - old) * (mean - old);
                norm_sq += old * old;
                centroids[static_cast<size_t>(c) * d + j] = mean;
            }
        }
        const double rel_shift = std::sqrt(shift_sq) / (std::sqrt(norm_sq) + 1e-30);
        if (rel_shift < tol) break;
    }

    // Final assignment under the converged centroids.
    double wcss = 0.0;
    std::fill(report.sizes.begin(), report.sizes.end(), 0);
    for (int i = 0; i < m; ++i) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            const double dist = sq_dist(x.row(i), centroids.data() + static_cast<size_t>(c) * d, d);
            if (dist < bd) {
                bd = dist;
                best = c;
            }
        }
        report.assignments[static_cast<size_t>(i)] = best;
        report.sizes[static_cast<size_t>(best)] += 1;
        wcss += bd;
    }
    report.wcss = wcss;
    report.wcss_history.push_back(wcss);
    report.concentration_top3 = concentration(report.sizes, std::min(3, k));
    report.concentration_top5 = concentration(report.sizes, std::min(5, k));
    report.entropy_bits = entropy_bits(report.sizes);
    return report;
}

int elbow_select(const std::vector<double>& wcss_by_k) {
    const int n = static_cast<int>(wcss_by_k.size());
    if (n < 3) throw ParameterError("elbow_select: need at least three curve points");
    // Chord from (1, w_1) to (n, w_n); the cross-product numerator is
    // linear in w, so the winning k is invariant to uniform scaling.
    const double x1 = 1.0, y1 = wcss_by_k.front();
    const double x2 = static_cast<double>(n), y2 = wcss_by_k.back();
    const double dx = x2 - x1, dy = y2 - y1;
    int best_k = 1;
    double best_num = -1.0;
    for (int i = 0; i < n; ++i) {
        const double px = static_cast<double>(i + 1) - x1;
        const double py = wcss_by_k[static_cast<size_t>(i)] - y1;
        const double num = std::abs(px * dy - py * dx);
        if (num > best_num + 1e-12 * std::max(1.0, best_num)) {
            best_num = num;
            best_k = i + 1;
        }
    }
    return best_k;
}

double concentration(const std::vector<int>& sizes, int top) {
    if (sizes.empty()) throw ParameterError("concentration: empty size list");
    if (top > static_cast<int>(sizes.size())) throw ParameterError("concentration: top exceeds cluster count");
    if (top < 0) throw ParameterError("concentration: negative top");
    std::vector<int> sorted = sizes;
    std::sort(sorted.begin(), sorted.end(), std::greater<int>());
    int64_t total = 0;
    for (int s : sizes) total += s;
    if (total <= 0) throw ParameterError("concentration: total count must be positive");
    int64_t top_sum = 0;
    for (int i = 0; i < top; ++i) top_sum += sorted[static_cast<size_t>(i)];
    return 100.0 * static_cast<double>(top_sum) / static_cast<double>(total);
}

double entropy_bits(const std::vector<int>& sizes) {
    int64_t total = 0;
    for (int s : sizes) total += s;
    if (total <= 0) throw ParameterError("entropy_bits: total count must be positive");
    double h = 0.0;
    for (int s : sizes) {
        if (s <= 0) continue;  // 0 log 0 = 0
        const double p = static_cast<double>(s) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

CorpusAnalysis analyze_corpora(const std::vector<std::vector<capgen::CaptionRecord>>& corpora,
                               const lm::Lm<float>& model, int k, uint64_t seed) {
    if (corpora.empty()) throw DataError("analyze_corpora: no corpora given");
    std::vector<capgen::CaptionRecord> all;
    CorpusAnalysis out;
    for (const auto& c : corpora) {
        if (c.empty()) throw DataError("analyze_corpora: a corpus is empty");
        out.corpus_offsets.push_back(static_cast<int>(all.size()));
        all.insert(all.end(), c.begin(), c.end());
    }
    const EmbeddingMatrix x = embed_captions(all, model);

    if (k <= 0) {
        const int k_max = std::min(20, count_distinct_rows(x));
        if (k_max < 3) throw DataError("analyze_corpora: too few distinct embeddings for the elbow scan");
        std::vector<double> wcss_by_k;
        for (int kk = 1; kk <= k_max; ++kk)
            wcss_by_k.push_back(kmeans(x, kk, seed).wcss);
        k = elbow_select(wcss_by_k);
    }

    out.joint = kmeans(x, k, seed);

    for (size_t ci = 0; ci < corpora.size(); ++ci) {
        const int begin = out.corpus_offsets[ci];
        const int end = ci + 1 < corpora.size() ? out.corpus_offsets[ci + 1] : x.rows;
        ClusterReport r;
        r.k = k;
        r.sizes.assign(static_cast<size_t>(k), 0);
        for (int i = begin; i < end; ++i) {
            const int a = out.joint.assignments[static_cast<size_t>(i)];
            r.assignments.push_back(a);
            r.sizes[static_cast<size_t>(a)] += 1;
        }
        r.concentration_top3 = concentration(r.sizes, std::min(3, k));
        r.concentration_top5 = concentration(r.sizes, std::min(5, k));
        r.entropy_bits = entropy_bits(r.sizes);
        const int count = end - begin;
        std::vector<double> normalized(static_cast<size_t>(k), 0.0);
        for (int c = 0; c < k; ++c)
            normalized[static_cast<size_t>(c)] = static_cast<double>(r.sizes[static_cast<size_t>(c)]) / count;
        out.per_corpus_normalized.push_back(std::move(normalized));
        out.per_corpus.push_back(std::move(r));
    }
    return out;
}

}  // namespace synth::diversity
