#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capgen/capgen.hpp"
#include "lm/lm.hpp"

namespace synth::diversity {

// One row per caption: mean-pooled frozen-LM final hidden states.
struct EmbeddingMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    const float* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
};

EmbeddingMatrix embed_captions(const std::vector<capgen::CaptionRecord>& captions, const lm::Lm<float>& model);

struct ClusterReport {
    int k = 0;
    std::vector<int> assignments;
    std::vector<int> sizes;
    double wcss = 0.0;
    std::vector<double> wcss_history;  // objective after each Lloyd assignment
    int iterations = 0;
    double concentration_top3 = 0.0;  // percent
    double concentration_top5 = 0.0;  // percent
    double entropy_bits = 0.0;
};

// Lloyd iterations from k-means++ seeding; converges when the relative
// centroid shift drops below tol or at max_iter.
ClusterReport kmeans(const EmbeddingMatrix& x, int k, uint64_t seed, int max_iter = 300, double tol = 1e-6);

// Elbow pick over wcss values for k = 1..k_max: the k whose point lies
// farthest from the chord between the first and last curve points; ties
// go to the smallest k.
int elbow_select(const std::vector<double>& wcss_by_k);

// Percentage of members in the `top` most populated clusters.
double concentration(const std::vector<int>& sizes, int top);

// -sum p_i log2 p_i with 0 log 0 = 0.
double entropy_bits(const std::vector<int>& sizes);

struct CorpusAnalysis {
    ClusterReport joint;                                  // co-clustering over all corpora
    std::vector<std::vector<double>> per_corpus_normalized;  // [corpus][cluster]
    std::vector<ClusterReport> per_corpus;                // metrics from the joint assignment
    std::vector<int> corpus_offsets;
};

// Concatenates the corpora, clusters once, then splits cluster sizes per
// corpus (normalized within each corpus).
CorpusAnalysis analyze_corpora(const std::vector<std::vector<capgen::CaptionRecord>>& corpora,
                               const lm::Lm<float>& model, int k /*0 = elbow auto*/, uint64_t seed);

}  // namespace synth::diversity
