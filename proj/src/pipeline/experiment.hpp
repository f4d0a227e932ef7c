#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/metrics.hpp"
#include "diversity/diversity.hpp"
#include "pipeline/corpus.hpp"
#include "pipeline/data.hpp"

namespace synth::pipeline {

struct StageSteps {
    int vq_steps = 400;
    int vq_batch = 16;
    float vq_lr = 1e-3f;

    int lm_steps = 5000;
    int lm_batch = 8;
    float lm_lr = 1e-3f;
    int lm_warmup = 200;

    int t2i_steps = 2500;
    int t2i_batch = 16;
    float t2i_lr = 3e-4f;
    int t2i_warmup = 100;

    int vlm_steps = 1200;
    int vlm_batch = 16;
    float vlm_lr = 1e-3f;
    int vlm_warmup = 100;
};

struct ExperimentConfig {
    uint64_t seed = 42;
    std::string workdir = "runs/experiment";
    CorpusConfig corpus;
    vq::VqConfig vq;
    lm::LmConfig lm;
    t2i::T2IConfig t2i;
    vlm::ResamplerConfig resampler;
    t2i::DecodeConfig decode;
    StageSteps steps;
    int synth_count = 400;
    // real : synthetic slot probability, normalized from 10.1M : 1M.
    double mix_ratio = 10.1 / 11.1;
    int eval_interval = 200;
    int eval_batch = 16;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    std::string config_hash() const;
};

struct EvalPoint {
    int step = 0;
    double loss = 0.0;
    double token_accuracy = 0.0;
};

struct ArmResult {
    std::string name;
    TrainLog log;
    std::vector<EvalPoint> evals;
    double final_heldout_loss = 0.0;
    double final_token_accuracy = 0.0;
    std::string checkpoint_hash;
    std::string metrics_csv;
};

struct ExperimentResult {
    ArmResult baseline;
    ArmResult augmented;
    std::string report_path;
    std::string config_hash;
};

// Teacher-forced held-out evaluation (embedding path; dual-path losses
// are identical by construction).
EvalPoint evaluate_vlm(const vlm::Vlm<float>& model, const vq::Backbone& backbone,
                       const std::vector<vlm::PairRecord>& records, int batch_size, int step);

// One VLM training arm over mixed streams. Record modality is honored:
// pixel records run through the encoder, embedding records bypass it.
ArmResult train_vlm_arm(const std::string& name, vlm::Vlm<float>& model, const vq::Backbone& backbone,
                        const std::vector<vlm::PairRecord>& real,
                        const std::vector<vlm::PairRecord>* synth, double ratio,
                        const vlm::VlmTrainConfig& tcfg, const std::vector<vlm::PairRecord>& heldout,
                        int eval_interval, int eval_batch);

// Full pipeline: corpus -> vq -> lm -> t2i -> GenPair synthesis ->
// baseline and augmented VLM arms with identical seeds everywhere else.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct BenchmarkResult {
    vlm::Modality modality = vlm::Modality::kEmbedding;
    int timed_steps = 0;
    double steps_per_sec_median = 0.0;
    std::vector<double> run_medians;  // one per repeat
};

struct BenchmarkConfig {
    uint64_t seed = 42;
    int pairs = 256;
    int batch_size = 16;
    int warmup_steps = 20;
    int timed_steps = 200;
    int runs = 3;
    vq::VqConfig vq;
    lm::LmConfig lm;
    vlm::ResamplerConfig resampler;

    nlohmann::json to_json() const;
    static BenchmarkConfig from_json(const nlohmann::json& j);
};

// Median steps/sec over >= 200 timed steps; batch content is identical
// across modalities (only the input path differs).
BenchmarkResult benchmark_throughput(const BenchmarkConfig& cfg, vlm::Modality modality);

void write_metrics_csv(const std::string& path, const TrainLog& log);
void write_eval_csv(const std::string& path, const std::vector<EvalPoint>& evals);

}  // namespace synth::pipeline
