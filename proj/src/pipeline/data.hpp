#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capgen/tokenizer.hpp"
#include "lm/lm.hpp"
#include "t2i/t2i.hpp"
#include "vlm/vlm.hpp"
#include "vq/vq.hpp"

namespace synth::pipeline {

struct IngestStats {
    int total_lines = 0;
    int loaded = 0;
    int skipped = 0;
};

// JSONL ingestion: {caption, image_path | token_shard_ref, origin} per
// line. Malformed records are skipped and counted; more than 10% skipped
// (or an empty file) is a hard failure. Pixel records are encoded once
// so every PairRecord carries both the image and its grid.
std::vector<vlm::PairRecord> ingest(const std::string& jsonl_path, const vq::Backbone& backbone,
                                    const capgen::ByteTokenizer& tok, IngestStats* stats = nullptr);

// Shard a record set: shard-XXX.bin token shards plus shard-XXX.jsonl
// caption lines whose token_shard_ref points back into the shard.
std::vector<std::string> write_shards(const std::vector<vlm::PairRecord>& records, const std::string& dir,
                                      int shard_size = 10000, int codebook_size = 512);

// Cyclic shuffled iteration over a fixed record set; reshuffles each
// epoch from its own stream.
class PairStream {
  public:
    PairStream() = default;
    PairStream(const std::vector<vlm::PairRecord>* records, uint64_t seed);

    bool valid() const { return records_ != nullptr && !records_->empty(); }
    const vlm::PairRecord* next();

  private:
    const std::vector<vlm::PairRecord>* records_ = nullptr;
    std::vector<int> order_;
    size_t cursor_ = 0;
    Rng rng_{0};
};

// Bernoulli slot mixing: each batch slot is real with p = ratio.
std::vector<const vlm::PairRecord*> mix_batch(PairStream& real, PairStream& synth, double ratio,
                                              int batch_size, Rng& rng, int* real_count = nullptr);

// On-the-fly synthetic pairs: template captions -> pooled LM embeddings
// -> iterative decode. origin=synthetic, modality=embedding; pixels are
// never materialized.
std::vector<vlm::PairRecord> synth_pairs(const capgen::ClassVocabulary& vocab, const lm::Lm<float>& lm_model,
                                         const t2i::T2IModel<float>& t2i_model,
                                         const t2i::DecodeConfig& decode_cfg,
                                         const capgen::ByteTokenizer& tok, int n, uint64_t seed,
                                         int decode_chunk = 16);

// Pooled caption embedding helper shared by t2i training and synthesis.
std::vector<float> caption_embedding(const lm::Lm<float>& lm_model, const std::vector<int>& token_ids);

}  // namespace synth::pipeline
