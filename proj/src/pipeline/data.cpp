#include "pipeline/data.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/serialize.hpp"
#include "pipeline/corpus.hpp"

namespace synth::pipeline {

namespace fs = std::filesystem;

namespace {

// "path#index" into a token shard.
std::pair<std::string, int> parse_shard_ref(const std::string& ref) {
    const auto hash = ref.rfind('#');
    if (hash == std::string::npos) throw DataError("token_shard_ref must look like path#index: " + ref);
    return {ref.substr(0, hash), std::stoi(ref.substr(hash + 1))};
}

}  // namespace

std::vector<vlm::PairRecord> ingest(const std::string& jsonl_path, const vq::Backbone& backbone,
                                    const capgen::ByteTokenizer& tok, IngestStats* stats) {
    std::ifstream f(jsonl_path);
    if (!f) throw IoError("cannot open dataset: " + jsonl_path);
    const fs::path base = fs::path(jsonl_path).parent_path();

    IngestStats local;
    std::vector<vlm::PairRecord> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ++local.total_lines;
        try {
            auto j = nlohmann::json::parse(line);
            if (!j.contains("caption")) throw DataError("missing caption");
            const bool has_image = j.contains("image_path");
            const bool has_tokens = j.contains("token_shard_ref");
            if (has_image == has_tokens)
                throw DataError("record must carry exactly one of image_path / token_shard_ref");
            vlm::PairRecord rec;
            rec.caption_text = j.at("caption").get<std::string>();
            rec.caption_ids = tok.tokenize(rec.caption_text);
            const std::string origin = j.value("origin", "real");
            rec.origin = origin == "synthetic" ? vlm::Origin::kSynthetic : vlm::Origin::kReal;
            if (has_image) {
                const std::string rel = j.at("image_path").get<std::string>();
                const vq::ToyImage img = read_ppm((base / rel).string());
                rec.image = img;
                rec.grid = backbone.encode_image(img);
                rec.modality = vlm::Modality::kPixel;
            } else {
                const auto [shard_path, index] = parse_shard_ref(j.at("token_shard_ref").get<std::string>());
                const io::TokenShard shard = io::read_token_shard((base / shard_path).string());
                if (index < 0 || index >= shard.count())
                    throw DataError("token_shard_ref index out of range");
                rec.grid.side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(shard.n))));
                rec.grid.ids.assign(shard.ids.begin() + static_cast<size_t>(index) * shard.n,
                                    shard.ids.begin() + static_cast<size_t>(index + 1) * shard.n);
                rec.modality = vlm::Modality::kEmbedding;
            }
            out.push_back(std::move(rec));
            ++local.loaded;
        } catch (const std::exception&) {
            ++local.skipped;
        }
    }
    if (local.total_lines == 0) throw DataError("dataset is empty: " + jsonl_path);
    if (local.skipped * 10 > local.total_lines)
        throw DataError("dataset " + jsonl_path + ": " + std::to_string(local.skipped) + "/" +
                        std::to_string(local.total_lines) + " records skipped (>10%)");
    if (stats) *stats = local;
    return out;
}

std::vector<std::string> write_shards(const std::vector<vlm::PairRecord>& records, const std::string& dir,
                                      int shard_size, int codebook_size) {
    if (shard_size <= 0) throw ParameterError("write_shards: shard size must be positive");
    fs::create_directories(dir);
    std::vector<std::string> shard_files;
    int shard_index = 0;
    size_t at = 0;
    while (at < records.size()) {
        const size_t end = std::min(records.size(), at + static_cast<size_t>(shard_size));
        char name[32];
        std::snprintf(name, sizeof(name), "shard-%03d", shard_index);
        const std::string bin_name = std::string(name) + ".bin";
        const std::string bin_path = (fs::path(dir) / bin_name).string();
        const std::string jsonl_path = (fs::path(dir) / (std::string(name) + ".jsonl")).string();

        io::TokenShard shard;
        shard.n = records[at].grid.n();
        shard.k = codebook_size;
        std::ofstream jf(jsonl_path, std::ios::trunc);
        if (!jf) throw IoError("cannot open for write: " + jsonl_path);
        for (size_t i = at; i < end; ++i) {
            const auto& rec = records[i];
            if (rec.grid.n() != shard.n) throw ContractError("write_shards: mixed grid sizes");
            for (int id : rec.grid.ids) {
                if (id < 0 || id >= codebook_size)
                    throw ContractError("write_shards: token id outside codebook");
                shard.ids.push_back(static_cast<uint16_t>(id));
            }
            nlohmann::json j = {{"caption", rec.caption_text},
                                {"token_shard_ref", bin_name + "#" + std::to_string(i - at)},
                                {"origin", to_string(rec.origin)}};
            jf << j.dump() << '\n';
        }
        io::write_token_shard(bin_path, shard);
        shard_files.push_back(bin_path);
        at = end;
        ++shard_index;
    }
    return shard_files;
}

PairStream::PairStream(const std::vector<vlm::PairRecord>* records, uint64_t seed)
    : records_(records), rng_(Rng::derive(seed, 0x57)) {
    if (records_ == nullptr || records_->empty()) return;
    order_.resize(records_->size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    rng_.shuffle(order_);
}

const vlm::PairRecord* PairStream::next() {
    if (!valid()) throw DataError("pair stream: no records");
    if (cursor_ >= order_.size()) {
        rng_.shuffle(order_);
        cursor_ = 0;
    }
    return &(*records_)[static_cast<size_t>(order_[cursor_++])];
}

std::vector<const vlm::PairRecord*> mix_batch(PairStream& real, PairStream& synth, double ratio,
                                              int batch_size, Rng& rng, int* real_count) {
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("mix: ratio must lie in [0,1]");
    if (ratio > 0.0 && !real.valid()) throw ConfigError("mix: real stream required at this ratio");
    if (ratio < 1.0 && !synth.valid()) throw ConfigError("mix: synthetic stream required at this ratio");
    std::vector<const vlm::PairRecord*> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    int reals = 0;
    for (int i = 0; i < batch_size; ++i) {
        const bool from_real = ratio >= 1.0 || (ratio > 0.0 && rng.uniform() < ratio);
        if (from_real) {
            batch.push_back(real.next());
            ++reals;
        } else {
            batch.push_back(synth.next());
        }
    }
    if (real_count) *real_count = reals;
    return batch;
}

std::vector<float> caption_embedding(const lm::Lm<float>& lm_model, const std::vector<int>& token_ids) {
    const auto emb = lm_model.pooled_embedding(token_ids);
    return {emb.value().begin(), emb.value().end()};
}

std::vector<vlm::PairRecord> synth_pairs(const capgen::ClassVocabulary& vocab, const lm::Lm<float>& lm_model,
                                         const t2i::T2IModel<float>& t2i_model,
                                         const t2i::DecodeConfig& decode_cfg,
                                         const capgen::ByteTokenizer& tok, int n, uint64_t seed,
                                         int decode_chunk) {
    if (n < 0) throw ParameterError("synth_pairs: negative count");
    std::vector<vlm::PairRecord> out;
    out.reserve(static_cast<size_t>(n));
    Rng caption_rng = Rng::derive(seed, 0x63);

    std::vector<capgen::CaptionRecord> captions;
    captions.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        captions.push_back(capgen::generate_caption_template(vocab, vocab.sample(caption_rng), caption_rng, tok));

    for (int begin = 0; begin < n; begin += decode_chunk) {
        const int end = std::min(n, begin + decode_chunk);
        std::vector<std::vector<float>> conds;
        std::vector<Rng> rngs;
        for (int i = begin; i < end; ++i) {
            conds.push_back(caption_embedding(lm_model, captions[static_cast<size_t>(i)].token_ids));
            // Per-record stream: regeneration is independent of chunking.
            rngs.push_back(Rng::derive(seed, 0x64000000ULL + static_cast<uint64_t>(i)));
        }
        auto grids = t2i::decode_batch(t2i_model, conds, decode_cfg, rngs);
        for (int i = begin; i < end; ++i) {
            vlm::PairRecord rec;
            rec.caption_text = captions[static_cast<size_t>(i)].text;
            rec.caption_ids = captions[static_cast<size_t>(i)].token_ids;
            rec.grid = std::move(grids[static_cast<size_t>(i - begin)]);
            rec.modality = vlm::Modality::kEmbedding;
            rec.origin = vlm::Origin::kSynthetic;
            out.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace synth::pipeline
