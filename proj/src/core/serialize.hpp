#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/tensor.hpp"

namespace synth::io {

// Checkpoints and token shards share one container: a little-endian u32
// header length, a JSON header, then a flat little-endian payload.

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);

struct TensorEntry {
    std::string name;
    std::vector<int> shape;
    size_t offset = 0;  // float index into the payload
    size_t count = 0;
};

class CheckpointWriter {
  public:
    explicit CheckpointWriter(std::string kind) { header_["format"] = "synthpair-ckpt"; header_["version"] = 1; header_["kind"] = std::move(kind); }

    void set_config(const nlohmann::json& cfg) { header_["config"] = cfg; }

    // Adds all tensors of a named section; returns the section's content
    // hash (sha256 of its raw float bytes).
    std::string add_section(const std::string& section, const nn::ParamList<float>& params);
    void add_meta(const std::string& key, const nlohmann::json& value) { header_[key] = value; }

    void write(const std::string& path) const;
    std::string section_hash(const std::string& section) const;

  private:
    nlohmann::json header_;
    std::vector<float> payload_;
};

class CheckpointReader {
  public:
    explicit CheckpointReader(const std::string& path);

    const nlohmann::json& header() const { return header_; }
    std::string kind() const { return header_.at("kind").get<std::string>(); }
    nlohmann::json config() const { return header_.value("config", nlohmann::json::object()); }
    bool has_section(const std::string& section) const;
    std::string section_hash(const std::string& section) const;

    // Copies stored values into the given parameter list; names and
    // shapes must match exactly.
    void load_section(const std::string& section, const nn::ParamList<float>& params) const;

  private:
    nlohmann::json header_;
    std::vector<float> payload_;
};

// Recomputed (not stored) hash over a live parameter list; used to prove
// frozen sections stayed bit-identical through training.
std::string params_hash(const nn::ParamList<float>& params);

// Token shards: JSON header {N, K, count} + packed uint16 ids.
struct TokenShard {
    int n = 0;  // tokens per grid
    int k = 0;  // codebook size; ids must be < k
    std::vector<uint16_t> ids;  // count * n entries

    int count() const { return n == 0 ? 0 : static_cast<int>(ids.size()) / n; }
};

void write_token_shard(const std::string& path, const TokenShard& shard);
TokenShard read_token_shard(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace synth::io
