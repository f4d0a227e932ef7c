#include "core/serialize.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

namespace synth::io {

std::string sha256_hex(const void* data, size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    if (EVP_Digest(data, len, digest, &digest_len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256: digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(digest_len * 2);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string CheckpointWriter::add_section(const std::string& section, const nn::ParamList<float>& params) {
    nlohmann::json tensors = nlohmann::json::array();
    const size_t section_begin = payload_.size();
    for (const auto* p : params) {
        TensorEntry e;
        e.name = p->name;
        e.shape = p->t.shape();
        e.offset = payload_.size();
        e.count = p->t.size();
        payload_.insert(payload_.end(), p->t.value().begin(), p->t.value().end());
        tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}, {"count", e.count}});
    }
    const std::string hash = sha256_hex(payload_.data() + section_begin,
                                        (payload_.size() - section_begin) * sizeof(float));
    header_["sections"][section] = {{"tensors", tensors}, {"hash", hash}};
    return hash;
}

std::string CheckpointWriter::section_hash(const std::string& section) const {
    return header_.at("sections").at(section).at("hash").get<std::string>();
}

void CheckpointWriter::write(const std::string& path) const {
    const std::string head = header_.dump();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    const uint32_t head_len = static_cast<uint32_t>(head.size());
    f.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    f.write(head.data(), static_cast<std::streamsize>(head.size()));
    f.write(reinterpret_cast<const char*>(payload_.data()),
            static_cast<std::streamsize>(payload_.size() * sizeof(float)));
    if (!f) throw IoError("write failed: " + path);
}

CheckpointReader::CheckpointReader(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    uint32_t head_len = 0;
    f.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
    if (!f) throw IoError("truncated checkpoint header: " + path);
    std::string head(head_len, '\0');
    f.read(head.data(), head_len);
    if (!f) throw IoError("truncated checkpoint header: " + path);
    header_ = nlohmann::json::parse(head, nullptr, false);
    if (header_.is_discarded()) throw IoError("corrupt checkpoint header: " + path);
    if (header_.value("format", "") != "synthpair-ckpt") throw IoError("not a synthpair checkpoint: " + path);
    f.seekg(0, std::ios::end);
    const auto end = f.tellg();
    const size_t payload_bytes = static_cast<size_t>(end) - sizeof(head_len) - head_len;
    if (payload_bytes % sizeof(float) != 0) throw IoError("corrupt checkpoint payload: " + path);
    payload_.resize(payload_bytes / sizeof(float));
    f.seekg(static_cast<std::streamoff>(sizeof(head_len) + head_len));
    f.read(reinterpret_cast<char*>(payload_.data()), static_cast<std::streamsize>(payload_bytes));
    if (!f) throw IoError("truncated checkpoint payload: " + path);
}

bool CheckpointReader::has_section(const std::string& section) const {
    return header_.contains("sections") && header_["sections"].contains(section);
}

std::string CheckpointReader::section_hash(const std::string& section) const {
    if (!has_section(section)) throw IoError("checkpoint has no section: " + section);
    return header_["sections"][section]["hash"].get<std::string>();
}

void CheckpointReader::load_section(const std::string& section, const nn::ParamList<float>& params) const {
    if (!has_section(section)) throw IoError("checkpoint has no section: " + section);
    const auto& tensors = header_["sections"][section]["tensors"];
    if (tensors.size() != params.size())
        throw IoError("section " + section + ": tensor count mismatch (" +
                      std::to_string(tensors.size()) + " stored, " + std::to_string(params.size()) +
                      " expected)");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& e = tensors[i];
        nn::Parameter<float>* p = params[i];
        if (e.at("name").get<std::string>() != p->name)
            throw IoError("section " + section + ": tensor name mismatch at index " + std::to_string(i) +
                          " (" + e.at("name").get<std::string>() + " vs " + p->name + ")");
        if (e.at("shape").get<std::vector<int>>() != p->t.shape())
            throw IoError("section " + section + ": shape mismatch for " + p->name);
        const size_t off = e.at("offset").get<size_t>();
        const size_t count = e.at("count").get<size_t>();
        if (off + count > payload_.size()) throw IoError("section " + section + ": payload out of range");
        auto dst = p->t.value();
        std::memcpy(dst.data(), payload_.data() + off, count * sizeof(float));
    }
}

std::string params_hash(const nn::ParamList<float>& params) {
    std::vector<float> flat;
    for (const auto* p : params) flat.insert(flat.end(), p->t.value().begin(), p->t.value().end());
    return sha256_hex(flat.data(), flat.size() * sizeof(float));
}

void write_token_shard(const std::string& path, const TokenShard& shard) {
    if (shard.n <= 0 || shard.k <= 0) throw ParameterError("token shard: N and K must be positive");
    if (shard.k + 1 > 65535) throw ConfigError("token shard: K+1 exceeds uint16 packing");
    if (shard.ids.size() % static_cast<size_t>(shard.n) != 0)
        throw ContractError("token shard: id count not a multiple of N");
    nlohmann::json head = {{"format", "synthpair-tokens"},
                           {"N", shard.n},
                           {"K", shard.k},
                           {"count", shard.count()}};
    const std::string hs = head.dump();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    const uint32_t head_len = static_cast<uint32_t>(hs.size());
    f.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    f.write(reinterpret_cast<const char*>(shard.ids.data()),
            static_cast<std::streamsize>(shard.ids.size() * sizeof(uint16_t)));
    if (!f) throw IoError("write failed: " + path);
}

TokenShard read_token_shard(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open token shard: " + path);
    uint32_t head_len = 0;
    f.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
    if (!f) throw IoError("truncated shard header: " + path);
    std::string head(head_len, '\0');
    f.read(head.data(), head_len);
    if (!f) throw IoError("truncated shard header: " + path);
    auto j = nlohmann::json::parse(head, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "synthpair-tokens")
        throw IoError("not a synthpair token shard: " + path);
    TokenShard shard;
    shard.n = j.at("N").get<int>();
    shard.k = j.at("K").get<int>();
    const int count = j.at("count").get<int>();
    shard.ids.resize(static_cast<size_t>(count) * shard.n);
    f.read(reinterpret_cast<char*>(shard.ids.data()),
           static_cast<std::streamsize>(shard.ids.size() * sizeof(uint16_t)));
    if (!f) throw IoError("truncated shard payload: " + path);
    return shard;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace synth::io
