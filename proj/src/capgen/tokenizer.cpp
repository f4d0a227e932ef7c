#include "capgen/tokenizer.hpp"

#include "core/error.hpp"

namespace synth::capgen {

std::vector<int> ByteTokenizer::tokenize(const std::string& text) const {
    const size_t body_budget = static_cast<size_t>(max_len_) - 2;  // BOS + EOS
    std::vector<int> ids;
    ids.reserve(std::min(text.size(), body_budget) + 2);
    ids.push_back(kBos);
    for (size_t i = 0; i < text.size() && i < body_budget; ++i)
        ids.push_back(static_cast<int>(static_cast<unsigned char>(text[i])));
    ids.push_back(kEos);
    return ids;
}

std::string ByteTokenizer::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kEos) break;
        if (id == kBos || id == kPad) continue;
        if (id < 0 || id > 255) throw ContractError("detokenize: id out of byte range");
        out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    }
    return out;
}

std::vector<int> ByteTokenizer::pad_to(std::vector<int> ids, int len) {
    while (static_cast<int>(ids.size()) < len) ids.push_back(kPad);
    return ids;
}

}  // namespace synth::capgen
