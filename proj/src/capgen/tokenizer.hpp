#pragma once

#include <string>
#include <vector>

namespace synth::capgen {

// Byte-level caption tokenizer: 256 byte ids plus BOS/EOS/PAD. Lossless
// round trip for untruncated inputs; truncation keeps EOS last.
class ByteTokenizer {
  public:
    static constexpr int kBos = 256;
    static constexpr int kEos = 257;
    static constexpr int kPad = 258;
    static constexpr int kVocabSize = 259;

    explicit ByteTokenizer(int max_len = 64) : max_len_(max_len) {}

    int max_len() const { return max_len_; }

    // [BOS, bytes..., EOS]; byte tail is dropped when the sequence would
    // exceed max_len, EOS always present and last.
    std::vector<int> tokenize(const std::string& text) const;

    // Inverse; BOS/EOS/PAD are skipped, decoding stops at EOS.
    std::string detokenize(const std::vector<int>& ids) const;

    // Right-pads with PAD up to len.
    static std::vector<int> pad_to(std::vector<int> ids, int len);

  private:
    int max_len_;
};

}  // namespace synth::capgen
