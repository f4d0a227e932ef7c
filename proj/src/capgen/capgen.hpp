#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capgen/tokenizer.hpp"
#include "core/rng.hpp"

namespace synth::capgen {

enum class CaptionSource { kHuman, kLlm, kTemplate };

std::string to_string(CaptionSource s);
CaptionSource caption_source_from_string(const std::string& s);

struct CaptionRecord {
    std::string text;
    std::string class_label;
    CaptionSource source = CaptionSource::kTemplate;
    std::vector<int> token_ids;
    uint64_t seed = 0;
};

CaptionRecord make_caption_record(std::string text, std::string class_label, CaptionSource source,
                                  const ByteTokenizer& tok, uint64_t seed = 0);

class ClassVocabulary {
  public:
    explicit ClassVocabulary(std::vector<std::string> names, std::vector<double> weights = {});
    static ClassVocabulary load(const std::string& path);

    const std::vector<std::string>& names() const { return names_; }
    bool contains(const std::string& name) const;
    // Weighted draw; uniform when no weights were given.
    const std::string& sample(Rng& rng) const;

  private:
    std::vector<std::string> names_;
    std::vector<double> cumulative_;  // empty => uniform
};

// The caption-request prompt with [object] substituted.
std::string build_prompt(const std::string& class_name);

// Shared scene-description grammar. The shapes corpus renders exactly
// these colors and positions, so template captions stay grounded.
struct SceneGrammar {
    static const std::vector<std::string>& colors();     // 8 entries
    static const std::vector<std::string>& positions();  // 9 entries, 3x3 grid order

    // "This is an image of a {color} {class} in the {position}." plus an
    // optional decorative suffix. Informative clauses always fit in the
    // 64-token caption budget; only the suffix may truncate.
    static std::string caption_text(const std::string& class_name, int color_id, int pos_id, Rng& rng);
};

// Offline caption generator: pure function of (class, rng stream).
CaptionRecord generate_caption_template(const ClassVocabulary& vocab, const std::string& class_name,
                                        Rng& rng, const ByteTokenizer& tok);

// JSONL {"text":..., "class":..., "source":..., "seed":...}
void write_caption_jsonl(const std::string& path, const std::vector<CaptionRecord>& records);
std::vector<CaptionRecord> read_caption_jsonl(const std::string& path, const ByteTokenizer& tok);

}  // namespace synth::capgen
