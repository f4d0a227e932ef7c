#include "capgen/capgen.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "core/error.hpp"

namespace synth::capgen {

std::string to_string(CaptionSource s) {
    switch (s) {
        case CaptionSource::kHuman: return "human";
        case CaptionSource::kLlm: return "llm";
        case CaptionSource::kTemplate: return "template";
    }
    return "template";
}

CaptionSource caption_source_from_string(const std::string& s) {
    if (s == "human") return CaptionSource::kHuman;
    if (s == "llm") return CaptionSource::kLlm;
    if (s == "template") return CaptionSource::kTemplate;
    throw ParameterError("unknown caption source: " + s);
}

CaptionRecord make_caption_record(std::string text, std::string class_label, CaptionSource source,
                                  const ByteTokenizer& tok, uint64_t seed) {
    CaptionRecord r;
    r.token_ids = tok.tokenize(text);
    r.text = std::move(text);
    r.class_label = std::move(class_label);
    r.source = source;
    r.seed = seed;
    return r;
}

ClassVocabulary::ClassVocabulary(std::vector<std::string> names, std::vector<double> weights)
    : names_(std::move(names)) {
    if (names_.empty()) throw ParameterError("class vocabulary must be non-empty");
    if (!weights.empty()) {
        if (weights.size() != names_.size())
            throw ParameterError("class vocabulary: weights length != names length");
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw ParameterError("class vocabulary: negative weight");
            total += w;
        }
        if (total <= 0.0) throw ParameterError("class vocabulary: weights sum to zero");
        cumulative_.reserve(weights.size());
        double acc = 0.0;
        for (double w : weights) {
            acc += w / total;
            cumulative_.push_back(acc);
        }
        cumulative_.back() = 1.0;
    }
}

ClassVocabulary ClassVocabulary::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open class file: " + path);
    std::vector<std::string> names;
    std::string line;
    while (std::getline(f, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) names.push_back(line);
    }
    return ClassVocabulary(std::move(names));
}

bool ClassVocabulary::contains(const std::string& name) const {
    for (const auto& n : names_)
        if (n == name) return true;
    return false;
}

const std::string& ClassVocabulary::sample(Rng& rng) const {
    if (cumulative_.empty()) return names_[static_cast<size_t>(rng.randint(0, static_cast<int>(names_.size())))];
    const double u = rng.uniform();
    for (size_t i = 0; i < cumulative_.size(); ++i)
        if (u < cumulative_[i]) return names_[i];
    return names_.back();
}

std::string build_prompt(const std::string& class_name) {
    if (class_name.empty()) throw ParameterError("build_prompt: class name must be non-empty");
    return "Make up a human-annotated description of an image that contains the following object: " +
           class_name +
           ". The caption should be around 30-40 words long. Describe the different components of the "
           "scene in an objective and unbiased way. Do not add subjective judgments about the image, it "
           "should be as factual as possible. Do not use fluffy, poetic language. Respond only with the "
           "caption itself, beginning with \"This is an image of\".";
}

const std::vector<std::string>& SceneGrammar::colors() {
    static const std::vector<std::string> kColors = {"red",     "green", "blue",   "yellow",
                                                     "magenta", "cyan",  "orange", "white"};
    return kColors;
}

const std::vector<std::string>& SceneGrammar::positions() {
    static const std::vector<std::string> kPositions = {
        "top left",    "top",    "top right",   "left",  "center",
        "right",       "bottom left", "bottom", "bottom right"};
    return kPositions;
}

namespace {

bool starts_with_vowel_sound(const std::string& word) {
    if (word.empty()) return false;
    switch (word.front()) {
        case 'a': case 'e': case 'i': case 'o': case 'u':
        case 'A': case 'E': case 'I': case 'O': case 'U':
            return true;
        default:
            break;
    }
    return word == "hourglass";  // silent h
}

}  // namespace

std::string SceneGrammar::caption_text(const std::string& class_name, int color_id, int pos_id, Rng& rng) {
    const auto& cols = colors();
    const auto& poss = positions();
    if (color_id < 0 || color_id >= static_cast<int>(cols.size()))
        throw ParameterError("caption_text: color id out of range");
    if (pos_id < 0 || pos_id >= static_cast<int>(poss.size()))
        throw ParameterError("caption_text: position id out of range");
    const std::string& color = cols[static_cast<size_t>(color_id)];
    const std::string& pos = poss[static_cast<size_t>(pos_id)];
    static const std::vector<std::string> kPlacePhrases = {"in the", "at the"};
    static const std::vector<std::string> kSuffixes = {
        "", ", on a dark background", ", shown alone", ", with plain surroundings", ", as the only object"};

    const std::string place = kPlacePhrases[static_cast<size_t>(rng.randint(0, 2))];
    const std::string suffix = kSuffixes[static_cast<size_t>(rng.randint(0, static_cast<int>(kSuffixes.size())))];
    const char* article = starts_with_vowel_sound(color) ? "an" : "a";
    std::string text = "This is an image of ";
    text += article;
    text += ' ';
    text += color;
    text += ' ';
    text += class_name;
    text += ' ';
    text += place;
    text += ' ';
    text += pos;
    text += suffix;
    text += '.';
    return text;
}

CaptionRecord generate_caption_template(const ClassVocabulary& vocab, const std::string& class_name,
                                        Rng& rng, const ByteTokenizer& tok) {
    if (!vocab.contains(class_name)) throw DataError("template caption: class not in vocabulary: " + class_name);
    const int color_id = rng.randint(0, static_cast<int>(SceneGrammar::colors().size()));
    const int pos_id = rng.randint(0, static_cast<int>(SceneGrammar::positions().size()));
    std::string text = SceneGrammar::caption_text(class_name, color_id, pos_id, rng);
    return make_caption_record(std::move(text), class_name, CaptionSource::kTemplate, tok);
}

void write_caption_jsonl(const std::string& path, const std::vector<CaptionRecord>& records) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    for (const auto& r : records) {
        nlohmann::json j = {{"text", r.text},
                            {"class", r.class_label},
                            {"source", to_string(r.source)},
                            {"seed", r.seed}};
        f << j.dump() << '\n';
    }
    if (!f) throw IoError("write failed: " + path);
}

std::vector<CaptionRecord> read_caption_jsonl(const std::string& path, const ByteTokenizer& tok) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open caption file: " + path);
    std::vector<CaptionRecord> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("text"))
            throw DataError("malformed caption jsonl at line " + std::to_string(line_no) + " in " + path);
        out.push_back(make_caption_record(j.at("text").get<std::string>(), j.value("class", ""),
                                          caption_source_from_string(j.value("source", "template")), tok,
                                          j.value("seed", uint64_t{0})));
    }
    return out;
}

}  // namespace synth::capgen
