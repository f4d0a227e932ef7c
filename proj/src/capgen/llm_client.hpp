#pragma once

#include <semaphore>
#include <string>

#include "capgen/capgen.hpp"

namespace synth::capgen {

struct LlmClientConfig {
    std::string endpoint;          // e.g. http://host:port/v1/chat/completions
    std::string api_key;           // bearer token, may be empty
    std::string model = "default";
    int timeout_seconds = 30;
    int max_retries = 3;
    int max_in_flight = 4;
    size_t max_response_bytes = 1024;  // responses capped at 1 KiB

    // Reads LLM_ENDPOINT / LLM_API_KEY.
    static LlmClientConfig from_env();
};

// Generic JSON chat-completion client. Validates that replies start with
// the required caption prefix; transport and validation failures retain
// the raw payload for diagnosis.
class LlmClient {
  public:
    explicit LlmClient(LlmClientConfig cfg);

    // POSTs the class prompt and returns the validated caption.
    CaptionRecord generate_caption(const std::string& class_name, const ByteTokenizer& tok);

  private:
    std::string request_once(const std::string& prompt);

    LlmClientConfig cfg_;
    std::string host_;
    std::string path_;
    std::counting_semaphore<64> in_flight_;
};

inline constexpr const char* kCaptionPrefix = "This is an image of";

}  // namespace synth::capgen
