#include "capgen/llm_client.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "core/error.hpp"

namespace synth::capgen {

LlmClientConfig LlmClientConfig::from_env() {
    LlmClientConfig cfg;
    if (const char* e = std::getenv("LLM_ENDPOINT")) cfg.endpoint = e;
    if (const char* k = std::getenv("LLM_API_KEY")) cfg.api_key = k;
    return cfg;
}

LlmClient::LlmClient(LlmClientConfig cfg)
    : cfg_(std::move(cfg)), in_flight_(std::max(1, std::min(64, cfg_.max_in_flight))) {
    if (cfg_.endpoint.empty()) throw ConfigError("llm client: endpoint not configured (set LLM_ENDPOINT)");
    // Split scheme://host:port/path.
    auto scheme_end = cfg_.endpoint.find("://");
    const size_t host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const size_t path_begin = cfg_.endpoint.find('/', host_begin);
    if (path_begin == std::string::npos) {
        host_ = cfg_.endpoint;
        path_ = "/";
    } else {
        host_ = cfg_.endpoint.substr(0, path_begin);
        path_ = cfg_.endpoint.substr(path_begin);
    }
}

std::string LlmClient::request_once(const std::string& prompt) {
    httplib::Client client(host_);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    nlohmann::json body = {{"model", cfg_.model},
                           {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw EndpointError("llm client: request failed (" + httplib::to_string(res.error()) + ")", "");
    std::string payload = res->body.substr(0, cfg_.max_response_bytes);
    if (res->status != 200)
        throw EndpointError("llm client: http status " + std::to_string(res->status), payload);
    auto j = nlohmann::json::parse(payload, nullptr, false);
    if (j.is_discarded()) throw EndpointError("llm client: response is not valid JSON", payload);
    try {
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw EndpointError("llm client: response missing choices[0].message.content", payload);
    }
}

CaptionRecord LlmClient::generate_caption(const std::string& class_name, const ByteTokenizer& tok) {
    const std::string prompt = build_prompt(class_name);
    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
    } release{in_flight_};

    std::string last_error;
    std::string last_payload;
    for (int attempt = 0; attempt < cfg_.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << attempt));
        try {
            std::string text = request_once(prompt);
            if (text.rfind(kCaptionPrefix, 0) != 0)
                throw EndpointError(std::string("llm client: response does not start with \"") +
                                        kCaptionPrefix + "\"",
                                    text.substr(0, cfg_.max_response_bytes));
            return make_caption_record(std::move(text), class_name, CaptionSource::kLlm, tok);
        } catch (const EndpointError& e) {
            last_error = e.what();
            last_payload = e.raw_payload;
        }
    }
    throw EndpointError("llm client: giving up after " + std::to_string(cfg_.max_retries) +
                            " attempts; last error: " + last_error,
                        last_payload);
}

}  // namespace synth::capgen
