#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace kgqa {

inline constexpr const char* kEndpointUrlEnv = "LLM_ENDPOINT_URL";
inline constexpr const char* kEndpointTokenEnv = "LLM_API_TOKEN";

struct EndpointConfig {
    std::string url;    // full URL the chat request is POSTed to
    std::string token;  // sent as a Bearer token when non-empty
    std::chrono::seconds timeout{120};
    std::size_t max_attempts = 3;
    std::chrono::milliseconds backoff{500};

    /// Reads the URL and token variables; nullopt when the URL is unset.
    static std::optional<EndpointConfig> from_env();
};

/// Chat-style text generation. Implementations must be thread-safe.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    /// messages: [{role, content}, ...]. Returns the generated text; a tool
    /// call in OpenAI shape is returned as {"tool": name, ...arguments}.
    virtual std::string chat(const nlohmann::json& messages) = 0;
    std::size_t calls() const { return calls_.load(); }

protected:
    std::atomic<std::size_t> calls_{0};
};

class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(EndpointConfig cfg);
    std::string chat(const nlohmann::json& messages) override;

private:
    std::string post_once(const std::string& body);

    EndpointConfig cfg_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;
};

/// Pulls the generated text out of a response body. Accepts
/// choices[0].message.content, choices[0].message.tool_calls, top-level
/// "content" or "text".
std::string extract_generated_text(const nlohmann::json& response);

}  // namespace kgqa
