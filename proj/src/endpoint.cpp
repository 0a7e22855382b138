#include "kgqa/endpoint.hpp"

#include <cstdlib>
#include <regex>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "kgqa/common.hpp"

namespace kgqa {

std::optional<EndpointConfig> EndpointConfig::from_env() {
    const char* url = std::getenv(kEndpointUrlEnv);
    if (!url || !*url) return std::nullopt;
    EndpointConfig cfg;
    cfg.url = url;
    if (const char* token = std::getenv(kEndpointTokenEnv)) cfg.token = token;
    return cfg;
}

HttpChatClient::HttpChatClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
    static const std::regex url_re(R"(^(https?://[^/?#]+)([/?].*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.url, m, url_re)) throw usage_error("invalid endpoint URL: " + cfg_.url);
    origin_ = m[1].str();
    path_ = m[2].matched ? m[2].str() : "/";
    if (cfg_.max_attempts == 0) cfg_.max_attempts = 1;
}

std::string extract_generated_text(const nlohmann::json& response) {
    if (response.contains("choices") && response["choices"].is_array() && !response["choices"].empty()) {
        const auto& choice = response["choices"][0];
        if (choice.contains("message")) {
            const auto& msg = choice["message"];
            if (msg.contains("tool_calls") && msg["tool_calls"].is_array() && !msg["tool_calls"].empty()) {
                const auto& fn = msg["tool_calls"][0].at("function");
                nlohmann::json call = {{"tool", fn.at("name")}};
                const auto& args = fn.value("arguments", nlohmann::json::object());
                nlohmann::json parsed = args.is_string() ? nlohmann::json::parse(args.get<std::string>()) : args;
                if (parsed.is_object())
                    for (auto& [k, v] : parsed.items()) call[k] = v;
                return call.dump();
            }
            if (msg.contains("content") && msg["content"].is_string()) return msg["content"].get<std::string>();
        }
        if (choice.contains("text") && choice["text"].is_string()) return choice["text"].get<std::string>();
    }
    if (response.contains("content") && response["content"].is_string()) return response["content"].get<std::string>();
    if (response.contains("text") && response["text"].is_string()) return response["text"].get<std::string>();
    throw EndpointError("endpoint response has no generated text", false);
}

std::string HttpChatClient::post_once(const std::string& body) {
    httplib::Client client(origin_);
    client.set_connection_timeout(cfg_.timeout);
    client.set_read_timeout(cfg_.timeout);
    client.set_write_timeout(cfg_.timeout);
    httplib::Headers headers;
    if (!cfg_.token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.token);
    ++calls_;
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) throw EndpointError("endpoint request failed: " + httplib::to_string(res.error()), true);
    if (res->status == 429 || res->status >= 500)
        throw EndpointError("endpoint returned HTTP " + std::to_string(res->status), true);
    if (res->status < 200 || res->status >= 300)
        throw EndpointError("endpoint returned HTTP " + std::to_string(res->status), false);
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
        throw EndpointError("endpoint response is not JSON", false);
    }
    try {
        return extract_generated_text(parsed);
    } catch (const nlohmann::json::exception& e) {
        throw EndpointError(std::string("malformed endpoint response: ") + e.what(), false);
    }
}

std::string HttpChatClient::chat(const nlohmann::json& messages) {
    const std::string body = nlohmann::json{{"messages", messages}, {"temperature", 0}}.dump();
    for (std::size_t attempt = 1;; ++attempt) {
        try {
            return post_once(body);
        } catch (const EndpointError& e) {
            if (!e.retriable() || attempt >= cfg_.max_attempts) throw;
            spdlog::warn("{} (attempt {}/{})", e.what(), attempt, cfg_.max_attempts);
            std::this_thread::sleep_for(cfg_.backoff * attempt);
        }
    }
}

}  // namespace kgqa
