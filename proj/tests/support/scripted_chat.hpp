#pragma once

#include <deque>
#include <functional>
#include <mutex>
#include <string>

#include "kgqa/common.hpp"
#include "kgqa/endpoint.hpp"

namespace testgen {

// ChatClient answering from a queue of canned replies, or a function of the
// messages when the queue is empty. A reply of "!fail" raises an endpoint error.
class ScriptedChat : public kgqa::ChatClient {
public:
    ScriptedChat() = default;
    explicit ScriptedChat(std::function<std::string(const nlohmann::json&)> fn) : fn_(std::move(fn)) {}

    void push(std::string reply) {
        std::lock_guard lock(mu_);
        replies_.push_back(std::move(reply));
    }

    std::string chat(const nlohmann::json& messages) override {
        ++calls_;
        std::string reply;
        {
            std::lock_guard lock(mu_);
            seen.push_back(messages);
            if (!replies_.empty()) {
                reply = std::move(replies_.front());
                replies_.pop_front();
            } else if (fn_) {
                reply = fn_(messages);
            }
        }
        if (reply == "!fail") throw kgqa::EndpointError("scripted failure", false);
        return reply;
    }

    std::vector<nlohmann::json> seen;

private:
    std::mutex mu_;
    std::deque<std::string> replies_;
    std::function<std::string(const nlohmann::json&)> fn_;
};

}  // namespace testgen
