#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgqa/bench_gen.hpp"
#include "kgqa/endpoint.hpp"
#include "kgqa/reasoning_env.hpp"

namespace kgqa {

inline constexpr const char* kExploreTool = "relation_path_mining";
inline constexpr const char* kGroundTool = "path_grounding";
inline constexpr const char* kSynthesizeTool = "complete_task";

struct ExploreAction {
    std::string entity;
    std::size_t max_hops = 1;
};

struct GroundAction {
    std::string entity;
    std::vector<std::string> relation_paths;  // "rel1 -> rel2"
};

struct SynthesizeAction {
    std::vector<std::string> reasoning_paths;  // "(s, p, o) ; (s, p, o)"
    std::vector<std::string> answers;
    bool abstain = false;
};

using Action = std::variant<ExploreAction, GroundAction, SynthesizeAction>;

/// {"tool": name, ...arguments}
nlohmann::json action_to_json(const Action& a);
/// Throws a domain error describing what is wrong with the object.
Action action_from_json(const nlohmann::json& j);
/// First JSON object in a reply (bare, fenced or embedded in prose).
std::optional<nlohmann::json> extract_json_object(const std::string& text);

/// Reason the action cannot run in `state`, or nullopt when it can.
std::optional<std::string> validate_action(const Action& a, const AgentState& state, const Environment& env);

struct Execution {
    nlohmann::json observation;
    TransitionInput transition;
};

/// Runs a validated action. Observations use the serialized path strings.
Execution execute_action(const Action& a, const AgentState& state, const Environment& env);

/// Lowercase word tokens split on non-alphanumerics and camelCase, with a
/// trailing plural s dropped.
std::vector<std::string> tokenize(std::string_view text);

using SynonymTable = std::map<std::string, std::vector<std::string>>;
SynonymTable load_synonyms(const std::string& path);
SynonymTable synonyms_from_json(const nlohmann::json& j);

/// Scores relation paths against a question: coverage of the target word (or
/// one of its synonym phrases), then overlap with the other question words.
class QuestionMatcher {
public:
    QuestionMatcher(const std::string& question, const std::string& topic, const SynonymTable& synonyms);

    struct Score {
        double coverage = 0;
        std::size_t overlap = 0;
        bool positive() const { return coverage > 0 || overlap > 0; }
        auto operator<=>(const Score&) const = default;
    };

    Score score(const RelationPath& p, const Environment& env) const;
    const std::string& target() const { return target_; }

private:
    std::string target_;
    std::vector<std::vector<std::string>> alternatives_;
    std::vector<std::string> words_;
};

struct StepRecord {
    std::size_t index = 0;
    std::string state_digest;  // before the action
    nlohmann::json action;     // null for a failed decision
    nlohmann::json observation;
    std::optional<std::string> repair;  // problem that triggered a repair round-trip
    std::size_t truncated = 0;          // paths left out of the policy's view
};

struct EpisodeView {
    const QAInstance& question;
    const AgentState& state;
    const Environment& env;
    std::span<const StepRecord> history;
};

struct PolicyReply {
    std::string text;
    std::size_t endpoint_calls = 0;
    std::size_t truncated = 0;
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual PolicyReply decide(const EpisodeView& view) = 0;
    /// Second chance after `problem` rejected the previous reply.
    virtual PolicyReply repair(const EpisodeView& view, const std::string& problem) = 0;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

struct HeuristicConfig {
    std::size_t top_k = 3;
    SynonymTable synonyms;
};

/// Deterministic schedule: explore(topic, 1), widen the hop limit while no
/// path covers the question's target word, ground the top-k scoring paths,
/// answer with the terminal entities of the best-scoring reasoning paths.
class HeuristicPolicy : public Policy {
public:
    explicit HeuristicPolicy(HeuristicConfig cfg) : cfg_(std::move(cfg)) {}
    PolicyReply decide(const EpisodeView& view) override;
    PolicyReply repair(const EpisodeView& view, const std::string& problem) override;

private:
    HeuristicConfig cfg_;
};

struct LlmPolicyConfig {
    std::size_t max_paths_per_message = 50;
};

/// Tool-calling policy over a chat endpoint: system prompt plus tool
/// documentation, one JSON tool call per turn.
class LlmPolicy : public Policy {
public:
    LlmPolicy(ChatClient& client, LlmPolicyConfig cfg = {}) : client_(client), cfg_(cfg) {}
    PolicyReply decide(const EpisodeView& view) override;
    PolicyReply repair(const EpisodeView& view, const std::string& problem) override;

    static std::string system_message();

private:
    std::string state_message(const EpisodeView& view, std::size_t& truncated) const;
    PolicyReply ask(std::size_t truncated);

    ChatClient& client_;
    LlmPolicyConfig cfg_;
    nlohmann::json messages_ = nlohmann::json::array();
    std::size_t seen_steps_ = 0;
    std::string pending_reply_;
};

struct PolicyBudget {
    std::size_t max_actions = 10;
    std::size_t max_endpoint_calls = 50;
    std::chrono::milliseconds wall_clock{std::chrono::minutes(5)};

    void validate() const;
};

enum class Termination { synthesized, budget_actions, budget_endpoint_calls, budget_time, malformed_action, endpoint_error };
const char* to_string(Termination t);

struct EpisodeTrace {
    std::string question_id;
    std::string topic;
    std::vector<StepRecord> steps;
    std::vector<std::string> prediction;
    std::vector<std::string> supporting_paths;
    Termination termination = Termination::synthesized;
    bool fallback = false;
    bool abstain = false;
    std::vector<std::string> out_of_graph;  // predicted ids not in the state's entity set
    std::size_t endpoint_calls = 0;
    std::string diagnostic;

    std::size_t step_count() const { return steps.size(); }
    bool terminated() const { return termination == Termination::synthesized; }
    std::string to_jsonl() const;
    nlohmann::json prediction_json() const;
};

/// Answers from the best-scoring reasoning paths in C (all ties), or empty.
SynthesizeAction best_overlap_answer(const AgentState& state, const Environment& env, const QuestionMatcher& m,
                                     EntityHandle topic);

EpisodeTrace run_episode(const Environment& env, const QAInstance& question, Policy& policy,
                         const PolicyBudget& budget, const QuestionMatcher& fallback_matcher);

/// Independent episodes, up to `parallel` at a time, results in input order.
std::vector<EpisodeTrace> run_episodes(const Environment& env, std::span<const QAInstance> questions,
                                       const PolicyFactory& make_policy, const PolicyBudget& budget,
                                       const SynonymTable& synonyms, std::size_t parallel);

struct ReplayReport {
    std::size_t episodes = 0;
    std::size_t steps = 0;
    std::vector<std::string> mismatches;
    bool ok() const { return mismatches.empty(); }
};

/// Re-executes every recorded action and compares observations and digests.
ReplayReport replay_traces(const Environment& env, std::span<const QAInstance> questions, const std::string& jsonl);

}  // namespace kgqa
