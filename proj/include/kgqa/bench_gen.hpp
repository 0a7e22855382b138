#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgqa/endpoint.hpp"
#include "kgqa/kg_store.hpp"
#include "kgqa/rule_eval.hpp"
#include "kgqa/rule_miner.hpp"

namespace kgqa {

enum class QuestionBackend { template_text, external };
enum class TopicSide { random, subject, object };
enum class Direction { topic_is_subject, topic_is_object };
enum class Split { train, val, test };

const char* to_string(QuestionBackend b);
const char* to_string(TopicSide s);
const char* to_string(Direction d);
const char* to_string(Split s);
QuestionBackend parse_backend(const std::string& s);
TopicSide parse_topic_side(const std::string& s);
Direction parse_direction(const std::string& s);
Split parse_split(const std::string& s);

struct GenConfig {
    std::size_t groundings_per_rule = 30;
    double tau = 0.05;
    std::array<double, 3> split_ratio{0.8, 0.1, 0.1};
    std::uint64_t seed = 0;
    QuestionBackend backend = QuestionBackend::template_text;
    TopicSide topic_side = TopicSide::random;
    std::size_t concurrency = 4;  // in-flight endpoint requests

    void validate() const;
    nlohmann::json to_json() const;
};

/// A mined rule plus the id questions refer to it by ("r<line>").
struct NamedRule {
    std::string id;
    MinedRule mined;
};

std::vector<NamedRule> name_rules(std::vector<MinedRule> rules);

struct RemovalEntry {
    std::string rule_id;
    Substitution grounding;
    TripleRef removed;
    std::vector<TripleRef> witness;
};

struct RemovalPlan {
    std::vector<RemovalEntry> entries;
    std::vector<std::string> rules_without_entries;

    std::vector<TripleRef> removed() const;
};

/// Rules are visited by descending PCA confidence then canonical form; per rule
/// up to groundings_per_rule distinct heads are drawn by seeded sampling. A
/// head is removed only while some body grounding for it avoids every removed
/// triple, and that grounding's body is then protected from later removal.
RemovalPlan plan_removals(const KnowledgeGraph& g, std::span<const NamedRule> rules, const GenConfig& cfg);

nlohmann::json removal_to_json(const RemovalEntry& e, const HornRule& rule, const KnowledgeGraph& g);

struct QAInstance {
    std::string id;
    std::string question;
    std::string topic;
    Direction direction = Direction::topic_is_subject;
    std::string predicate;
    std::vector<std::string> answers;
    std::string hard_answer;
    Triple removed_triple;
    std::string rule_id;
    Split split = Split::train;
};

nlohmann::json to_json(const QAInstance& q);
QAInstance qa_from_json(const nlohmann::json& j);
std::vector<QAInstance> questions_from_jsonl(const std::string& text);
std::string questions_to_jsonl(std::span<const QAInstance> qs);

struct GeneratedQuestion {
    std::string text;
    std::string backend;
    std::string prompt_sha256;  // empty for the template backend
    std::size_t retries = 0;
    bool fallback = false;      // template text used after a rejected generation
};

/// Deterministic question text, direction-annotated.
std::string template_question(const std::string& predicate, const std::string& topic, Direction d);

/// The question-generation prompt with the triple and entities filled in.
std::string question_prompt(const Triple& removed, const std::string& topic, const std::string& answer);

/// True when `id` occurs in `text` delimited by non-alphanumeric characters.
bool mentions_entity(const std::string& text, const std::string& id);

class QuestionGenerator {
public:
    virtual ~QuestionGenerator() = default;
    virtual GeneratedQuestion generate(const Triple& removed, Direction d) = 0;
};

class TemplateQuestionGenerator : public QuestionGenerator {
public:
    GeneratedQuestion generate(const Triple& removed, Direction d) override;
};

/// Asks the endpoint; a reply naming the answer is retried once, then
/// replaced by template text and flagged.
class EndpointQuestionGenerator : public QuestionGenerator {
public:
    explicit EndpointQuestionGenerator(ChatClient& client) : client_(client) {}
    GeneratedQuestion generate(const Triple& removed, Direction d) override;

private:
    ChatClient& client_;
};

struct QuestionRequest {
    Triple removed;
    Direction direction;
};

/// Runs the generator with up to `concurrency` requests in flight; results
/// are in request order.
std::vector<GeneratedQuestion> generate_questions(QuestionGenerator& gen, std::span<const QuestionRequest> requests,
                                                  std::size_t concurrency);

/// One seeded coin per plan entry (or the fixed side).
std::vector<Direction> choose_directions(std::size_t n, const GenConfig& cfg);

struct AnswerSet {
    std::vector<std::string> answers;  // sorted by id
    std::string hard_answer;
};

AnswerSet complete_answer_set(const KnowledgeGraph& complete, const std::string& topic, const std::string& predicate,
                              Direction d, const Triple& removed);

/// Caps every hard-answer entity at max(1, floor(tau * |Q|)) questions.
std::vector<QAInstance> downsample(std::vector<QAInstance> questions, double tau, std::uint64_t seed);

/// Seeded shuffle; val and test get floor(n * ratio), train the remainder.
std::vector<QAInstance> split_dataset(std::vector<QAInstance> questions, const std::array<double, 3>& ratio,
                                      std::uint64_t seed);

struct BenchmarkResult {
    KnowledgeGraph incomplete;
    RemovalPlan plan;
    std::vector<QAInstance> questions;           // final, in id order
    std::vector<nlohmann::json> provenance;      // per surviving question
    std::size_t generated = 0;                   // before downsampling
    std::size_t duplicate_topic_predicate = 0;
};

/// Removal step only; question text is produced by finish_benchmark.
BenchmarkResult plan_benchmark(const KnowledgeGraph& complete, std::span<const NamedRule> rules, const GenConfig& cfg);
void finish_benchmark(BenchmarkResult& result, const KnowledgeGraph& complete, QuestionGenerator& gen,
                      const GenConfig& cfg);

/// Post-hoc answerability check: the removed triple is absent from the
/// incomplete graph and its rule still has a full body grounding there.
/// Returns one message per violation.
std::vector<std::string> verify_answerability(const KnowledgeGraph& complete, const KnowledgeGraph& incomplete,
                                              std::span<const NamedRule> rules, std::span<const QAInstance> questions);

namespace bundle {
inline constexpr const char* complete = "complete.tsv";
inline constexpr const char* incomplete = "incomplete.tsv";
inline constexpr const char* removals = "removals.jsonl";
inline constexpr const char* questions = "questions.jsonl";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* rules = "rules.jsonl";
inline constexpr const char* provenance = "provenance.jsonl";
}  // namespace bundle

void write_removal_artifacts(const std::string& dir, const KnowledgeGraph& complete, const BenchmarkResult& result,
                             std::span<const NamedRule> rules);
void write_question_artifacts(const std::string& dir, const BenchmarkResult& result);

struct Bundle {
    KnowledgeGraph complete;
    KnowledgeGraph incomplete;  // shares the complete graph's registry
    std::vector<NamedRule> rules;
    std::vector<QAInstance> questions;
    nlohmann::json manifest;
};

/// Loads a bundle directory and checks incomplete.tsv against the removals.
Bundle load_bundle(const std::string& dir);

}  // namespace kgqa
