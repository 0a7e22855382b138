#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "kgqa/bench_gen.hpp"
#include "kgqa/common.hpp"
#include "kgqa/rule_miner.hpp"
#include "support/generators.hpp"
#include "support/scripted_chat.hpp"

using namespace kgqa;

namespace {

struct Setup {
    KnowledgeGraph graph;
    std::vector<NamedRule> rules;
};

Setup family_setup(std::size_t families = 40) {
    KnowledgeGraph g = testgen::family_graph(2, families);
    MinerConfig cfg;
    cfg.max_rule_length = 3;
    auto rules = name_rules(mine(g, cfg));
    return {std::move(g), std::move(rules)};
}

BenchmarkResult build(const Setup& s, const GenConfig& cfg) {
    BenchmarkResult r = plan_benchmark(s.graph, s.rules, cfg);
    TemplateQuestionGenerator gen;
    finish_benchmark(r, s.graph, gen, cfg);
    return r;
}

QAInstance question_with_answer(const std::string& id, const std::string& answer) {
    QAInstance q;
    q.id = id;
    q.hard_answer = answer;
    q.answers = {answer};
    return q;
}

}  // namespace

TEST_CASE("removal plan leaves a witness for every removed head") {
    const Setup s = family_setup();
    REQUIRE_FALSE(s.rules.empty());
    GenConfig cfg;
    cfg.seed = 7;
    const BenchmarkResult r = build(s, cfg);
    REQUIRE_FALSE(r.plan.entries.empty());
    CHECK(r.incomplete.size() == s.graph.size() - r.plan.entries.size());
    CHECK(r.incomplete.registry() == s.graph.registry());

    std::set<TripleRef> removed;
    for (const auto& e : r.plan.entries) CHECK(removed.insert(e.removed).second);
    std::map<std::string, const NamedRule*> by_id;
    for (const auto& rule : s.rules) by_id[rule.id] = &rule;
    for (const auto& e : r.plan.entries) {
        CHECK_FALSE(r.incomplete.contains(e.removed));
        const HornRule& rule = by_id.at(e.rule_id)->mined.rule;
        CHECK(instantiate(rule.head, e.grounding) == e.removed);
        CHECK(instantiate_body(rule, e.grounding) == e.witness);
        for (const auto& t : e.witness) CHECK(r.incomplete.contains(t));
    }
    CHECK(verify_answerability(s.graph, r.incomplete, s.rules, r.questions).empty());
    for (const auto& q : r.questions) CHECK_FALSE(r.incomplete.contains(q.removed_triple));
}

TEST_CASE("answer sets and question text") {
    const Setup s = family_setup();
    GenConfig cfg;
    cfg.topic_side = TopicSide::subject;
    const BenchmarkResult r = build(s, cfg);
    REQUIRE_FALSE(r.questions.empty());
    for (const auto& q : r.questions) {
        CHECK(q.direction == Direction::topic_is_subject);
        CHECK(q.topic == q.removed_triple.subject);
        CHECK(q.hard_answer == q.removed_triple.object);
        const auto objs = s.graph.objects(*s.graph.find_entity(q.topic), *s.graph.find_predicate(q.predicate));
        CHECK(q.answers.size() == objs.size());
        CHECK(q.question == template_question(q.predicate, q.topic, q.direction));
        CHECK_FALSE(mentions_entity(q.question, q.hard_answer));
    }
    CHECK(template_question("hasUncle", "justin", Direction::topic_is_object) ==
          "Which entity has relation hasUncle with justin? (justin is the object)");
}

TEST_CASE("splits partition the questions") {
    const Setup s = family_setup(80);
    GenConfig cfg;
    cfg.tau = 1.0;
    const BenchmarkResult r = build(s, cfg);
    const std::size_t n = r.questions.size();
    REQUIRE(n >= 10);
    std::map<Split, std::size_t> count;
    std::set<std::string> ids;
    for (const auto& q : r.questions) {
        ++count[q.split];
        CHECK(ids.insert(q.id).second);
    }
    CHECK(count[Split::val] == n / 10);
    CHECK(count[Split::test] == n / 10);
    CHECK(count[Split::train] + count[Split::val] + count[Split::test] == n);
}

TEST_CASE("downsampling caps dominant answers without dropping any") {
    std::vector<QAInstance> qs;
    for (int i = 0; i < 60; ++i) qs.push_back(question_with_answer("a" + std::to_string(i), "hub"));
    for (int i = 0; i < 40; ++i) qs.push_back(question_with_answer("b" + std::to_string(i), "x" + std::to_string(i % 8)));
    const auto out = downsample(qs, 0.05, 3);
    std::map<std::string, std::size_t> before, after;
    for (const auto& q : qs) ++before[q.hard_answer];
    for (const auto& q : out) ++after[q.hard_answer];
    CHECK(after["hub"] == 5);
    for (const auto& [a, n] : before) {
        CHECK(after[a] >= 1);
        CHECK(after[a] <= n);
    }
    CHECK(downsample(qs, 0.05, 3).size() == out.size());
    const auto tiny = downsample({question_with_answer("q", "only"), question_with_answer("r", "only")}, 0.05, 1);
    CHECK(tiny.size() == 1);
}

TEST_CASE("generation is seed-deterministic") {
    const Setup s = family_setup();
    GenConfig cfg;
    cfg.seed = 42;
    const auto a = build(s, cfg);
    const auto b = build(s, cfg);
    CHECK(questions_to_jsonl(a.questions) == questions_to_jsonl(b.questions));
    CHECK(a.incomplete.to_tsv() == b.incomplete.to_tsv());
    cfg.seed = 43;
    const auto c = build(s, cfg);
    CHECK(questions_to_jsonl(a.questions) != questions_to_jsonl(c.questions));
}

TEST_CASE("bundle files round-trip") {
    const Setup s = family_setup();
    GenConfig cfg;
    const auto r = build(s, cfg);
    const std::string dir = testgen::temp_dir("bundle");
    write_removal_artifacts(dir, s.graph, r, s.rules);
    write_question_artifacts(dir, r);
    write_file(dir + "/" + bundle::manifest, "{}");
    const Bundle b = load_bundle(dir);
    CHECK(b.incomplete.to_tsv() == r.incomplete.to_tsv());
    CHECK(questions_to_jsonl(b.questions) == questions_to_jsonl(r.questions));
    CHECK(b.rules.size() == s.rules.size());
    CHECK(verify_answerability(b.complete, b.incomplete, b.rules, b.questions).empty());

    // tampering with the incomplete graph is caught
    write_file(dir + "/" + bundle::incomplete, s.graph.to_tsv());
    CHECK_THROWS_AS(load_bundle(dir), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("answerability check flags a removed triple that is still present") {
    const Setup s = family_setup();
    const auto r = build(s, GenConfig{});
    REQUIRE_FALSE(r.questions.empty());
    const auto problems = verify_answerability(s.graph, s.graph.remove_triples(std::span<const TripleRef>{}), s.rules,
                                               r.questions);
    CHECK(problems.size() >= r.questions.size());
    const auto copy = KnowledgeGraph::with_registry(std::make_shared<Registry>(*s.graph.registry()), r.incomplete);
    CHECK_THROWS_AS(verify_answerability(s.graph, copy, s.rules, r.questions), Error);
}

TEST_CASE("endpoint questions retry once on a leaked answer, then fall back") {
    const Triple t{"f0_kid0", "hasUncle", "f0_uncle"};
    {
        testgen::ScriptedChat chat;
        chat.push("Who is the uncle of f0_kid0?");
        EndpointQuestionGenerator gen(chat);
        const auto q = gen.generate(t, Direction::topic_is_subject);
        CHECK(q.text == "Who is the uncle of f0_kid0?");
        CHECK_FALSE(q.fallback);
        CHECK(q.retries == 0);
        CHECK(q.prompt_sha256 == sha256_hex(question_prompt(t, "f0_kid0", "f0_uncle")));
        const std::string sent = chat.seen.at(0).at(0).at("content");
        CHECK(sent.find("f0_kid0") != std::string::npos);
        CHECK(sent.find("{entity_h}") == std::string::npos);
    }
    {
        testgen::ScriptedChat chat;
        chat.push("Is f0_uncle the uncle of f0_kid0?");
        chat.push("Who is the uncle of f0_kid0?");
        EndpointQuestionGenerator gen(chat);
        const auto q = gen.generate(t, Direction::topic_is_subject);
        CHECK(q.retries == 1);
        CHECK_FALSE(q.fallback);
    }
    {
        testgen::ScriptedChat chat([](const nlohmann::json&) { return std::string("f0_uncle?"); });
        EndpointQuestionGenerator gen(chat);
        const auto q = gen.generate(t, Direction::topic_is_subject);
        CHECK(q.fallback);
        CHECK(q.text == template_question("hasUncle", "f0_kid0", Direction::topic_is_subject));
        CHECK(chat.calls() == 2);
    }
    CHECK(mentions_entity("see f0_uncle.", "f0_uncle"));
    CHECK_FALSE(mentions_entity("see f0_uncle2", "f0_uncle"));
}

TEST_CASE("concurrent generation keeps request order") {
    testgen::ScriptedChat chat([](const nlohmann::json& m) {
        const std::string content = m.at(0).at("content");
        return std::string("question ") + std::to_string(content.size());
    });
    EndpointQuestionGenerator gen(chat);
    std::vector<QuestionRequest> reqs;
    for (int i = 0; i < 20; ++i)
        reqs.push_back({Triple{"s" + std::to_string(i), "p", "o" + std::to_string(i)}, Direction::topic_is_subject});
    const auto out = generate_questions(gen, reqs, 4);
    REQUIRE(out.size() == reqs.size());
    for (std::size_t i = 0; i < reqs.size(); ++i) {
        const auto prompt = question_prompt(reqs[i].removed, reqs[i].removed.subject, reqs[i].removed.object);
        CHECK(out[i].prompt_sha256 == sha256_hex(prompt));
    }
}

TEST_CASE("config validation") {
    GenConfig cfg;
    cfg.split_ratio = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.tau = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_THROWS_AS(parse_backend("nope"), Error);
    CHECK(parse_direction("topic-is-object") == Direction::topic_is_object);
}
