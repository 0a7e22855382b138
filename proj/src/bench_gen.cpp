#include "kgqa/bench_gen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "kgqa/common.hpp"
#include "kgqa/prompts.hpp"

namespace kgqa {

const char* to_string(QuestionBackend b) { return b == QuestionBackend::external ? "external" : "template"; }

const char* to_string(TopicSide s) {
    switch (s) {
        case TopicSide::subject: return "subject";
        case TopicSide::object: return "object";
        case TopicSide::random: break;
    }
    return "random";
}

const char* to_string(Direction d) { return d == Direction::topic_is_subject ? "topic-is-subject" : "topic-is-object"; }

const char* to_string(Split s) {
    switch (s) {
        case Split::val: return "val";
        case Split::test: return "test";
        case Split::train: break;
    }
    return "train";
}

QuestionBackend parse_backend(const std::string& s) {
    if (s == "template") return QuestionBackend::template_text;
    if (s == "external") return QuestionBackend::external;
    throw usage_error("unknown question backend: " + s);
}

TopicSide parse_topic_side(const std::string& s) {
    if (s == "random") return TopicSide::random;
    if (s == "subject") return TopicSide::subject;
    if (s == "object") return TopicSide::object;
    throw usage_error("unknown topic side: " + s);
}

Direction parse_direction(const std::string& s) {
    if (s == "topic-is-subject") return Direction::topic_is_subject;
    if (s == "topic-is-object") return Direction::topic_is_object;
    throw domain_error("unknown direction: " + s);
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw domain_error("unknown split: " + s);
}

void GenConfig::validate() const {
    if (!(tau > 0.0 && tau <= 1.0)) throw usage_error("tau must be in (0, 1]");
    if (groundings_per_rule < 1) throw usage_error("groundings-per-rule must be >= 1");
    for (double r : split_ratio)
        if (r < 0.0) throw usage_error("split ratios must be non-negative");
    if (std::abs(split_ratio[0] + split_ratio[1] + split_ratio[2] - 1.0) > 1e-9)
        throw usage_error("split ratios must sum to 1");
    if (concurrency < 1) throw usage_error("concurrency must be >= 1");
}

nlohmann::json GenConfig::to_json() const {
    return {{"groundings_per_rule", groundings_per_rule},
            {"tau", tau},
            {"split_ratio", split_ratio},
            {"seed", seed},
            {"question_backend", to_string(backend)},
            {"topic_side", to_string(topic_side)},
            {"concurrency", concurrency}};
}

std::vector<NamedRule> name_rules(std::vector<MinedRule> rules) {
    std::vector<NamedRule> out;
    out.reserve(rules.size());
    for (std::size_t i = 0; i < rules.size(); ++i) out.push_back({"r" + std::to_string(i), std::move(rules[i])});
    return out;
}

std::vector<TripleRef> RemovalPlan::removed() const {
    std::vector<TripleRef> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.removed);
    return out;
}

RemovalPlan plan_removals(const KnowledgeGraph& g, std::span<const NamedRule> rules, const GenConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, const NamedRule*>> order;
    for (const auto& r : rules) order.emplace_back(canonical_key(canonicalize(r.mined.rule)), &r);
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second->mined.metrics.pca_confidence != b.second->mined.metrics.pca_confidence)
            return a.second->mined.metrics.pca_confidence > b.second->mined.metrics.pca_confidence;
        return a.first < b.first;
    });

    RemovalPlan plan;
    std::unordered_set<TripleRef, TripleRefHash> removed, protected_body;
    for (const auto& [key, named] : order) {
        const HornRule& rule = named->mined.rule;
        const std::size_t before = plan.entries.size();

        // Distinct heads present in g together with their groundings, in
        // lexicographic order.
        std::map<TripleRef, std::vector<Substitution>> by_head;
        for (auto& gr : enumerate_groundings(g, rule))
            if (gr.head_present) by_head[instantiate(rule.head, gr.assignment)].push_back(std::move(gr.assignment));
        std::vector<const std::pair<const TripleRef, std::vector<Substitution>>*> heads;
        for (const auto& kv : by_head) heads.push_back(&kv);

        Rng rng(mix_seed(cfg.seed, fnv1a(key)));
        for (std::size_t idx : rng.sample_indices(heads.size(), std::min(cfg.groundings_per_rule, heads.size()))) {
            const auto& [head, groundings] = *heads[idx];
            if (removed.contains(head) || protected_body.contains(head)) continue;
            for (const Substitution& s : groundings) {
                std::vector<TripleRef> body = instantiate_body(rule, s);
                const bool intact = std::none_of(body.begin(), body.end(), [&](const TripleRef& t) {
                    return t == head || removed.contains(t);
                });
                if (!intact) continue;
                removed.insert(head);
                for (const auto& t : body) protected_body.insert(t);
                plan.entries.push_back({named->id, s, head, std::move(body)});
                break;
            }
        }
        if (plan.entries.size() == before) plan.rules_without_entries.push_back(named->id);
    }
    if (!plan.rules_without_entries.empty())
        spdlog::info("{} rules contributed no removals", plan.rules_without_entries.size());
    return plan;
}

nlohmann::json removal_to_json(const RemovalEntry& e, const HornRule& rule, const KnowledgeGraph& g) {
    nlohmann::json grounding = nlohmann::json::object();
    for (std::uint32_t v = 0; v < e.grounding.size() && v < rule.variable_count(); ++v)
        grounding[variable_name(v)] = g.name(e.grounding[v]);
    nlohmann::json witness = nlohmann::json::array();
    for (const auto& t : e.witness) witness.push_back(to_json(g.materialize(t)));
    return {{"rule_id", e.rule_id},
            {"grounding", grounding},
            {"removed_triple", to_json(g.materialize(e.removed))},
            {"witness_body", witness}};
}

nlohmann::json to_json(const QAInstance& q) {
    return {{"id", q.id},
            {"question", q.question},
            {"topic", q.topic},
            {"direction", to_string(q.direction)},
            {"predicate", q.predicate},
            {"answers", q.answers},
            {"hard_answer", q.hard_answer},
            {"removed_triple", to_json(q.removed_triple)},
            {"rule_id", q.rule_id},
            {"split", to_string(q.split)}};
}

QAInstance qa_from_json(const nlohmann::json& j) {
    QAInstance q;
    q.id = j.at("id").get<std::string>();
    q.question = j.at("question").get<std::string>();
    q.topic = j.at("topic").get<std::string>();
    q.direction = parse_direction(j.at("direction").get<std::string>());
    q.predicate = j.at("predicate").get<std::string>();
    q.answers = j.at("answers").get<std::vector<std::string>>();
    q.hard_answer = j.at("hard_answer").get<std::string>();
    q.removed_triple = triple_from_json(j.at("removed_triple"));
    q.rule_id = j.at("rule_id").get<std::string>();
    q.split = parse_split(j.at("split").get<std::string>());
    return q;
}

std::vector<QAInstance> questions_from_jsonl(const std::string& text) {
    std::vector<QAInstance> out;
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(qa_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("bad question record: ") + e.what());
        }
    }
    return out;
}

std::string questions_to_jsonl(std::span<const QAInstance> qs) {
    std::string out;
    for (const auto& q : qs) out += to_json(q).dump() + "\n";
    return out;
}

std::string template_question(const std::string& predicate, const std::string& topic, Direction d) {
    return "Which entity has relation " + predicate + " with " + topic + "? (" + topic + " is the " +
           (d == Direction::topic_is_subject ? "subject" : "object") + ")";
}

std::string question_prompt(const Triple& removed, const std::string& topic, const std::string& answer) {
    std::string text(prompts::kQuestionPrompt);
    const std::pair<std::string, std::string> subs[] = {{"{entity_h}", removed.subject},
                                                        {"{predicate_T}", removed.predicate},
                                                        {"{entity_t}", removed.object},
                                                        {"{topic_entity}", topic},
                                                        {"{answer_entity}", answer}};
    for (const auto& [from, to] : subs)
        for (std::size_t pos = 0; (pos = text.find(from, pos)) != std::string::npos; pos += to.size())
            text.replace(pos, from.size(), to);
    return text;
}

bool mentions_entity(const std::string& text, const std::string& id) {
    if (id.empty()) return false;
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return s;
    };
    const std::string hay = lower(text), needle = lower(id);
    auto boundary = [&](std::size_t i) {
        return i >= hay.size() || !std::isalnum(static_cast<unsigned char>(hay[i]));
    };
    for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1))
        if ((pos == 0 || boundary(pos - 1)) && boundary(pos + needle.size())) return true;
    return false;
}

namespace {

std::pair<std::string, std::string> topic_answer(const Triple& t, Direction d) {
    return d == Direction::topic_is_subject ? std::pair{t.subject, t.object} : std::pair{t.object, t.subject};
}

std::string trim_text(std::string s) {
    const auto ws = " \t\r\n\"";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace

GeneratedQuestion TemplateQuestionGenerator::generate(const Triple& removed, Direction d) {
    return {template_question(removed.predicate, topic_answer(removed, d).first, d), "template", "", 0, false};
}

GeneratedQuestion EndpointQuestionGenerator::generate(const Triple& removed, Direction d) {
    const auto [topic, answer] = topic_answer(removed, d);
    const std::string prompt = question_prompt(removed, topic, answer);
    const nlohmann::json messages = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    GeneratedQuestion q{"", "external", sha256_hex(prompt), 0, false};
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string text = trim_text(client_.chat(messages));
        if (!text.empty() && !mentions_entity(text, answer)) {
            q.text = std::move(text);
            return q;
        }
        if (attempt == 0) ++q.retries;
    }
    q.text = template_question(removed.predicate, topic, d);
    q.fallback = true;
    return q;
}

std::vector<GeneratedQuestion> generate_questions(QuestionGenerator& gen, std::span<const QuestionRequest> requests,
                                                  std::size_t concurrency) {
    std::vector<GeneratedQuestion> out(requests.size());
    parallel_for(requests.size(), std::max<std::size_t>(1, concurrency),
                 [&](std::size_t i) { out[i] = gen.generate(requests[i].removed, requests[i].direction); });
    return out;
}

std::vector<Direction> choose_directions(std::size_t n, const GenConfig& cfg) {
    std::vector<Direction> out(n, Direction::topic_is_subject);
    if (cfg.topic_side == TopicSide::object) std::fill(out.begin(), out.end(), Direction::topic_is_object);
    if (cfg.topic_side != TopicSide::random) return out;
    Rng rng(mix_seed(cfg.seed, fnv1a("topic-side")));
    for (auto& d : out) d = rng.coin() ? Direction::topic_is_subject : Direction::topic_is_object;
    return out;
}

AnswerSet complete_answer_set(const KnowledgeGraph& complete, const std::string& topic, const std::string& predicate,
                              Direction d, const Triple& removed) {
    const bool subj = d == Direction::topic_is_subject;
    if (removed.predicate != predicate || (subj ? removed.subject : removed.object) != topic)
        throw domain_error("removed triple " + to_string(removed) + " does not match topic " + topic + " and predicate " +
                           predicate);
    if (!complete.contains(removed)) throw domain_error("removed triple not in complete graph: " + to_string(removed));
    const EntityHandle t = *complete.find_entity(topic);
    const PredicateHandle p = *complete.find_predicate(predicate);
    AnswerSet set;
    for (EntityHandle e : subj ? complete.objects(t, p) : complete.subjects(t, p)) set.answers.push_back(complete.name(e));
    set.hard_answer = subj ? removed.object : removed.subject;
    return set;
}

std::vector<QAInstance> downsample(std::vector<QAInstance> questions, double tau, std::uint64_t seed) {
    if (!(tau > 0.0 && tau <= 1.0)) throw usage_error("tau must be in (0, 1]");
    const double bound = tau * double(questions.size());
    const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(bound)));
    std::map<std::string, std::vector<std::size_t>> by_answer;
    for (std::size_t i = 0; i < questions.size(); ++i) by_answer[questions[i].hard_answer].push_back(i);

    std::vector<bool> survive(questions.size(), true);
    for (const auto& [answer, idx] : by_answer) {
        if (double(idx.size()) <= bound) continue;
        std::vector<bool> chosen(idx.size(), false);
        Rng rng(mix_seed(seed, fnv1a("downsample:" + answer)));
        for (std::size_t k : rng.sample_indices(idx.size(), std::min(keep, idx.size()))) chosen[k] = true;
        for (std::size_t k = 0; k < idx.size(); ++k) survive[idx[k]] = chosen[k];
    }
    std::vector<QAInstance> out;
    for (std::size_t i = 0; i < questions.size(); ++i)
        if (survive[i]) out.push_back(std::move(questions[i]));
    return out;
}

std::vector<QAInstance> split_dataset(std::vector<QAInstance> questions, const std::array<double, 3>& ratio,
                                      std::uint64_t seed) {
    const std::size_t n = questions.size();
    if (n < 10) spdlog::warn("splitting only {} questions", n);
    const auto part = [&](double r) { return static_cast<std::size_t>(std::floor(double(n) * r + 1e-9)); };
    const std::size_t n_val = part(ratio[1]), n_test = part(ratio[2]);
    const std::size_t n_train = n - std::min(n, n_val + n_test);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, fnv1a("split")));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t k = 0; k < n; ++k)
        questions[order[k]].split = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
    return questions;
}

BenchmarkResult plan_benchmark(const KnowledgeGraph& complete, std::span<const NamedRule> rules, const GenConfig& cfg) {
    RemovalPlan plan = plan_removals(complete, rules, cfg);
    const std::vector<TripleRef> victims = plan.removed();
    BenchmarkResult result{complete.remove_triples(victims), std::move(plan), {}, {}, 0, 0};
    spdlog::info("removed {} of {} triples", victims.size(), complete.size());
    return result;
}

void finish_benchmark(BenchmarkResult& result, const KnowledgeGraph& complete, QuestionGenerator& gen,
                      const GenConfig& cfg) {
    const auto& entries = result.plan.entries;
    const std::vector<Direction> dirs = choose_directions(entries.size(), cfg);
    std::vector<QuestionRequest> requests;
    requests.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) requests.push_back({complete.materialize(entries[i].removed), dirs[i]});

    const std::vector<GeneratedQuestion> texts = generate_questions(gen, requests, cfg.concurrency);

    const std::size_t width = std::to_string(entries.size()).size();
    std::vector<QAInstance> questions;
    std::map<std::string, nlohmann::json> provenance;
    std::set<std::tuple<std::string, std::string, Direction>> seen_keys;
    result.duplicate_topic_predicate = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Triple& t = requests[i].removed;
        QAInstance q;
        std::string num = std::to_string(i);
        q.id = "q" + std::string(width - num.size(), '0') + num;
        q.question = texts[i].text;
        q.direction = dirs[i];
        q.topic = topic_answer(t, q.direction).first;
        q.predicate = t.predicate;
        AnswerSet answers = complete_answer_set(complete, q.topic, q.predicate, q.direction, t);
        q.answers = std::move(answers.answers);
        q.hard_answer = std::move(answers.hard_answer);
        q.removed_triple = t;
        q.rule_id = entries[i].rule_id;
        if (!seen_keys.emplace(q.topic, q.predicate, q.direction).second) ++result.duplicate_topic_predicate;
        provenance[q.id] = {{"id", q.id},
                            {"backend", texts[i].backend},
                            {"prompt_sha256", texts[i].prompt_sha256},
                            {"retries", texts[i].retries},
                            {"fallback", texts[i].fallback}};
        questions.push_back(std::move(q));
    }
    result.generated = questions.size();
    questions = downsample(std::move(questions), cfg.tau, cfg.seed);
    questions = split_dataset(std::move(questions), cfg.split_ratio, cfg.seed);
    result.provenance.clear();
    for (const auto& q : questions) result.provenance.push_back(provenance.at(q.id));
    result.questions = std::move(questions);
}

std::vector<std::string> verify_answerability(const KnowledgeGraph& complete, const KnowledgeGraph& incomplete,
                                              std::span<const NamedRule> rules, std::span<const QAInstance> questions) {
    if (complete.registry() != incomplete.registry())
        throw domain_error("answerability check needs graphs that share one registry");
    std::map<std::string, const NamedRule*> by_id;
    for (const auto& r : rules) by_id[r.id] = &r;

    std::vector<std::string> problems;
    for (const auto& q : questions) {
        auto fail = [&](const std::string& why) { problems.push_back(q.id + ": " + why); };
        auto removed = complete.resolve(q.removed_triple);
        if (!removed) {
            fail("removed triple not in complete graph");
            continue;
        }
        if (incomplete.contains(*removed)) fail("removed triple still present");
        if (std::find(q.answers.begin(), q.answers.end(), q.hard_answer) == q.answers.end())
            fail("hard answer missing from answer set");
        if (!complete.find_entity(q.topic)) fail("topic not in complete graph");
        for (const auto& a : q.answers)
            if (!complete.find_entity(a)) fail("answer not in complete graph: " + a);
        auto it = by_id.find(q.rule_id);
        if (it == by_id.end()) {
            fail("unknown rule " + q.rule_id);
            continue;
        }
        const HornRule& rule = it->second->mined.rule;
        if (rule.head.predicate != removed->predicate) {
            fail("rule head predicate differs from removed triple");
            continue;
        }
        if (groundings_for_head(incomplete, rule, removed->subject, removed->object, 1).empty())
            fail("no surviving body witness for " + to_string(q.removed_triple));
    }
    return problems;
}

namespace {

std::string join_path(const std::string& dir, const char* file) { return (std::filesystem::path(dir) / file).string(); }

}  // namespace

void write_removal_artifacts(const std::string& dir, const KnowledgeGraph& complete, const BenchmarkResult& result,
                             std::span<const NamedRule> rules) {
    std::filesystem::create_directories(dir);
    std::map<std::string, const NamedRule*> by_id;
    for (const auto& r : rules) by_id[r.id] = &r;

    save_graph(complete, join_path(dir, bundle::complete));
    save_graph(result.incomplete, join_path(dir, bundle::incomplete));
    std::string removals;
    for (const auto& e : result.plan.entries)
        removals += removal_to_json(e, by_id.at(e.rule_id)->mined.rule, complete).dump() + "\n";
    write_file(join_path(dir, bundle::removals), removals);
    std::string rules_text;
    for (const auto& r : rules) {
        nlohmann::json j = rule_to_json(r.mined, complete);
        j["id"] = r.id;
        rules_text += j.dump() + "\n";
    }
    write_file(join_path(dir, bundle::rules), rules_text);
}

void write_question_artifacts(const std::string& dir, const BenchmarkResult& result) {
    write_file(join_path(dir, bundle::questions), questions_to_jsonl(result.questions));
    std::string prov;
    for (const auto& p : result.provenance) prov += p.dump() + "\n";
    write_file(join_path(dir, bundle::provenance), prov);
}

Bundle load_bundle(const std::string& dir) {
    KnowledgeGraph complete = load_graph(join_path(dir, bundle::complete));

    std::vector<Triple> removed;
    {
        std::istringstream in(read_file(join_path(dir, bundle::removals)));
        std::size_t line_no = 0;
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            if (line.empty()) continue;
            try {
                removed.push_back(triple_from_json(nlohmann::json::parse(line).at("removed_triple")));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(line_no, std::string("bad removal record: ") + e.what());
            }
        }
    }
    KnowledgeGraph incomplete = complete.remove_triples(std::span<const Triple>(removed));
    if (load_graph(join_path(dir, bundle::incomplete)).to_triples() != incomplete.to_triples())
        throw domain_error("incomplete.tsv does not match complete.tsv minus removals.jsonl");

    std::vector<NamedRule> rules;
    {
        std::istringstream in(read_file(join_path(dir, bundle::rules)));
        std::size_t line_no = 0;
        for (std::string line; std::getline(in, line);) {
            ++line_no;
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                rules.push_back({j.at("id").get<std::string>(), mined_rule_from_json(j, complete)});
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(line_no, std::string("bad rule record: ") + e.what());
            }
        }
    }
    std::vector<QAInstance> questions = questions_from_jsonl(read_file(join_path(dir, bundle::questions)));
    nlohmann::json manifest = nlohmann::json::object();
    if (std::filesystem::exists(join_path(dir, bundle::manifest)))
        manifest = nlohmann::json::parse(read_file(join_path(dir, bundle::manifest)));
    return {std::move(complete), std::move(incomplete), std::move(rules), std::move(questions), std::move(manifest)};
}

}  // namespace kgqa
