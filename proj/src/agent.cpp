#include "kgqa/agent.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "kgqa/common.hpp"
#include "kgqa/prompts.hpp"

namespace kgqa {

// ---- actions ---------------------------------------------------------------

nlohmann::json action_to_json(const Action& a) {
    return std::visit(
        [](const auto& x) -> nlohmann::json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, ExploreAction>) {
                return {{"tool", kExploreTool}, {"entity", x.entity}, {"max_hops", x.max_hops}};
            } else if constexpr (std::is_same_v<T, GroundAction>) {
                return {{"tool", kGroundTool}, {"entity", x.entity}, {"relation_paths", x.relation_paths}};
            } else {
                nlohmann::json j = {{"tool", kSynthesizeTool},
                                    {"explored_reasoning_paths", x.reasoning_paths},
                                    {"answer_entities", x.answers}};
                if (x.abstain) j["abstain"] = true;
                return j;
            }
        },
        a);
}

namespace {

std::vector<std::string> string_list(const nlohmann::json& args, const char* key) {
    if (!args.contains(key)) throw domain_error(std::string("missing argument '") + key + "'");
    const auto& v = args.at(key);
    if (v.is_string()) return {v.get<std::string>()};
    if (!v.is_array()) throw domain_error(std::string("argument '") + key + "' must be a list of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) throw domain_error(std::string("argument '") + key + "' must be a list of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::string string_arg(const nlohmann::json& args, const char* key) {
    if (!args.contains(key) || !args.at(key).is_string())
        throw domain_error(std::string("argument '") + key + "' must be a string");
    return args.at(key).get<std::string>();
}

}  // namespace

Action action_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw domain_error("tool call must be a JSON object");
    std::string tool;
    if (j.contains("tool") && j["tool"].is_string()) tool = j["tool"].get<std::string>();
    else if (j.contains("name") && j["name"].is_string()) tool = j["name"].get<std::string>();
    else throw domain_error("tool call needs a \"tool\" field");

    nlohmann::json args = j;
    for (const char* key : {"arguments", "args"}) {
        if (!j.contains(key)) continue;
        args = j.at(key).is_string() ? nlohmann::json::parse(j.at(key).get<std::string>(), nullptr, false) : j.at(key);
        if (!args.is_object()) throw domain_error("tool arguments must be a JSON object");
        break;
    }

    if (tool == kExploreTool) {
        ExploreAction a{string_arg(args, "entity"), 0};
        const nlohmann::json h = args.contains("max_hops") ? args.at("max_hops") : nlohmann::json();
        const std::string digits = h.is_string() ? h.get<std::string>() : std::string();
        if (h.is_number_integer() && h.get<long long>() >= 0) a.max_hops = h.get<std::size_t>();
        else if (!digits.empty() && digits.size() < 10 &&
                 std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c) != 0; }))
            a.max_hops = std::stoul(digits);
        else throw domain_error("argument 'max_hops' must be a positive integer");
        return a;
    }
    if (tool == kGroundTool) return GroundAction{string_arg(args, "entity"), string_list(args, "relation_paths")};
    if (tool == kSynthesizeTool) {
        SynthesizeAction a;
        a.reasoning_paths = args.contains("explored_reasoning_paths") ? string_list(args, "explored_reasoning_paths")
                                                                      : std::vector<std::string>{};
        a.answers = string_list(args, "answer_entities");
        a.abstain = args.value("abstain", false);
        return a;
    }
    throw domain_error(fmt::format("unknown tool '{}'; expected {}, {} or {}", tool, kExploreTool, kGroundTool,
                                   kSynthesizeTool));
}

std::optional<nlohmann::json> extract_json_object(const std::string& text) {
    for (std::size_t open = text.find('{'); open != std::string::npos; open = text.find('{', open + 1)) {
        int depth = 0;
        bool in_string = false, escaped = false;
        for (std::size_t i = open; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                auto j = nlohmann::json::parse(text.substr(open, i - open + 1), nullptr, false);
                if (!j.is_discarded() && j.is_object()) return j;
                break;
            }
        }
    }
    return std::nullopt;
}

namespace {

bool in_p(const AgentState& s, const RelationPath& p) {
    return std::any_of(s.P.begin(), s.P.end(), [&](const auto& kv) { return kv.second == p; });
}

std::set<std::string> formatted_c(const AgentState& s, const Environment& env) {
    std::set<std::string> out;
    for (const auto& c : s.C) out.insert(env.format(c));
    return out;
}

std::string strip_quotes(std::string s) {
    while (!s.empty() && (s.front() == '\'' || s.front() == '"' || s.front() == ' ')) s.erase(s.begin());
    while (!s.empty() && (s.back() == '\'' || s.back() == '"' || s.back() == ' ')) s.pop_back();
    return s;
}

}  // namespace

std::optional<std::string> validate_action(const Action& a, const AgentState& state, const Environment& env) {
    const KnowledgeGraph& g = env.graph();
    if (state.terminal) return "episode already finished";
    if (const auto* x = std::get_if<ExploreAction>(&a)) {
        if (!g.find_entity(x->entity)) return "entity '" + x->entity + "' is not in the graph";
        if (x->max_hops < 1 || x->max_hops > env.config().max_hop_limit)
            return fmt::format("max_hops must be between 1 and {}", env.config().max_hop_limit);
        return std::nullopt;
    }
    if (const auto* x = std::get_if<GroundAction>(&a)) {
        if (!g.find_entity(x->entity)) return "entity '" + x->entity + "' is not in the graph";
        if (x->relation_paths.empty()) return "relation_paths must not be empty";
        for (const auto& text : x->relation_paths) {
            auto p = env.parse_relation_path(strip_quotes(text));
            if (!p) return "unknown relation path '" + text + "'";
            if (!in_p(state, *p)) return "relation path '" + text + "' has not been explored";
        }
        return std::nullopt;
    }
    const auto& x = std::get<SynthesizeAction>(a);
    if (x.abstain) return std::nullopt;
    if (x.answers.empty()) return "answer_entities must not be empty";
    if (x.reasoning_paths.empty()) return "explored_reasoning_paths must cite grounded evidence";
    const auto known = formatted_c(state, env);
    for (const auto& p : x.reasoning_paths)
        if (!known.contains(strip_quotes(p))) return "reasoning path '" + p + "' has not been grounded";
    return std::nullopt;
}

Execution execute_action(const Action& a, const AgentState& state, const Environment& env) {
    (void)state;
    const KnowledgeGraph& g = env.graph();
    if (const auto* x = std::get_if<ExploreAction>(&a)) {
        const EntityHandle e = *g.find_entity(x->entity);
        auto paths = env.explore(e, x->max_hops);
        std::vector<std::string> names;
        for (const auto& p : paths) names.push_back(env.format(p));
        return {{{"tool", kExploreTool}, {"entity", x->entity}, {"relation_paths", names}},
                ExploreOutcome{e, std::move(paths)}};
    }
    if (const auto* x = std::get_if<GroundAction>(&a)) {
        const EntityHandle e = *g.find_entity(x->entity);
        std::vector<RelationPath> paths;
        for (const auto& text : x->relation_paths) paths.push_back(*env.parse_relation_path(strip_quotes(text)));
        GroundResult r = env.ground(e, paths);
        std::vector<std::string> rendered, entities;
        for (const auto& p : r.paths) rendered.push_back(env.format(p));
        for (EntityHandle n : r.entities) entities.push_back(g.name(n));
        return {{{"tool", kGroundTool}, {"entity", x->entity}, {"reasoning_paths", rendered}, {"entities", entities}},
                std::move(r)};
    }
    const auto& x = std::get<SynthesizeAction>(a);
    std::vector<std::string> evidence;
    for (const auto& p : x.reasoning_paths) evidence.push_back(strip_quotes(p));
    return {{{"tool", kSynthesizeTool}, {"answers", x.answers}, {"evidence", evidence}, {"abstain", x.abstain}},
            SynthesisOutcome{}};
}

// ---- question matching -----------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        if (cur.size() > 3 && cur.back() == 's' && cur[cur.size() - 2] != 's') cur.pop_back();
        out.push_back(std::move(cur));
        cur.clear();
    };
    char prev = 0;
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (!std::isalnum(uc)) {
            flush();
        } else {
            const bool camel = std::isupper(uc) && prev && std::islower(static_cast<unsigned char>(prev));
            const bool digit_edge = prev && std::isalnum(static_cast<unsigned char>(prev)) &&
                                    (std::isdigit(uc) != 0) != (std::isdigit(static_cast<unsigned char>(prev)) != 0);
            if (camel || digit_edge) flush();
            cur.push_back(static_cast<char>(std::tolower(uc)));
        }
        prev = c;
    }
    flush();
    return out;
}

SynonymTable synonyms_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw domain_error("synonym table must be a JSON object");
    SynonymTable t;
    for (auto& [k, v] : j.items()) {
        if (!v.is_array()) throw domain_error("synonyms for '" + k + "' must be a list");
        t[k] = v.get<std::vector<std::string>>();
    }
    return t;
}

SynonymTable load_synonyms(const std::string& path) {
    try {
        return synonyms_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw domain_error("bad synonym file " + path + ": " + e.what());
    }
}

namespace {

const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "what", "who", "whom", "whose", "which", "where", "when", "why", "how", "is", "are", "was", "were",
        "be", "been", "the", "a", "an", "of", "for", "in", "on", "to", "at", "by", "from", "doe", "do", "did",
        "has", "have", "had", "with", "relation", "entity", "entitie", "subject", "object", "s", "name",
        "named", "thi", "that", "and", "or", "it", "its", "as", "there", "any", "some", "can", "you", "me", "tell"};
    return words;
}

std::set<std::string> path_tokens(const RelationPath& p, const Environment& env) {
    std::set<std::string> out;
    for (const auto& s : p.steps)
        for (auto& t : tokenize(env.step_name(s))) out.insert(std::move(t));
    return out;
}

}  // namespace

QuestionMatcher::QuestionMatcher(const std::string& question, const std::string& topic, const SynonymTable& synonyms) {
    std::set<std::string> topic_tokens;
    for (auto& t : tokenize(topic)) topic_tokens.insert(std::move(t));
    std::set<std::string> seen;
    std::vector<std::string> content;
    for (auto& t : tokenize(question))
        if (!stopwords().contains(t) && !topic_tokens.contains(t) && seen.insert(t).second) content.push_back(t);
    if (content.empty()) return;
    target_ = content.front();
    words_.assign(content.begin() + 1, content.end());
    alternatives_.push_back({target_});
    for (const auto& [key, phrases] : synonyms) {
        if (tokenize(key) != std::vector<std::string>{target_}) continue;
        for (const auto& phrase : phrases) {
            auto toks = tokenize(phrase);
            if (!toks.empty()) alternatives_.push_back(std::move(toks));
        }
    }
}

QuestionMatcher::Score QuestionMatcher::score(const RelationPath& p, const Environment& env) const {
    const auto toks = path_tokens(p, env);
    Score s;
    for (const auto& alt : alternatives_) {
        std::size_t hit = 0;
        for (const auto& t : alt) hit += toks.contains(t);
        s.coverage = std::max(s.coverage, double(hit) / double(alt.size()));
    }
    for (const auto& w : words_) s.overlap += toks.contains(w);
    return s;
}

// ---- heuristic policy ------------------------------------------------------

namespace {

struct Ranked {
    QuestionMatcher::Score score;
    std::size_t length;
    std::string text;
};

// Best first: higher coverage, higher overlap, shorter, then lexicographic.
bool better(const Ranked& a, const Ranked& b) {
    if (a.score.coverage != b.score.coverage) return a.score.coverage > b.score.coverage;
    if (a.score.overlap != b.score.overlap) return a.score.overlap > b.score.overlap;
    if (a.length != b.length) return a.length < b.length;
    return a.text < b.text;
}

bool same_tier(const Ranked& a, const Ranked& b) {
    return a.score.coverage == b.score.coverage && a.score.overlap == b.score.overlap && a.length == b.length;
}

PolicyReply reply_with(const Action& a) { return {action_to_json(a).dump(), 0, 0}; }

}  // namespace

SynthesizeAction best_overlap_answer(const AgentState& state, const Environment& env, const QuestionMatcher& m,
                                     EntityHandle topic) {
    std::vector<std::pair<Ranked, const ReasoningPath*>> ranked;
    for (const auto& c : state.C) {
        if (c.start() != topic) continue;
        const RelationPath rel = c.relation();
        ranked.push_back({{m.score(rel, env), rel.length(), env.format(c)}, &c});
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return better(a.first, b.first); });

    SynthesizeAction out;
    if (ranked.empty() || !ranked.front().first.score.positive()) {
        out.abstain = true;
        return out;
    }
    std::set<std::string> added;
    for (const auto& [r, path] : ranked) {
        if (!same_tier(r, ranked.front().first)) break;
        const std::string& end = env.graph().name(path->end());
        if (path->end() == topic) continue;
        out.reasoning_paths.push_back(r.text);
        if (added.insert(end).second) out.answers.push_back(end);
    }
    if (out.answers.empty()) {
        out.reasoning_paths.clear();
        out.abstain = true;
    }
    return out;
}

PolicyReply HeuristicPolicy::decide(const EpisodeView& view) {
    const Environment& env = view.env;
    const QAInstance& q = view.question;
    const EntityHandle topic = *env.graph().find_entity(q.topic);
    const QuestionMatcher matcher(q.question, q.topic, cfg_.synonyms);

    std::size_t hops = 0;
    bool grounded = false;
    for (const auto& step : view.history) {
        if (step.action.is_null()) continue;
        const std::string tool = step.action.value("tool", "");
        if (tool == kExploreTool) hops = std::max(hops, step.action.value("max_hops", std::size_t{0}));
        if (tool == kGroundTool) grounded = true;
    }
    if (hops == 0) return reply_with(ExploreAction{q.topic, 1});
    if (grounded) return reply_with(best_overlap_answer(view.state, env, matcher, topic));

    std::vector<Ranked> ranked;
    for (const auto& [start, path] : view.state.P)
        if (start == topic) ranked.push_back({matcher.score(path, env), path.length(), env.format(path)});
    std::sort(ranked.begin(), ranked.end(), better);

    const bool covered = !ranked.empty() && ranked.front().score.coverage >= 1.0;
    if (!covered && hops < env.config().max_hop_limit) return reply_with(ExploreAction{q.topic, hops + 1});

    GroundAction g{q.topic, {}};
    for (const auto& r : ranked) {
        if (g.relation_paths.size() >= cfg_.top_k || !r.score.positive()) break;
        g.relation_paths.push_back(r.text);
    }
    if (g.relation_paths.empty()) return reply_with(SynthesizeAction{{}, {}, true});
    return reply_with(g);
}

PolicyReply HeuristicPolicy::repair(const EpisodeView& view, const std::string& problem) {
    spdlog::debug("heuristic policy repair: {}", problem);
    return decide(view);
}

// ---- endpoint policy -------------------------------------------------------

std::string LlmPolicy::system_message() {
    std::string s(prompts::kSystemPrompt);
    s += "\n\n## Tool: ";
    s += kExploreTool;
    s += "\n";
    s += prompts::kExploreToolPrompt;
    s += "\n\n## Tool: ";
    s += kGroundTool;
    s += "\n";
    s += prompts::kGroundToolPrompt;
    s += "\n\n## Tool: ";
    s += kSynthesizeTool;
    s += "\n";
    s += prompts::kSynthesisToolPrompt;
    s += "\n\n## Reply format\n"
         "Reply with exactly one JSON object per turn naming the tool and its arguments:\n"
         "{\"tool\": \"relation_path_mining\", \"entity\": \"<entity id>\", \"max_hops\": 2}\n"
         "{\"tool\": \"path_grounding\", \"entity\": \"<entity id>\", \"relation_paths\": [\"rel1 -> rel2\"]}\n"
         "{\"tool\": \"complete_task\", \"explored_reasoning_paths\": [\"(s, p, o) ; (s, p, o)\"], "
         "\"answer_entities\": [\"<entity id>\"]}\n";
    return s;
}

std::string LlmPolicy::state_message(const EpisodeView& view, std::size_t& truncated) const {
    const Environment& env = view.env;
    std::string out;
    if (!view.history.empty()) {
        const StepRecord& last = view.history.back();
        const auto& obs = last.observation;
        const std::string tool = obs.value("tool", "");
        out += "Observation from " + tool + ":\n";
        if (tool == kExploreTool) {
            const auto paths = obs.at("relation_paths").get<std::vector<std::string>>();
            out += format_string_list(paths) + "\n";
        } else if (tool == kGroundTool) {
            const auto paths = obs.at("reasoning_paths").get<std::vector<std::string>>();
            out += fmt::format("{} grounded paths\n", paths.size());
        }
    }

    // Reasoning paths: the latest observation first, then the rest by score.
    std::vector<std::string> shown, recent;
    if (!view.history.empty() && view.history.back().observation.contains("reasoning_paths"))
        recent = view.history.back().observation.at("reasoning_paths").get<std::vector<std::string>>();
    std::set<std::string> listed;
    for (const auto& r : recent)
        if (shown.size() < cfg_.max_paths_per_message && listed.insert(r).second) shown.push_back(r);
    const QuestionMatcher matcher(view.question.question, view.question.topic, {});
    std::vector<Ranked> rest;
    for (const auto& c : view.state.C) {
        std::string text = env.format(c);
        if (listed.contains(text)) continue;
        const RelationPath rel = c.relation();
        rest.push_back({matcher.score(rel, env), rel.length(), std::move(text)});
    }
    std::sort(rest.begin(), rest.end(), better);
    for (auto& r : rest)
        if (shown.size() < cfg_.max_paths_per_message) shown.push_back(std::move(r.text));
    truncated = view.state.C.size() - std::min(view.state.C.size(), shown.size());

    std::vector<std::string> relation_paths;
    for (const auto& [start, p] : view.state.P) relation_paths.push_back(env.graph().name(start) + ": " + env.format(p));
    out += fmt::format("State: {} relation paths, {} reasoning paths, {} entities.\n", view.state.P.size(),
                       view.state.C.size(), view.state.E.size());
    out += "Relation paths: " + format_string_list(relation_paths) + "\n";
    out += "Evidence:\n";
    for (const auto& s : shown) out += "  " + s + "\n";
    if (truncated) out += fmt::format("({} further reasoning paths not shown)\n", truncated);
    return out;
}

PolicyReply LlmPolicy::ask(std::size_t truncated) {
    pending_reply_ = client_.chat(messages_);
    return {pending_reply_, 1, truncated};
}

PolicyReply LlmPolicy::decide(const EpisodeView& view) {
    std::size_t truncated = 0;
    if (messages_.empty()) {
        messages_.push_back({{"role", "system"}, {"content", system_message()}});
        messages_.push_back({{"role", "user"},
                             {"content", fmt::format("Question: {}\nTopic entity: {}\nmax_hops may be at most {}.",
                                                     view.question.question, view.question.topic,
                                                     view.env.config().max_hop_limit)}});
    } else if (view.history.size() > seen_steps_) {
        messages_.push_back({{"role", "assistant"}, {"content", pending_reply_}});
        messages_.push_back({{"role", "user"}, {"content", state_message(view, truncated)}});
    }
    seen_steps_ = view.history.size();
    return ask(truncated);
}

PolicyReply LlmPolicy::repair(const EpisodeView& view, const std::string& problem) {
    (void)view;
    messages_.push_back({{"role", "assistant"}, {"content", pending_reply_}});
    messages_.push_back(
        {{"role", "user"},
         {"content", "Your last reply was rejected: " + problem +
                         "\nReply with one JSON object of the form {\"tool\": <name>, ...arguments} using one of "
                         "relation_path_mining {entity, max_hops}, path_grounding {entity, relation_paths} or "
                         "complete_task {explored_reasoning_paths, answer_entities}."}});
    return ask(0);
}

// ---- episodes --------------------------------------------------------------

void PolicyBudget::validate() const {
    if (max_actions < 1) throw usage_error("max-actions must be >= 1");
    if (max_endpoint_calls < 1) throw usage_error("max-endpoint-calls must be >= 1");
    if (wall_clock.count() < 1) throw usage_error("time limit must be positive");
}

const char* to_string(Termination t) {
    switch (t) {
        case Termination::synthesized: return "synthesized";
        case Termination::budget_actions: return "budget_actions";
        case Termination::budget_endpoint_calls: return "budget_endpoint_calls";
        case Termination::budget_time: return "budget_time";
        case Termination::malformed_action: return "malformed_action";
        case Termination::endpoint_error: return "endpoint_error";
    }
    return "synthesized";
}

namespace {

struct Interpretation {
    std::optional<Action> action;
    std::string problem;
};

Interpretation interpret(const std::string& text, const AgentState& state, const Environment& env) {
    auto j = extract_json_object(text);
    if (!j) return {std::nullopt, "reply contains no JSON object"};
    Action a;
    try {
        a = action_from_json(*j);
    } catch (const Error& e) {
        return {std::nullopt, e.what()};
    } catch (const nlohmann::json::exception& e) {
        return {std::nullopt, e.what()};
    }
    if (auto problem = validate_action(a, state, env)) return {std::nullopt, *problem};
    return {std::move(a), {}};
}

}  // namespace

EpisodeTrace run_episode(const Environment& env, const QAInstance& question, Policy& policy,
                         const PolicyBudget& budget, const QuestionMatcher& fallback_matcher) {
    const KnowledgeGraph& g = env.graph();
    auto topic = g.find_entity(question.topic);
    if (!topic) throw domain_error("topic entity not in graph: " + question.topic);

    EpisodeTrace trace;
    trace.question_id = question.id;
    trace.topic = question.topic;
    AgentState state = initial_state(*topic);
    const auto started = std::chrono::steady_clock::now();
    std::optional<Termination> end;

    while (!end) {
        if (trace.steps.size() >= budget.max_actions) {
            end = Termination::budget_actions;
            break;
        }
        if (trace.endpoint_calls >= budget.max_endpoint_calls) {
            end = Termination::budget_endpoint_calls;
            break;
        }
        if (std::chrono::steady_clock::now() - started > budget.wall_clock) {
            end = Termination::budget_time;
            break;
        }
        StepRecord rec;
        rec.index = trace.steps.size();
        rec.state_digest = state_digest(state, env);
        const EpisodeView view{question, state, env, trace.steps};
        try {
            PolicyReply reply = policy.decide(view);
            trace.endpoint_calls += reply.endpoint_calls;
            rec.truncated = reply.truncated;
            Interpretation it = interpret(reply.text, state, env);
            if (!it.action) {
                rec.repair = it.problem;
                reply = policy.repair(view, it.problem);
                trace.endpoint_calls += reply.endpoint_calls;
                it = interpret(reply.text, state, env);
                if (!it.action) {
                    rec.observation = {{"error", it.problem}, {"reply", reply.text}};
                    trace.steps.push_back(std::move(rec));
                    trace.diagnostic = "policy output rejected twice: " + it.problem;
                    end = Termination::malformed_action;
                    break;
                }
            }
            Execution ex = execute_action(*it.action, state, env);
            rec.action = action_to_json(*it.action);
            rec.observation = std::move(ex.observation);
            state = apply_transition(std::move(state), ex.transition);
            trace.steps.push_back(std::move(rec));
            if (const auto* s = std::get_if<SynthesizeAction>(&*it.action)) {
                trace.prediction = s->answers;
                trace.supporting_paths = s->reasoning_paths;
                trace.abstain = s->abstain;
                end = Termination::synthesized;
            }
        } catch (const EndpointError& e) {
            trace.diagnostic = e.what();
            end = Termination::endpoint_error;
        }
    }

    if (*end != Termination::synthesized) {
        const SynthesizeAction fb = best_overlap_answer(state, env, fallback_matcher, *topic);
        trace.prediction = fb.answers;
        trace.supporting_paths = fb.reasoning_paths;
        trace.abstain = fb.abstain;
        trace.fallback = true;
    }
    trace.termination = *end;
    for (const auto& p : trace.prediction) {
        auto e = g.find_entity(p);
        if (!e || !state.E.contains(*e)) trace.out_of_graph.push_back(p);
    }
    return trace;
}

std::vector<EpisodeTrace> run_episodes(const Environment& env, std::span<const QAInstance> questions,
                                       const PolicyFactory& make_policy, const PolicyBudget& budget,
                                       const SynonymTable& synonyms, std::size_t parallel) {
    budget.validate();
    std::vector<EpisodeTrace> out(questions.size());
    parallel_for(questions.size(), std::max<std::size_t>(1, parallel), [&](std::size_t i) {
        auto policy = make_policy();
        const QuestionMatcher matcher(questions[i].question, questions[i].topic, synonyms);
        out[i] = run_episode(env, questions[i], *policy, budget, matcher);
    });
    return out;
}

std::string EpisodeTrace::to_jsonl() const {
    std::string out;
    for (const auto& s : steps) {
        nlohmann::json j = {{"type", "step"},
                            {"question_id", question_id},
                            {"index", s.index},
                            {"state_digest", s.state_digest},
                            {"action", s.action},
                            {"observation", s.observation},
                            {"truncated", s.truncated}};
        if (s.repair) j["repair"] = *s.repair;
        out += j.dump() + "\n";
    }
    nlohmann::json r = {{"type", "result"},
                        {"question_id", question_id},
                        {"topic", topic},
                        {"prediction", prediction},
                        {"supporting_paths", supporting_paths},
                        {"steps", steps.size()},
                        {"termination", to_string(termination)},
                        {"terminated", terminated()},
                        {"fallback", fallback},
                        {"abstain", abstain},
                        {"out_of_graph", out_of_graph},
                        {"endpoint_calls", endpoint_calls}};
    if (!diagnostic.empty()) r["diagnostic"] = diagnostic;
    return out + r.dump() + "\n";
}

nlohmann::json EpisodeTrace::prediction_json() const {
    return {{"id", question_id}, {"prediction", prediction}, {"terminated", terminated()}};
}

ReplayReport replay_traces(const Environment& env, std::span<const QAInstance> questions, const std::string& jsonl) {
    std::map<std::string, const QAInstance*> by_id;
    for (const auto& q : questions) by_id[q.id] = &q;

    ReplayReport report;
    std::string current;
    AgentState state;
    bool active = false;
    std::istringstream in(jsonl);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("bad trace record: ") + e.what());
        }
        const std::string id = j.value("question_id", "");
        const std::string type = j.value("type", "");
        auto mismatch = [&](const std::string& why) { report.mismatches.push_back(fmt::format("{} line {}: {}", id, line_no, why)); };
        if (!active || id != current) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw domain_error("trace refers to unknown question " + id);
            auto topic = env.graph().find_entity(it->second->topic);
            if (!topic) throw domain_error("topic entity not in graph: " + it->second->topic);
            state = initial_state(*topic);
            current = id;
            active = true;
            ++report.episodes;
        }
        if (type == "result") {
            active = false;
            continue;
        }
        ++report.steps;
        if (j.value("state_digest", "") != state_digest(state, env)) mismatch("state digest differs");
        if (j.at("action").is_null()) continue;
        const Action a = action_from_json(j.at("action"));
        if (auto problem = validate_action(a, state, env)) {
            mismatch("recorded action no longer valid: " + *problem);
            continue;
        }
        Execution ex = execute_action(a, state, env);
        if (ex.observation.dump() != j.at("observation").dump()) mismatch("observation differs");
        state = apply_transition(std::move(state), ex.transition);
    }
    return report;
}

}  // namespace kgqa
