#include "kgqa/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "kgqa/agent.hpp"
#include "kgqa/bench_gen.hpp"
#include "kgqa/common.hpp"
#include "kgqa/endpoint.hpp"
#include "kgqa/evaluator.hpp"
#include "kgqa/kg_store.hpp"
#include "kgqa/reasoning_env.hpp"
#include "kgqa/rule_miner.hpp"

#ifndef KGQA_DEFAULT_SYNONYMS
#define KGQA_DEFAULT_SYNONYMS ""
#endif

namespace kgqa {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct MineArgs {
    std::string kg, out = "rules.jsonl", improvement = "pca";
    double min_conf = 0.3, min_hc = 0.1, pca = 0.4;
    std::size_t max_len = 3, threads = 0;
    bool instantiated = false;
};

struct BenchArgs {
    std::string kg, rules, out, backend = "template", topic_side = "random", split_ratio = "0.8,0.1,0.1";
    double tau = 0.05;
    std::uint64_t seed = 0;
    std::size_t groundings = 30, concurrency = 4;
    std::vector<std::string> head_predicates;
};

struct EnvArgs {
    std::size_t max_hops = 3, relation_cap = 200, grounding_cap = 100;
    bool include_inverse = false;
    std::string graph = "incomplete";
};

struct RunArgs {
    std::string bundle, policy = "heuristic", split = "test", out, traces, synonyms = KGQA_DEFAULT_SYNONYMS;
    std::size_t parallel = 1, max_actions = 10, max_endpoint_calls = 50, top_k = 3, max_paths_per_message = 50;
    double time_limit = 300;
    EnvArgs env;
};

struct EvalArgs {
    std::string bundle, predictions, split = "test", out, csv;
};

struct InspectArgs {
    std::string kg, entity, out, mapping, bundle, traces;
    std::vector<std::string> paths;
    std::size_t hops = 1;
    std::uint64_t seed = 0;
    EnvArgs env;
};

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw usage_error(std::string("missing required option ") + flag);
}

std::string env_name(const std::string& option) {
    std::string out = "KGQA_";
    for (char c : option) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

// Every long option also reads KGQA_<NAME> from the environment.
void attach_env(CLI::App& app) {
    for (CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        opt->envname(env_name(name));
    }
    for (CLI::App* sub : app.get_subcommands({})) attach_env(*sub);
}

std::string config_value(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
        std::string out;
        for (const auto& item : v) {
            if (!out.empty()) out += ",";
            out += config_value(item);
        }
        return out;
    }
    return v.dump();
}

// Config-file values become option defaults, so flags and environment
// variables still take precedence.
void apply_config(CLI::App& app, const json& cfg, const json& scoped) {
    for (CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        const json* v = nullptr;
        if (scoped.is_object() && scoped.contains(name)) v = &scoped.at(name);
        else if (cfg.contains(name) && !cfg.at(name).is_object()) v = &cfg.at(name);
        if (!v) continue;
        try {
            opt->run_callback_for_default();
            opt->default_val(config_value(*v));
        } catch (const CLI::Error& e) {
            throw usage_error("config value for '" + name + "': " + e.what());
        }
    }
    for (CLI::App* sub : app.get_subcommands({})) {
        const json nested = scoped.is_object() && scoped.contains(sub->get_name()) ? scoped.at(sub->get_name())
                            : cfg.contains(sub->get_name()) ? cfg.at(sub->get_name())
                                                            : json();
        apply_config(*sub, cfg, nested);
    }
}

std::optional<std::string> find_config_path(int argc, const char* const* argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
        if (a.starts_with("--config=")) return a.substr(9);
    }
    if (const char* env = std::getenv("KGQA_CONFIG"); env && *env) return std::string(env);
    return std::nullopt;
}

std::string path_in(const std::string& dir, const char* file) { return (fs::path(dir) / file).string(); }

json file_record(const std::string& path) { return {{"path", path}, {"sha256", sha256_file(path)}}; }

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

std::array<double, 3> parse_ratio(const std::string& text) {
    std::array<double, 3> r{};
    std::stringstream ss(text);
    std::string part;
    std::size_t i = 0;
    while (std::getline(ss, part, ',')) {
        if (i >= 3) throw usage_error("split-ratio needs three comma-separated values");
        try {
            r[i++] = std::stod(part);
        } catch (const std::exception&) {
            throw usage_error("bad split-ratio value: " + part);
        }
    }
    if (i != 3) throw usage_error("split-ratio needs three comma-separated values");
    return r;
}

// ---- mine ------------------------------------------------------------------

int cmd_mine(const MineArgs& a, std::ostream& out) {
    require(a.kg, "--kg");
    MinerConfig cfg;
    cfg.min_confidence = a.min_conf;
    cfg.min_head_coverage = a.min_hc;
    cfg.pca_threshold = a.pca;
    cfg.max_rule_length = a.max_len;
    cfg.allow_instantiated_atoms = a.instantiated;
    if (a.improvement != "pca" && a.improvement != "conf") throw usage_error("improvement must be pca or conf");
    cfg.improvement_uses_pca = a.improvement == "pca";
    cfg.threads = a.threads;
    cfg.validate();

    const KnowledgeGraph g = load_graph(a.kg);
    MiningStats stats;
    const auto started = std::chrono::steady_clock::now();
    const auto rules = mine(g, cfg, &stats);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_file(a.out, rules_to_jsonl(rules, g));

    const TypeHistogram h = histogram(rules);
    out << h.table();
    write_json(a.out + ".manifest.json",
               {{"stage", "mine"},
                {"config",
                 {{"min_conf", cfg.min_confidence},
                  {"min_hc", cfg.min_head_coverage},
                  {"pca_threshold", cfg.pca_threshold},
                  {"max_len", cfg.max_rule_length},
                  {"instantiated", cfg.allow_instantiated_atoms},
                  {"improvement", a.improvement}}},
                {"inputs", {{"kg", file_record(a.kg)}}},
                {"outputs", {{"rules", file_record(a.out)}, {"count", rules.size()}}},
                {"histogram", h.to_json()},
                {"search", {{"dequeued", stats.dequeued}, {"candidates", stats.candidates}, {"enqueued", stats.enqueued}}},
                {"seconds", seconds}});
    return kExitOk;
}

// ---- bench -----------------------------------------------------------------

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    require(a.kg, "--kg");
    require(a.rules, "--rules");
    require(a.out, "--out");
    GenConfig cfg;
    cfg.groundings_per_rule = a.groundings;
    cfg.tau = a.tau;
    cfg.split_ratio = parse_ratio(a.split_ratio);
    cfg.seed = a.seed;
    cfg.backend = parse_backend(a.backend);
    cfg.topic_side = parse_topic_side(a.topic_side);
    cfg.concurrency = a.concurrency;
    cfg.validate();

    std::unique_ptr<HttpChatClient> client;
    if (cfg.backend == QuestionBackend::external) {
        auto endpoint = EndpointConfig::from_env();
        if (!endpoint) throw usage_error(std::string("external question backend needs ") + kEndpointUrlEnv);
        client = std::make_unique<HttpChatClient>(*endpoint);
    }

    const KnowledgeGraph complete = load_graph(a.kg);
    std::vector<MinedRule> all = rules_from_jsonl(read_file(a.rules), complete);
    std::vector<NamedRule> named = name_rules(std::move(all));
    if (!a.head_predicates.empty()) {
        const std::set<std::string> keep(a.head_predicates.begin(), a.head_predicates.end());
        std::erase_if(named, [&](const NamedRule& r) { return !keep.contains(complete.name(r.mined.rule.head.predicate)); });
    }

    BenchmarkResult result = plan_benchmark(complete, named, cfg);
    write_removal_artifacts(a.out, complete, result, named);

    std::unique_ptr<QuestionGenerator> gen;
    if (client) gen = std::make_unique<EndpointQuestionGenerator>(*client);
    else gen = std::make_unique<TemplateQuestionGenerator>();
    finish_benchmark(result, complete, *gen, cfg);

    const auto problems = verify_answerability(complete, result.incomplete, named, result.questions);
    if (!problems.empty())
        throw domain_error(fmt::format("{} questions fail the answerability check, first: {}", problems.size(), problems[0]));
    write_question_artifacts(a.out, result);

    std::map<std::string, std::size_t> split_sizes{{"train", 0}, {"val", 0}, {"test", 0}};
    std::size_t fallbacks = 0;
    for (const auto& q : result.questions) ++split_sizes[to_string(q.split)];
    for (const auto& p : result.provenance) fallbacks += p.value("fallback", false);
    std::vector<MinedRule> used;
    for (const auto& r : named) used.push_back(r.mined);

    json files = json::object();
    for (const char* f : {bundle::complete, bundle::incomplete, bundle::removals, bundle::questions, bundle::rules,
                          bundle::provenance})
        files[f] = sha256_file(path_in(a.out, f));
    json cfg_json = cfg.to_json();
    cfg_json["head_predicates"] = a.head_predicates;
    write_json(path_in(a.out, bundle::manifest),
               {{"stage", "bench"},
                {"config", cfg_json},
                {"seeds", {{"seed", cfg.seed}}},
                {"inputs", {{"kg", file_record(a.kg)}, {"rules", file_record(a.rules)}}},
                {"files", files},
                {"counts",
                 {{"complete_triples", complete.size()},
                  {"incomplete_triples", result.incomplete.size()},
                  {"removed", result.plan.entries.size()},
                  {"rules", named.size()},
                  {"rules_without_entries", result.plan.rules_without_entries.size()},
                  {"questions_generated", result.generated},
                  {"questions", result.questions.size()},
                  {"duplicate_topic_predicate", result.duplicate_topic_predicate},
                  {"template_fallbacks", fallbacks},
                  {"splits", split_sizes}}},
                {"rule_type_histogram", histogram(used).to_json()},
                {"answerability", {{"checked", result.questions.size()}, {"violations", 0}}}});
    out << fmt::format("removed {} triples; {} questions (train {}, val {}, test {})\n", result.plan.entries.size(),
                       result.questions.size(), split_sizes["train"], split_sizes["val"], split_sizes["test"]);
    return kExitOk;
}

// ---- run -------------------------------------------------------------------

EnvConfig env_config(const EnvArgs& a) {
    EnvConfig cfg;
    cfg.max_hop_limit = a.max_hops;
    cfg.max_relation_paths = a.relation_cap == 0 ? EnvConfig::unlimited : a.relation_cap;
    cfg.max_groundings_per_path = a.grounding_cap == 0 ? EnvConfig::unlimited : a.grounding_cap;
    cfg.include_inverse = a.include_inverse;
    cfg.validate();
    return cfg;
}

json env_json(const EnvArgs& a) {
    return {{"max_hops", a.max_hops},
            {"relation_cap", a.relation_cap},
            {"grounding_cap", a.grounding_cap},
            {"include_inverse", a.include_inverse},
            {"graph", a.graph}};
}

const KnowledgeGraph& pick_graph(const Bundle& b, const std::string& which) {
    if (which == "incomplete") return b.incomplete;
    if (which == "complete") return b.complete;
    throw usage_error("graph must be incomplete or complete");
}

std::vector<QAInstance> select_split(const std::vector<QAInstance>& qs, const std::string& split) {
    if (split == "all") return qs;
    const Split s = [&] {
        try {
            return parse_split(split);
        } catch (const Error&) {
            throw usage_error("split must be train, val, test or all");
        }
    }();
    std::vector<QAInstance> out;
    std::copy_if(qs.begin(), qs.end(), std::back_inserter(out), [&](const QAInstance& q) { return q.split == s; });
    return out;
}

SynonymTable synonyms_for(const std::string& path) {
    if (path.empty()) return {};
    if (!fs::exists(path)) {
        spdlog::warn("synonym file {} not found; matching without synonyms", path);
        return {};
    }
    return load_synonyms(path);
}

int cmd_run(const RunArgs& a, std::ostream& out) {
    require(a.bundle, "--bundle");
    if (a.policy != "heuristic" && a.policy != "llm") throw usage_error("policy must be heuristic or llm");
    std::unique_ptr<HttpChatClient> client;
    if (a.policy == "llm") {
        auto endpoint = EndpointConfig::from_env();
        if (!endpoint) throw usage_error(std::string("llm policy needs ") + kEndpointUrlEnv);
        client = std::make_unique<HttpChatClient>(*endpoint);
    }
    PolicyBudget budget;
    budget.max_actions = a.max_actions;
    budget.max_endpoint_calls = a.max_endpoint_calls;
    if (!(a.time_limit > 0)) throw usage_error("time-limit must be positive");
    budget.wall_clock = std::chrono::milliseconds(static_cast<long long>(a.time_limit * 1000));
    budget.validate();
    const EnvConfig ecfg = env_config(a.env);

    const Bundle b = load_bundle(a.bundle);
    const KnowledgeGraph& g = pick_graph(b, a.env.graph);
    const std::vector<QAInstance> questions = select_split(b.questions, a.split);
    const SynonymTable synonyms = synonyms_for(a.synonyms);
    const Environment env(g, ecfg);

    PolicyFactory factory;
    if (client) {
        LlmPolicyConfig lcfg;
        lcfg.max_paths_per_message = a.max_paths_per_message;
        factory = [&client, lcfg] { return std::make_unique<LlmPolicy>(*client, lcfg); };
    } else {
        HeuristicConfig hcfg{a.top_k, synonyms};
        factory = [hcfg] { return std::make_unique<HeuristicPolicy>(hcfg); };
    }
    const auto traces = run_episodes(env, questions, factory, budget, synonyms, a.parallel);

    const std::string preds_path = a.out.empty() ? path_in(a.bundle, ("predictions." + a.split + ".jsonl").c_str()) : a.out;
    const std::string traces_path = a.traces.empty() ? preds_path + ".traces.jsonl" : a.traces;
    std::string preds, trace_text;
    std::map<std::string, std::size_t> terminations;
    for (const auto& t : traces) {
        preds += t.prediction_json().dump() + "\n";
        trace_text += t.to_jsonl();
        ++terminations[to_string(t.termination)];
    }
    write_file(preds_path, preds);
    write_file(traces_path, trace_text);
    write_json(preds_path + ".manifest.json",
               {{"stage", "run"},
                {"config",
                 {{"policy", a.policy},
                  {"split", a.split},
                  {"parallel", a.parallel},
                  {"max_actions", a.max_actions},
                  {"max_endpoint_calls", a.max_endpoint_calls},
                  {"time_limit_s", a.time_limit},
                  {"top_k", a.top_k},
                  {"synonyms", a.synonyms},
                  {"env", env_json(a.env)}}},
                {"inputs",
                 {{"questions", file_record(path_in(a.bundle, bundle::questions))},
                  {"graph", file_record(path_in(a.bundle, a.env.graph == "complete" ? bundle::complete : bundle::incomplete))}}},
                {"outputs", {{"predictions", preds_path}, {"traces", traces_path}, {"count", traces.size()}}},
                {"terminations", terminations}});
    out << fmt::format("{} episodes written to {}\n", traces.size(), preds_path);
    return kExitOk;
}

// ---- eval ------------------------------------------------------------------

std::vector<PredictionRecord> load_predictions(const std::string& path) {
    std::vector<PredictionRecord> preds;
    std::istringstream in(read_file(path));
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            PredictionRecord r;
            r.id = j.at("id").get<std::string>();
            const json& p = j.at("prediction");
            if (p.is_string()) r.output = p.get<std::string>();
            else r.output = p.get<std::vector<std::string>>();
            preds.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(line_no, std::string("bad prediction record: ") + e.what());
        }
    }
    return preds;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    require(a.bundle, "--bundle");
    require(a.predictions, "--predictions");
    const auto questions = select_split(questions_from_jsonl(read_file(path_in(a.bundle, bundle::questions))), a.split);
    std::vector<GoldRecord> gold;
    for (const auto& q : questions) gold.push_back({q.id, q.answers, q.hard_answer});
    const auto preds = load_predictions(a.predictions);
    const MetricsReport report = compute_report(gold, preds);
    if (!report.missing_ids.empty()) spdlog::warn("{} questions have no prediction", report.missing_ids.size());

    json j = report.to_json();
    j["stage"] = "eval";
    j["split"] = a.split;
    j["inputs"] = {{"questions", file_record(path_in(a.bundle, bundle::questions))},
                   {"predictions", file_record(a.predictions)}};
    const std::string report_path = a.out.empty() ? a.predictions + ".report.json" : a.out;
    write_json(report_path, j);
    if (!a.csv.empty()) write_file(a.csv, report.to_csv());
    out << fmt::format("hits_any {:.4f}  precision {:.4f}  recall {:.4f}  f1 {:.4f}  hits_hard {:.4f}  hhr {:.4f}\n",
                       report.hits_any, report.precision, report.recall, report.f1, report.hits_hard, report.hhr);
    return kExitOk;
}

// ---- inspect ---------------------------------------------------------------

int cmd_stats(const InspectArgs& a, std::ostream& out) {
    require(a.kg, "--kg");
    LoadStats stats;
    const KnowledgeGraph g = load_graph(a.kg, &stats);
    out << json{{"triples", g.size()},
                {"entities", g.entity_count()},
                {"predicates", g.predicate_count()},
                {"lines", stats.lines},
                {"duplicates", stats.duplicates}}
               .dump(2)
        << "\n";
    return kExitOk;
}

int cmd_explore(const InspectArgs& a, std::ostream& out) {
    require(a.kg, "--kg");
    require(a.entity, "--entity");
    const KnowledgeGraph g = load_graph(a.kg);
    const Environment env(g, env_config(a.env));
    std::vector<std::string> paths;
    for (const auto& p : env.explore(a.entity, a.hops)) paths.push_back(env.format(p));
    out << format_string_list(paths) << "\n";
    return kExitOk;
}

int cmd_ground(const InspectArgs& a, std::ostream& out) {
    require(a.kg, "--kg");
    require(a.entity, "--entity");
    if (a.paths.empty()) throw usage_error("missing required option --path");
    const KnowledgeGraph g = load_graph(a.kg);
    const Environment env(g, env_config(a.env));
    auto e = g.find_entity(a.entity);
    if (!e) throw domain_error("entity not in graph: " + a.entity);
    std::vector<RelationPath> paths;
    for (const auto& text : a.paths) {
        auto p = env.parse_relation_path(text);
        if (!p) throw domain_error("unknown relation path: " + text);
        paths.push_back(*p);
    }
    const GroundResult r = env.ground(*e, paths);
    for (const auto& p : r.paths) out << env.format(p) << "\n";
    std::vector<std::string> entities;
    for (EntityHandle n : r.entities) entities.push_back(g.name(n));
    out << "entities: " << format_string_list(entities) << "\n";
    return kExitOk;
}

int cmd_anonymize(const InspectArgs& a, std::ostream& out) {
    require(a.kg, "--kg");
    require(a.out, "--out");
    const KnowledgeGraph g = load_graph(a.kg);
    const Anonymization anon = anonymize(g, a.seed);
    save_graph(anon.graph, a.out);
    const std::string mapping = a.mapping.empty() ? a.out + ".mapping.json" : a.mapping;
    write_json(mapping, mapping_to_json(anon.mapping));
    out << fmt::format("anonymized {} entities\n", anon.mapping.size());
    return kExitOk;
}

int cmd_verify(const InspectArgs& a, std::ostream& out) {
    require(a.bundle, "--bundle");
    const Bundle b = load_bundle(a.bundle);
    const auto problems = verify_answerability(b.complete, b.incomplete, b.rules, b.questions);
    for (const auto& p : problems) out << p << "\n";
    out << fmt::format("{} of {} questions answerable\n", b.questions.size() - std::min(b.questions.size(), problems.size()),
                       b.questions.size());
    if (!problems.empty()) throw domain_error(fmt::format("{} answerability violations", problems.size()));
    return kExitOk;
}

int cmd_replay(const InspectArgs& a, std::ostream& out) {
    require(a.bundle, "--bundle");
    require(a.traces, "--traces");
    const Bundle b = load_bundle(a.bundle);
    const Environment env(pick_graph(b, a.env.graph), env_config(a.env));
    const ReplayReport r = replay_traces(env, b.questions, read_file(a.traces));
    for (const auto& m : r.mismatches) out << m << "\n";
    out << fmt::format("replayed {} episodes, {} steps, {} mismatches\n", r.episodes, r.steps, r.mismatches.size());
    if (!r.ok()) throw domain_error(fmt::format("{} replay mismatches", r.mismatches.size()));
    return kExitOk;
}

void add_env_options(CLI::App* app, EnvArgs& e) {
    app->add_option("--max-hops", e.max_hops, "Hop limit H");
    app->add_option("--relation-cap", e.relation_cap, "Relation paths per explore (0 = unlimited)");
    app->add_option("--grounding-cap", e.grounding_cap, "Groundings per relation path (0 = unlimited)");
    app->add_flag("--include-inverse", e.include_inverse, "Allow backward hops as inv_<p>");
    app->add_option("--graph", e.graph, "Graph to reason over: incomplete | complete");
}

spdlog::level::level_enum parse_level(const std::string& s) {
    const auto lvl = spdlog::level::from_str(s);
    if (lvl == spdlog::level::off && s != "off") throw usage_error("unknown log level: " + s);
    return lvl;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge-graph QA benchmark toolkit", "kgqa"};
    app.require_subcommand(1);
    std::string config_path, log_level = "info";
    app.add_option("--config", config_path, "JSON config file (flags and KGQA_* variables take precedence)");
    app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off");

    MineArgs mine_args;
    auto* mine_cmd = app.add_subcommand("mine", "Mine Horn rules from a TSV graph");
    mine_cmd->add_option("--kg", mine_args.kg, "Triple file (subject<TAB>predicate<TAB>object)");
    mine_cmd->add_option("--out", mine_args.out, "Rules output (JSON lines)");
    mine_cmd->add_option("--min-conf", mine_args.min_conf, "Minimum standard confidence");
    mine_cmd->add_option("--min-hc", mine_args.min_hc, "Minimum head coverage");
    mine_cmd->add_option("--pca", mine_args.pca, "Minimum PCA confidence");
    mine_cmd->add_option("--max-len", mine_args.max_len, "Maximum rule length, head included");
    mine_cmd->add_flag("--instantiated", mine_args.instantiated, "Allow atoms with constants");
    mine_cmd->add_option("--improvement", mine_args.improvement, "Improvement check metric: pca | conf");
    mine_cmd->add_option("--threads", mine_args.threads, "Worker threads (0 = all cores)");

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "Build an incompleteness benchmark bundle");
    bench_cmd->add_option("--kg", bench_args.kg, "Complete graph (TSV)");
    bench_cmd->add_option("--rules", bench_args.rules, "Rules mined from the same graph");
    bench_cmd->add_option("--out", bench_args.out, "Bundle directory");
    bench_cmd->add_option("--tau", bench_args.tau, "Downsampling threshold");
    bench_cmd->add_option("--seed", bench_args.seed, "Seed for sampling, topic sides, downsampling and splits");
    bench_cmd->add_option("--groundings-per-rule", bench_args.groundings, "Heads sampled per rule");
    bench_cmd->add_option("--question-backend", bench_args.backend, "template | external");
    bench_cmd->add_option("--topic-side", bench_args.topic_side, "random | subject | object");
    bench_cmd->add_option("--split-ratio", bench_args.split_ratio, "train,val,test");
    bench_cmd->add_option("--head-predicate", bench_args.head_predicates, "Only use rules with this head")
        ->delimiter(',');
    bench_cmd->add_option("--concurrency", bench_args.concurrency, "Endpoint requests in flight");

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Answer benchmark questions with a policy");
    run_cmd->add_option("--bundle", run_args.bundle, "Bundle directory");
    run_cmd->add_option("--policy", run_args.policy, "heuristic | llm");
    run_cmd->add_option("--split", run_args.split, "train | val | test | all");
    run_cmd->add_option("--out", run_args.out, "Predictions file");
    run_cmd->add_option("--traces", run_args.traces, "Trace file");
    run_cmd->add_option("--parallel", run_args.parallel, "Concurrent episodes");
    run_cmd->add_option("--max-actions", run_args.max_actions, "Actions per episode");
    run_cmd->add_option("--max-endpoint-calls", run_args.max_endpoint_calls, "Endpoint calls per episode");
    run_cmd->add_option("--time-limit", run_args.time_limit, "Seconds per episode");
    run_cmd->add_option("--top-k", run_args.top_k, "Relation paths the heuristic grounds");
    run_cmd->add_option("--synonyms", run_args.synonyms, "Predicate synonym table (JSON)");
    run_cmd->add_option("--max-paths-per-message", run_args.max_paths_per_message, "Reasoning paths shown per turn");
    add_env_options(run_cmd, run_args.env);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against a bundle");
    eval_cmd->add_option("--bundle", eval_args.bundle, "Bundle directory");
    eval_cmd->add_option("--predictions", eval_args.predictions, "Predictions (JSON lines)");
    eval_cmd->add_option("--split", eval_args.split, "train | val | test | all");
    eval_cmd->add_option("--out", eval_args.out, "Report path");
    eval_cmd->add_option("--csv", eval_args.csv, "Per-question CSV path");

    InspectArgs ins;
    auto* inspect_cmd = app.add_subcommand("inspect", "Inspection utilities");
    inspect_cmd->require_subcommand(1);
    auto* stats_cmd = inspect_cmd->add_subcommand("stats", "Graph statistics");
    stats_cmd->add_option("--kg", ins.kg, "Triple file");
    auto* explore_cmd = inspect_cmd->add_subcommand("explore", "Relation paths from an entity");
    explore_cmd->add_option("--kg", ins.kg, "Triple file");
    explore_cmd->add_option("--entity", ins.entity, "Start entity");
    explore_cmd->add_option("--hops", ins.hops, "Hop limit");
    add_env_options(explore_cmd, ins.env);
    auto* ground_cmd = inspect_cmd->add_subcommand("ground", "Reasoning paths for relation paths");
    ground_cmd->add_option("--kg", ins.kg, "Triple file");
    ground_cmd->add_option("--entity", ins.entity, "Start entity");
    ground_cmd->add_option("--path", ins.paths, "Relation path, e.g. 'a -> b' (repeatable)");
    add_env_options(ground_cmd, ins.env);
    auto* anon_cmd = inspect_cmd->add_subcommand("anonymize", "Replace entity ids by seeded indices");
    anon_cmd->add_option("--kg", ins.kg, "Triple file");
    anon_cmd->add_option("--out", ins.out, "Anonymized triple file");
    anon_cmd->add_option("--mapping", ins.mapping, "Mapping output (JSON)");
    anon_cmd->add_option("--seed", ins.seed, "Permutation seed");
    auto* verify_cmd = inspect_cmd->add_subcommand("verify", "Answerability check of a bundle");
    verify_cmd->add_option("--bundle", ins.bundle, "Bundle directory");
    auto* replay_cmd = inspect_cmd->add_subcommand("replay", "Re-execute traces and compare observations");
    replay_cmd->add_option("--bundle", ins.bundle, "Bundle directory");
    replay_cmd->add_option("--traces", ins.traces, "Trace file");
    add_env_options(replay_cmd, ins.env);

    attach_env(app);

    try {
        if (auto cfg_path = find_config_path(argc, argv)) {
            json cfg;
            try {
                cfg = json::parse(read_file(*cfg_path));
            } catch (const json::exception& e) {
                throw usage_error("bad config file " + *cfg_path + ": " + e.what());
            }
            if (!cfg.is_object()) throw usage_error("config file must hold a JSON object");
            apply_config(app, cfg, json());
        }
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return kExitOk;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return kExitOk;
        } catch (const CLI::ParseError& e) {
            throw usage_error(e.what());
        }

        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
        auto logger = std::make_shared<spdlog::logger>("kgqa", sink);
        logger->set_pattern("[%l] %v");
        logger->set_level(parse_level(log_level));
        auto previous = spdlog::default_logger();
        spdlog::set_default_logger(logger);
        struct Restore {
            std::shared_ptr<spdlog::logger> p;
            ~Restore() { spdlog::set_default_logger(p); }
        } restore{previous};

        if (mine_cmd->parsed()) return cmd_mine(mine_args, out);
        if (bench_cmd->parsed()) return cmd_bench(bench_args, out);
        if (run_cmd->parsed()) return cmd_run(run_args, out);
        if (eval_cmd->parsed()) return cmd_eval(eval_args, out);
        if (stats_cmd->parsed()) return cmd_stats(ins, out);
        if (explore_cmd->parsed()) return cmd_explore(ins, out);
        if (ground_cmd->parsed()) return cmd_ground(ins, out);
        if (anon_cmd->parsed()) return cmd_anonymize(ins, out);
        if (verify_cmd->parsed()) return cmd_verify(ins, out);
        if (replay_cmd->parsed()) return cmd_replay(ins, out);
        throw usage_error("no subcommand");
    } catch (const Error& e) {
        const bool usage = e.kind() == ErrorKind::usage;
        const char* kind = usage ? "usage" : e.kind() == ErrorKind::parse ? "parse" : e.kind() == ErrorKind::endpoint ? "endpoint" : "domain";
        err << "error: " << kind << ": " << one_line(e.what()) << "\n";
        return usage ? kExitUsage : kExitDomain;
    } catch (const std::exception& e) {
        err << "error: domain: " << one_line(e.what()) << "\n";
        return kExitDomain;
    }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"kgqa"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace kgqa
