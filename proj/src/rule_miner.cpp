#include "kgqa/rule_miner.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "kgqa/common.hpp"

namespace kgqa {

void MinerConfig::validate() const {
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!in_unit(min_confidence)) throw usage_error("min-conf must be in (0, 1]");
    if (!in_unit(min_head_coverage)) throw usage_error("min-hc must be in (0, 1]");
    if (!in_unit(pca_threshold)) throw usage_error("pca threshold must be in (0, 1]");
    if (max_rule_length < 2) throw usage_error("max-len must be >= 2");
}

std::vector<HornRule> refine(const HornRule& rule, const KnowledgeGraph& g, const MinerConfig& cfg) {
    std::vector<HornRule> out;
    if (rule.length() >= cfg.max_rule_length) return out;

    const std::uint32_t n = rule.variable_count();
    std::set<Atom> present(rule.body.begin(), rule.body.end());
    present.insert(rule.head);
    std::unordered_set<std::string> keys;

    auto emit = [&](const Atom& atom) {
        if (present.contains(atom)) return;
        HornRule next = rule;
        next.body.push_back(atom);
        next = canonicalize(next);
        if (keys.insert(canonical_key(next)).second) out.push_back(std::move(next));
    };

    for (std::uint32_t pi = 0; pi < g.predicate_count(); ++pi) {
        const PredicateHandle p{pi};
        // dangling: one existing variable plus a fresh one
        for (std::uint32_t v = 0; v < n; ++v) {
            emit({p, Term::var(v), Term::var(n)});
            emit({p, Term::var(n), Term::var(v)});
        }
        // closing: two existing variables
        for (std::uint32_t a = 0; a < n; ++a)
            for (std::uint32_t b = 0; b < n; ++b)
                if (a != b) emit({p, Term::var(a), Term::var(b)});
        // instantiated: an existing variable plus a constant
        if (cfg.allow_instantiated_atoms) {
            for (std::uint32_t v = 0; v < n; ++v) {
                for (EntityHandle c : g.object_domain(p)) emit({p, Term::var(v), Term::constant(c)});
                for (EntityHandle c : g.subject_domain(p)) emit({p, Term::constant(c), Term::var(v)});
            }
        }
    }
    return out;
}

namespace {

struct Candidate {
    HornRule rule;
    std::string key;
    RuleMetrics metrics;
};

double improvement_metric(const RuleMetrics& m, const MinerConfig& cfg) {
    return cfg.improvement_uses_pca ? m.pca_confidence : m.confidence;
}

// Canonical keys of every proper, non-empty sub-body with the same head.
std::vector<std::string> sub_rule_keys(const HornRule& rule) {
    std::vector<std::string> keys;
    const std::size_t n = rule.body.size();
    for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << n); ++mask) {
        HornRule sub;
        sub.head = rule.head;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1) sub.body.push_back(rule.body[i]);
        keys.push_back(canonical_key(canonicalize(sub)));
    }
    return keys;
}

std::string body_text(const HornRule& rule, const KnowledgeGraph& g) { return format_rule(rule, g); }

}  // namespace

std::vector<MinedRule> mine(const KnowledgeGraph& g, const MinerConfig& cfg, MiningStats* stats) {
    cfg.validate();
    if (g.empty()) throw domain_error("empty graph");
    MiningStats local;

    std::vector<Candidate> level;
    std::unordered_set<std::string> seen;
    for (std::uint32_t pi = 0; pi < g.predicate_count(); ++pi) {
        HornRule r = head_only(PredicateHandle{pi});
        std::string key = canonical_key(r);
        seen.insert(key);
        level.push_back({std::move(r), std::move(key), {}});
    }
    parallel_for(level.size(), cfg.threads, [&](std::size_t i) { level[i].metrics = compute_metrics(g, level[i].rule); });

    std::unordered_map<std::string, RuleMetrics> accepted;  // rules meeting the output criteria
    std::vector<MinedRule> output;

    while (!level.empty()) {
        std::vector<Candidate> next;
        for (const Candidate& c : level) {
            ++local.dequeued;
            const HornRule& rule = c.rule;
            const RuleMetrics& m = c.metrics;

            bool criteria = !rule.body.empty() && check_rule_shape(rule).all() && m.pca_confidence >= cfg.pca_threshold;
            if (criteria) {
                const double own = improvement_metric(m, cfg);
                for (const auto& key : sub_rule_keys(rule)) {
                    auto it = accepted.find(key);
                    if (it != accepted.end() && !(own > improvement_metric(it->second, cfg))) {
                        criteria = false;
                        break;
                    }
                }
            }
            if (criteria) {
                accepted.emplace(c.key, m);
                if (m.confidence >= cfg.min_confidence && m.head_coverage >= cfg.min_head_coverage)
                    output.push_back({rule, m, classify_rule(rule)});
            }

            if (rule.length() < cfg.max_rule_length && m.pca_confidence < 1.0) {
                for (HornRule& r : refine(rule, g, cfg)) {
                    ++local.candidates;
                    std::string key = canonical_key(r);
                    if (!seen.insert(key).second) continue;
                    // Rules that can no longer become closed within the length budget
                    // are never output and have no output descendants.
                    const std::size_t remaining = cfg.max_rule_length - r.length();
                    if (open_variable_count(r) > 2 * remaining) continue;
                    next.push_back({std::move(r), std::move(key), {}});
                }
            }
        }
        parallel_for(next.size(), cfg.threads, [&](std::size_t i) { next[i].metrics = compute_metrics(g, next[i].rule); });
        std::erase_if(next, [&](const Candidate& c) { return c.metrics.head_coverage < cfg.min_head_coverage; });
        local.enqueued += next.size();
        level = std::move(next);
    }

    std::vector<std::pair<std::string, std::size_t>> order;
    order.reserve(output.size());
    for (std::size_t i = 0; i < output.size(); ++i) order.emplace_back(body_text(output[i].rule, g), i);
    std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
        const auto& ra = output[a.second].rule;
        const auto& rb = output[b.second].rule;
        if (ra.head.predicate != rb.head.predicate) return ra.head.predicate < rb.head.predicate;
        if (ra.length() != rb.length()) return ra.length() < rb.length();
        return a.first < b.first;
    });
    std::vector<MinedRule> sorted;
    sorted.reserve(output.size());
    for (const auto& [text, i] : order) sorted.push_back(std::move(output[i]));

    spdlog::info("mined {} rules ({} dequeued, {} candidates)", sorted.size(), local.dequeued, local.candidates);
    if (stats) *stats = local;
    return sorted;
}

nlohmann::json rule_to_json(const MinedRule& r, const KnowledgeGraph& g) {
    nlohmann::json body = nlohmann::json::array();
    for (const auto& a : r.rule.body) body.push_back(atom_to_json(a, g));
    return {{"head", atom_to_json(r.rule.head, g)},
            {"body", body},
            {"metrics",
             {{"support", r.metrics.support},
              {"hc", r.metrics.head_coverage},
              {"conf", r.metrics.confidence},
              {"pca_conf", r.metrics.pca_confidence}}},
            {"type", to_string(r.type)}};
}

MinedRule mined_rule_from_json(const nlohmann::json& j, const KnowledgeGraph& g) {
    MinedRule r;
    r.rule = rule_from_json(j, g);
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        r.metrics.support = m.value("support", std::size_t{0});
        r.metrics.head_coverage = m.value("hc", 0.0);
        r.metrics.confidence = m.value("conf", 0.0);
        r.metrics.pca_confidence = m.value("pca_conf", 0.0);
    }
    r.type = classify_rule(r.rule);
    return r;
}

std::string rules_to_jsonl(const std::vector<MinedRule>& rules, const KnowledgeGraph& g) {
    std::string out;
    for (const auto& r : rules) {
        out += rule_to_json(r, g).dump();
        out += '\n';
    }
    return out;
}

std::vector<MinedRule> rules_from_jsonl(const std::string& text, const KnowledgeGraph& g) {
    std::vector<MinedRule> rules;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            rules.push_back(mined_rule_from_json(nlohmann::json::parse(line), g));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("bad rule record: ") + e.what());
        }
    }
    return rules;
}

void TypeHistogram::add(RuleType t) {
    switch (t) {
        case RuleType::symmetry: ++symmetry; break;
        case RuleType::inversion: ++inversion; break;
        case RuleType::hierarchy: ++hierarchy; break;
        case RuleType::composition: ++composition; break;
        case RuleType::other: ++other; break;
    }
}

nlohmann::json TypeHistogram::to_json() const {
    return {{"symmetry", symmetry}, {"inversion", inversion}, {"hierarchy", hierarchy},
            {"composition", composition}, {"other", other}, {"total", total()}};
}

std::string TypeHistogram::table() const {
    std::ostringstream os;
    auto row = [&](const char* name, std::size_t n) { os << name << ": " << n << '\n'; };
    row("symmetry", symmetry);
    row("inversion", inversion);
    row("hierarchy", hierarchy);
    row("composition", composition);
    row("other", other);
    row("total", total());
    return os.str();
}

TypeHistogram histogram(const std::vector<MinedRule>& rules) {
    TypeHistogram h;
    for (const auto& r : rules) h.add(r.type);
    return h;
}

}  // namespace kgqa
