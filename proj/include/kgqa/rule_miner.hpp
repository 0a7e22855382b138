#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgqa/kg_store.hpp"
#include "kgqa/rule.hpp"
#include "kgqa/rule_eval.hpp"

namespace kgqa {

struct MinerConfig {
    double min_confidence = 0.3;
    double min_head_coverage = 0.1;
    double pca_threshold = 0.4;
    std::size_t max_rule_length = 4;  // atoms, head included
    bool allow_instantiated_atoms = false;
    /// The improvement criterion compares against already-mined sub-rules
    /// using PCA confidence (default) or standard confidence.
    bool improvement_uses_pca = true;
    std::size_t threads = 0;  // 0 = hardware concurrency

    /// Throws a usage error when a threshold is outside (0, 1] or the length < 2.
    void validate() const;
};

struct MinedRule {
    HornRule rule;
    RuleMetrics metrics;
    RuleType type = RuleType::other;
};

/// Candidates one atom longer than `rule`, canonical and deduplicated.
/// Empty when the rule is already at the maximum length.
std::vector<HornRule> refine(const HornRule& rule, const KnowledgeGraph& g, const MinerConfig& cfg);

struct MiningStats {
    std::size_t dequeued = 0;
    std::size_t candidates = 0;
    std::size_t enqueued = 0;
};

/// Breadth-first rule search. Output sorted by head predicate, length, then
/// canonical body.
std::vector<MinedRule> mine(const KnowledgeGraph& g, const MinerConfig& cfg, MiningStats* stats = nullptr);

nlohmann::json rule_to_json(const MinedRule& r, const KnowledgeGraph& g);
MinedRule mined_rule_from_json(const nlohmann::json& j, const KnowledgeGraph& g);

/// JSON lines, one rule per line.
std::string rules_to_jsonl(const std::vector<MinedRule>& rules, const KnowledgeGraph& g);
std::vector<MinedRule> rules_from_jsonl(const std::string& text, const KnowledgeGraph& g);

struct TypeHistogram {
    std::size_t symmetry = 0, inversion = 0, hierarchy = 0, composition = 0, other = 0;
    std::size_t total() const { return symmetry + inversion + hierarchy + composition + other; }
    void add(RuleType t);
    nlohmann::json to_json() const;
    std::string table() const;
};

TypeHistogram histogram(const std::vector<MinedRule>& rules);

}  // namespace kgqa
