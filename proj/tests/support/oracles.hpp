#pragma once

// Brute-force reference implementations used only by the tests. They share no
// code with the library beyond the plain data types.

#include <set>
#include <string>
#include <vector>

#include "kgqa/kg_store.hpp"
#include "kgqa/reasoning_env.hpp"
#include "kgqa/rule.hpp"
#include "kgqa/rule_eval.hpp"

namespace oracle {

struct QuestionMetrics {
    double precision = 0, recall = 0, f1 = 0;
    bool hit_any = false, hit_hard = false;
};

QuestionMetrics score(const std::set<std::string>& gold, const std::string& hard, const std::set<std::string>& pred);

struct Totals {
    double hits_any = 0, precision = 0, recall = 0, f1 = 0, hits_hard = 0, hhr = 0;
};

Totals macro(const std::vector<QuestionMetrics>& rows);

// Counts by trying every assignment of every variable over every entity.
kgqa::RuleMetrics rule_metrics(const kgqa::KnowledgeGraph& g, const kgqa::HornRule& rule);

// Every closed, connected, safe variable-only rule with at most `max_len`
// atoms over the graph's predicates, one per canonical form.
std::vector<kgqa::HornRule> all_valid_rules(const kgqa::KnowledgeGraph& g, std::size_t max_len);

struct Walk {
    std::vector<std::string> steps;  // step names, "inv_" prefix for backward hops
    std::vector<kgqa::Triple> triples;
    std::string end;
};

// Walks of length 1..hops from `start`, found by scanning the triple list.
std::vector<Walk> walks(const kgqa::KnowledgeGraph& g, const std::string& start, std::size_t hops, bool inverse);

}  // namespace oracle
