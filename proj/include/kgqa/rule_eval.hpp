#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "kgqa/kg_store.hpp"
#include "kgqa/rule.hpp"

namespace kgqa {

struct RuleMetrics {
    std::size_t support = 0;          // distinct grounded heads with full body support
    std::size_t head_count = 0;       // facts of the head predicate
    std::size_t body_pairs = 0;       // distinct (x, y) the body predicts
    std::size_t pca_body_pairs = 0;   // ... restricted to x with some known r(x, y')
    double head_coverage = 0.0;
    double confidence = 0.0;
    double pca_confidence = 0.0;

    bool operator==(const RuleMetrics&) const = default;
};

/// Quality measures of `rule` over g. Ratios with a zero denominator are 0.
/// Rules whose head variables are not all bound by the body (in-progress
/// candidates) report support and head coverage only.
RuleMetrics compute_metrics(const KnowledgeGraph& g, const HornRule& rule);

/// Variable assignment indexed by variable number.
using Substitution = std::vector<EntityHandle>;

struct Grounding {
    Substitution assignment;
    bool head_present = false;
};

/// Substitutions satisfying every body atom, in lexicographic order of the
/// assignment (variables in canonical order). `cap` bounds the result size.
std::vector<Grounding> enumerate_groundings(const KnowledgeGraph& g, const HornRule& rule,
                                            std::optional<std::size_t> cap = std::nullopt);

/// Groundings whose head equals (x, y), lexicographic, at most `cap`.
std::vector<Substitution> groundings_for_head(const KnowledgeGraph& g, const HornRule& rule, EntityHandle x,
                                              EntityHandle y, std::optional<std::size_t> cap = std::nullopt);

/// True iff some body grounding exists with head variables bound to (x, y).
bool body_holds(const KnowledgeGraph& g, const HornRule& rule, EntityHandle x, EntityHandle y);

TripleRef instantiate(const Atom& atom, const Substitution& s);
std::vector<TripleRef> instantiate_body(const HornRule& rule, const Substitution& s);

}  // namespace kgqa
