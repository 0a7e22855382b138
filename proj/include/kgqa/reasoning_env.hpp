#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgqa/kg_store.hpp"

namespace kgqa {

struct EnvConfig {
    static constexpr std::size_t unlimited = std::numeric_limits<std::size_t>::max();

    std::size_t max_hop_limit = 3;
    std::size_t max_relation_paths = 200;       // per explore call
    std::size_t max_groundings_per_path = 100;
    bool include_inverse = false;

    void validate() const;
};

/// One hop of a relation path. Inverse steps walk an edge backwards.
struct PathStep {
    PredicateHandle predicate;
    bool inverse = false;
    auto operator<=>(const PathStep&) const = default;
};

struct RelationPath {
    std::vector<PathStep> steps;
    std::size_t length() const { return steps.size(); }
    auto operator<=>(const RelationPath&) const = default;
};

/// A walked edge. `triple()` is the stored fact (reversed for inverse hops).
struct Hop {
    EntityHandle from;
    PathStep step;
    EntityHandle to;

    TripleRef triple() const {
        return step.inverse ? TripleRef{to, step.predicate, from} : TripleRef{from, step.predicate, to};
    }
    auto operator<=>(const Hop&) const = default;
};

struct ReasoningPath {
    std::vector<Hop> hops;  // hops[i].to == hops[i + 1].from

    EntityHandle start() const { return hops.front().from; }
    EntityHandle end() const { return hops.back().to; }
    RelationPath relation() const;
    auto operator<=>(const ReasoningPath&) const = default;
};

struct GroundResult {
    std::vector<ReasoningPath> paths;
    std::set<EntityHandle> entities;  // every entity on the paths except the anchor
};

/// Pure queries over one graph; safe to share across concurrent episodes.
class Environment {
public:
    Environment(const KnowledgeGraph& g, EnvConfig cfg);

    const KnowledgeGraph& graph() const { return g_; }
    const EnvConfig& config() const { return cfg_; }

    /// Distinct predicate sequences of walks of length 1..H from e, shorter
    /// first then lexicographic by step name, truncated to the cap.
    std::vector<RelationPath> explore(EntityHandle e, std::size_t hops) const;
    std::vector<RelationPath> explore(std::string_view entity, std::size_t hops) const;

    /// All walks from e following each path, in path order then lexicographic
    /// entity order, capped per path.
    GroundResult ground(EntityHandle e, std::span<const RelationPath> paths) const;

    std::string step_name(const PathStep& s) const;
    /// "rel1 -> rel2"
    std::string format(const RelationPath& p) const;
    /// "(s, p, o) ; (s, p, o)"
    std::string format(const ReasoningPath& p) const;
    std::optional<RelationPath> parse_relation_path(std::string_view text) const;

private:
    void check_hops(std::size_t hops) const;
    std::vector<std::string> sort_key(const RelationPath& p) const;

    const KnowledgeGraph& g_;
    EnvConfig cfg_;
};

/// ['a', 'a -> b'] style list rendering used in observations.
std::string format_string_list(std::span<const std::string> items);

struct AgentState {
    std::set<std::pair<EntityHandle, RelationPath>> P;
    std::set<ReasoningPath> C;
    std::set<EntityHandle> E;
    bool terminal = false;
};

AgentState initial_state(EntityHandle topic);

struct ExploreOutcome {
    EntityHandle start;
    std::vector<RelationPath> paths;
};
struct SynthesisOutcome {};

using TransitionInput = std::variant<ExploreOutcome, GroundResult, SynthesisOutcome>;

/// Monotone union of the result into the state; synthesis marks it terminal.
/// Throws a domain error on a terminal state.
AgentState apply_transition(AgentState s, const TransitionInput& input);

/// Stable textual digest of a state (sha256 of its serialization).
std::string state_digest(const AgentState& s, const Environment& env);

}  // namespace kgqa
