#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgqa {

// Interned handles. Registries assign them in lexicographic order of the id
// string, so comparing handles orders by id.
enum class EntityHandle : std::uint32_t {};
enum class PredicateHandle : std::uint32_t {};

constexpr std::uint32_t raw(EntityHandle e) { return static_cast<std::uint32_t>(e); }
constexpr std::uint32_t raw(PredicateHandle p) { return static_cast<std::uint32_t>(p); }

/// String-level triple: subject<TAB>predicate<TAB>object.
struct Triple {
    std::string subject;
    std::string predicate;
    std::string object;

    auto operator<=>(const Triple&) const = default;
    bool operator==(const Triple&) const = default;
};

std::string to_string(const Triple& t);
nlohmann::json to_json(const Triple& t);
Triple triple_from_json(const nlohmann::json& j);

struct TripleRef {
    EntityHandle subject;
    PredicateHandle predicate;
    EntityHandle object;

    auto operator<=>(const TripleRef&) const = default;
    bool operator==(const TripleRef&) const = default;
};

struct TripleRefHash {
    std::size_t operator()(const TripleRef& t) const noexcept {
        std::uint64_t h = (std::uint64_t(raw(t.subject)) << 32) | raw(t.object);
        h ^= std::uint64_t(raw(t.predicate)) * 0x9e3779b97f4a7c15ULL;
        h ^= h >> 29;
        h *= 0xbf58476d1ce4e5b9ULL;
        return static_cast<std::size_t>(h ^ (h >> 32));
    }
};

/// One adjacency entry: the predicate plus the entity at the other end.
struct Edge {
    PredicateHandle predicate;
    EntityHandle target;
    auto operator<=>(const Edge&) const = default;
};

struct Pair {
    EntityHandle subject;
    EntityHandle object;
    auto operator<=>(const Pair&) const = default;
};

/// Interned id strings plus optional human-readable labels.
struct Registry {
    std::vector<std::string> entities;     // sorted
    std::vector<std::string> predicates;   // sorted
    std::vector<std::string> labels;       // empty, or parallel to `entities`
    std::unordered_map<std::string, std::uint32_t> entity_index;
    std::unordered_map<std::string, std::uint32_t> predicate_index;
};

struct LoadStats {
    std::size_t lines = 0;
    std::size_t duplicates = 0;
};

/// Immutable indexed triple set. Mutating operations return new graphs.
class KnowledgeGraph {
public:
    /// Builds a graph from string triples; duplicates collapse.
    static KnowledgeGraph from_triples(std::vector<Triple> triples, LoadStats* stats = nullptr);

    std::size_t size() const { return triples_.size(); }
    bool empty() const { return triples_.empty(); }
    std::size_t entity_count() const { return registry_->entities.size(); }
    std::size_t predicate_count() const { return registry_->predicates.size(); }

    std::optional<EntityHandle> find_entity(std::string_view id) const;
    std::optional<PredicateHandle> find_predicate(std::string_view name) const;
    const std::string& name(EntityHandle e) const { return registry_->entities[raw(e)]; }
    const std::string& name(PredicateHandle p) const { return registry_->predicates[raw(p)]; }
    /// Label metadata, or the id itself when no label is recorded.
    const std::string& label(EntityHandle e) const;
    bool has_labels() const { return !registry_->labels.empty(); }

    std::span<const std::string> entity_names() const { return registry_->entities; }
    std::span<const std::string> predicate_names() const { return registry_->predicates; }

    bool contains(const TripleRef& t) const { return membership_.contains(t); }
    bool contains(const Triple& t) const;
    std::optional<TripleRef> resolve(const Triple& t) const;
    Triple materialize(const TripleRef& t) const;

    /// All triples sorted by (subject, predicate, object).
    std::span<const TripleRef> triples() const { return triples_; }

    /// (predicate, object) pairs leaving e, sorted.
    std::span<const Edge> out_edges(EntityHandle e) const;
    /// (predicate, subject) pairs entering e, sorted.
    std::span<const Edge> in_edges(EntityHandle e) const;
    /// Objects o with (s, p, o) in the graph, sorted.
    std::span<const EntityHandle> objects(EntityHandle s, PredicateHandle p) const;
    /// Subjects s with (s, p, o) in the graph, sorted.
    std::span<const EntityHandle> subjects(EntityHandle o, PredicateHandle p) const;
    /// (subject, object) pairs of predicate p, sorted.
    std::span<const Pair> facts(PredicateHandle p) const;
    /// Distinct subjects / objects of p, sorted.
    std::span<const EntityHandle> subject_domain(PredicateHandle p) const;
    std::span<const EntityHandle> object_domain(PredicateHandle p) const;

    /// String-level adjacency in lexicographic order; unknown entity gives [].
    std::vector<std::pair<std::string, std::string>> outgoing(std::string_view entity) const;

    /// New graph without `victims`; every victim must be present. The
    /// registry (and so every handle) is shared with this graph.
    KnowledgeGraph remove_triples(std::span<const TripleRef> victims) const;
    KnowledgeGraph remove_triples(std::span<const Triple> victims) const;

    std::vector<Triple> to_triples() const;
    /// TSV export, one triple per line in sorted order.
    std::string to_tsv() const;

    const std::shared_ptr<const Registry>& registry() const { return registry_; }

    /// Same triples under a replacement registry with identical id order
    /// (used to attach label metadata).
    static KnowledgeGraph with_registry(std::shared_ptr<const Registry> registry, const KnowledgeGraph& g);

private:
    KnowledgeGraph(std::shared_ptr<const Registry> registry, std::vector<TripleRef> sorted_unique);
    void build_indices();

    std::shared_ptr<const Registry> registry_;
    std::vector<TripleRef> triples_;
    std::unordered_set<TripleRef, TripleRefHash> membership_;

    // CSR adjacency.
    std::vector<std::uint32_t> out_offsets_, in_offsets_;
    std::vector<Edge> out_edges_, in_edges_;
    std::vector<EntityHandle> out_targets_, in_targets_;  // mirror of edge targets for sp/op spans
    std::vector<std::uint32_t> fact_offsets_;
    std::vector<Pair> facts_;
    std::vector<std::uint32_t> subj_dom_offsets_, obj_dom_offsets_;
    std::vector<EntityHandle> subj_dom_, obj_dom_;
};

KnowledgeGraph parse_tsv(std::string_view text, LoadStats* stats = nullptr);
/// Loads a UTF-8 TSV triple file. Throws ParseError on malformed lines and
/// a domain error "empty graph" when no triple is present.
KnowledgeGraph load_graph(const std::string& path, LoadStats* stats = nullptr);
void save_graph(const KnowledgeGraph& g, const std::string& path);

struct AnonymizationEntry {
    std::string index;
    std::string label;
};

struct Anonymization {
    KnowledgeGraph graph;
    std::map<std::string, AnonymizationEntry> mapping;  // original id -> entry
};

/// Relabels entities with decimal indices drawn from a seeded permutation.
Anonymization anonymize(const KnowledgeGraph& g, std::uint64_t seed);
nlohmann::json mapping_to_json(const std::map<std::string, AnonymizationEntry>& mapping);

}  // namespace kgqa
