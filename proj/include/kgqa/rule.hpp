#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgqa/kg_store.hpp"

namespace kgqa {

struct Term {
    enum class Kind : std::uint8_t { variable, constant };
    Kind kind = Kind::variable;
    std::uint32_t value = 0;  // variable index, or raw EntityHandle

    static Term var(std::uint32_t index) { return {Kind::variable, index}; }
    static Term constant(EntityHandle e) { return {Kind::constant, raw(e)}; }
    bool is_var() const { return kind == Kind::variable; }
    EntityHandle entity() const { return EntityHandle{value}; }

    auto operator<=>(const Term&) const = default;
};

struct Atom {
    PredicateHandle predicate{};
    Term subject;
    Term object;

    auto operator<=>(const Atom&) const = default;
};

/// B1 ∧ … ∧ Bn ⇒ H. Variables are small integers; canonical rules number
/// them by first appearance, head first (X = 0, Y = 1, …).
struct HornRule {
    std::vector<Atom> body;
    Atom head;

    /// Atom count including the head.
    std::size_t length() const { return body.size() + 1; }
    std::uint32_t variable_count() const;

    bool operator==(const HornRule&) const = default;
};

/// ⊤ ⇒ p(X, Y)
HornRule head_only(PredicateHandle p);

struct RuleShape {
    bool connected = false;
    bool closed = false;
    bool safe = false;
    bool all() const { return connected && closed && safe; }
    bool operator==(const RuleShape&) const = default;
};

RuleShape check_rule_shape(const HornRule& rule);

/// Variables occurring in exactly one atom.
std::size_t open_variable_count(const HornRule& rule);

/// Renames variables and orders the body so that rules equal up to variable
/// renaming and body reordering map to the same value.
HornRule canonicalize(const HornRule& rule);

/// Compact key of a canonical rule, usable in hash sets.
std::string canonical_key(const HornRule& rule);

enum class RuleType { symmetry, inversion, hierarchy, composition, other };

const char* to_string(RuleType t);
RuleType classify_rule(const HornRule& rule);

/// X, Y, Z, W, V, U, T, S, then V8, V9, …
std::string variable_name(std::uint32_t index);

/// e.g. "hasParent(X,Z) ∧ hasSibling(Z,Y) => hasUncle(X,Y)"
std::string format_rule(const HornRule& rule, const KnowledgeGraph& g);

nlohmann::json atom_to_json(const Atom& a, const KnowledgeGraph& g);
/// Parses {p, args}; variable args are names like "X", constants are {"const": id}.
HornRule rule_from_json(const nlohmann::json& j, const KnowledgeGraph& g);

}  // namespace kgqa
