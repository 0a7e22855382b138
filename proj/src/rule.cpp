#include "kgqa/rule.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "kgqa/common.hpp"

namespace kgqa {

std::uint32_t HornRule::variable_count() const {
    std::uint32_t n = 0;
    auto visit = [&](const Term& t) {
        if (t.is_var()) n = std::max(n, t.value + 1);
    };
    visit(head.subject);
    visit(head.object);
    for (const auto& a : body) {
        visit(a.subject);
        visit(a.object);
    }
    return n;
}

HornRule head_only(PredicateHandle p) { return HornRule{{}, Atom{p, Term::var(0), Term::var(1)}}; }

namespace {

std::vector<const Atom*> all_atoms(const HornRule& rule) {
    std::vector<const Atom*> atoms{&rule.head};
    for (const auto& a : rule.body) atoms.push_back(&a);
    return atoms;
}

bool shares_term(const Atom& a, const Atom& b) {
    for (const Term& x : {a.subject, a.object})
        for (const Term& y : {b.subject, b.object})
            if (x == y) return true;
    return false;
}

// Number of atoms each variable occurs in.
std::map<std::uint32_t, std::size_t> variable_atom_counts(const HornRule& rule) {
    std::map<std::uint32_t, std::size_t> counts;
    for (const Atom* a : all_atoms(rule)) {
        if (a->subject.is_var()) ++counts[a->subject.value];
        if (a->object.is_var() && a->object != a->subject) ++counts[a->object.value];
    }
    return counts;
}

void append_u32(std::string& key, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) key.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_term(std::string& key, const Term& t) {
    key.push_back(t.is_var() ? 'v' : 'c');
    append_u32(key, t.value);
}

void append_atom(std::string& key, const Atom& a) {
    append_u32(key, raw(a.predicate));
    append_term(key, a.subject);
    append_term(key, a.object);
}

}  // namespace

RuleShape check_rule_shape(const HornRule& rule) {
    RuleShape shape;
    auto atoms = all_atoms(rule);

    // connectedness via union-find over atoms
    std::vector<std::size_t> parent(atoms.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < atoms.size(); ++i)
        for (std::size_t j = i + 1; j < atoms.size(); ++j)
            if (shares_term(*atoms[i], *atoms[j])) parent[find(i)] = find(j);
    shape.connected = true;
    for (std::size_t i = 1; i < atoms.size(); ++i)
        if (find(i) != find(0)) shape.connected = false;

    auto counts = variable_atom_counts(rule);
    shape.closed = std::all_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second >= 2; });

    std::set<std::uint32_t> body_vars;
    for (const auto& a : rule.body) {
        if (a.subject.is_var()) body_vars.insert(a.subject.value);
        if (a.object.is_var()) body_vars.insert(a.object.value);
    }
    shape.safe = true;
    for (const Term& t : {rule.head.subject, rule.head.object})
        if (t.is_var() && !body_vars.contains(t.value)) shape.safe = false;
    return shape;
}

std::size_t open_variable_count(const HornRule& rule) {
    auto counts = variable_atom_counts(rule);
    return static_cast<std::size_t>(
        std::count_if(counts.begin(), counts.end(), [](const auto& kv) { return kv.second == 1; }));
}

HornRule canonicalize(const HornRule& rule) {
    std::vector<std::size_t> order(rule.body.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rule.body[a] < rule.body[b]; });

    std::string best_key;
    HornRule best;
    bool have_best = false;
    do {
        std::map<std::uint32_t, std::uint32_t> rename;
        auto map_term = [&](const Term& t) {
            if (!t.is_var()) return t;
            auto [it, inserted] = rename.emplace(t.value, static_cast<std::uint32_t>(rename.size()));
            return Term::var(it->second);
        };
        HornRule candidate;
        candidate.head = {rule.head.predicate, map_term(rule.head.subject), map_term(rule.head.object)};
        candidate.body.reserve(rule.body.size());
        for (std::size_t i : order) {
            const Atom& a = rule.body[i];
            Term s = map_term(a.subject);
            Term o = map_term(a.object);
            candidate.body.push_back({a.predicate, s, o});
        }
        std::string key;
        append_atom(key, candidate.head);
        for (const auto& a : candidate.body) append_atom(key, a);
        if (!have_best || key < best_key) {
            best_key = std::move(key);
            best = std::move(candidate);
            have_best = true;
        }
    } while (std::next_permutation(order.begin(), order.end()));
    return best;
}

std::string canonical_key(const HornRule& rule) {
    std::string key;
    append_atom(key, rule.head);
    for (const auto& a : rule.body) append_atom(key, a);
    return key;
}

const char* to_string(RuleType t) {
    switch (t) {
        case RuleType::symmetry: return "symmetry";
        case RuleType::inversion: return "inversion";
        case RuleType::hierarchy: return "hierarchy";
        case RuleType::composition: return "composition";
        case RuleType::other: return "other";
    }
    return "other";
}

RuleType classify_rule(const HornRule& input) {
    const HornRule rule = canonicalize(input);
    const Atom& h = rule.head;
    auto has_constant = [](const Atom& a) { return !a.subject.is_var() || !a.object.is_var(); };
    if (has_constant(h) || h.subject == h.object) return RuleType::other;
    for (const auto& a : rule.body)
        if (has_constant(a)) return RuleType::other;

    if (rule.body.size() == 1) {
        const Atom& b = rule.body[0];
        if (b.subject == h.object && b.object == h.subject)
            return b.predicate == h.predicate ? RuleType::symmetry : RuleType::inversion;
        if (b.subject == h.subject && b.object == h.object && b.predicate != h.predicate)
            return RuleType::hierarchy;
        return RuleType::other;
    }
    if (rule.body.size() == 2) {
        for (int first = 0; first < 2; ++first) {
            const Atom& a = rule.body[first];
            const Atom& b = rule.body[1 - first];
            const Term& z = a.object;
            if (a.subject == h.subject && b.object == h.object && b.subject == z && z != h.subject &&
                z != h.object)
                return RuleType::composition;
        }
    }
    return RuleType::other;
}

std::string variable_name(std::uint32_t index) {
    static constexpr const char* names[] = {"X", "Y", "Z", "W", "V", "U", "T", "S"};
    if (index < std::size(names)) return names[index];
    return "V" + std::to_string(index);
}

namespace {

std::string term_text(const Term& t, const KnowledgeGraph& g) {
    return t.is_var() ? variable_name(t.value) : g.name(t.entity());
}

std::string atom_text(const Atom& a, const KnowledgeGraph& g) {
    return g.name(a.predicate) + "(" + term_text(a.subject, g) + "," + term_text(a.object, g) + ")";
}

nlohmann::json term_to_json(const Term& t, const KnowledgeGraph& g) {
    if (t.is_var()) return variable_name(t.value);
    return {{"const", g.name(t.entity())}};
}

}  // namespace

std::string format_rule(const HornRule& rule, const KnowledgeGraph& g) {
    std::string out;
    for (std::size_t i = 0; i < rule.body.size(); ++i) {
        if (i) out += " ∧ ";
        out += atom_text(rule.body[i], g);
    }
    if (rule.body.empty()) out += "⊤";
    out += " => ";
    out += atom_text(rule.head, g);
    return out;
}

nlohmann::json atom_to_json(const Atom& a, const KnowledgeGraph& g) {
    return {{"p", g.name(a.predicate)}, {"args", {term_to_json(a.subject, g), term_to_json(a.object, g)}}};
}

HornRule rule_from_json(const nlohmann::json& j, const KnowledgeGraph& g) {
    std::map<std::string, std::uint32_t> vars;
    auto parse_term = [&](const nlohmann::json& t) {
        if (t.is_object()) {
            const auto id = t.at("const").get<std::string>();
            auto e = g.find_entity(id);
            if (!e) throw domain_error("rule constant not in graph: " + id);
            return Term::constant(*e);
        }
        const auto name = t.get<std::string>();
        auto [it, inserted] = vars.emplace(name, static_cast<std::uint32_t>(vars.size()));
        return Term::var(it->second);
    };
    auto parse_atom = [&](const nlohmann::json& a) {
        const auto p = a.at("p").get<std::string>();
        auto handle = g.find_predicate(p);
        if (!handle) throw domain_error("rule predicate not in graph: " + p);
        const auto& args = a.at("args");
        if (!args.is_array() || args.size() != 2) throw domain_error("rule atom needs exactly two args");
        Term s = parse_term(args[0]);
        Term o = parse_term(args[1]);
        return Atom{*handle, s, o};
    };
    HornRule rule;
    rule.head = parse_atom(j.at("head"));
    for (const auto& a : j.at("body")) rule.body.push_back(parse_atom(a));
    return rule;
}

}  // namespace kgqa
