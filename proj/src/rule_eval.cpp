#include "kgqa/rule_eval.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace kgqa {

namespace {

constexpr std::uint32_t kUnbound = std::numeric_limits<std::uint32_t>::max();

// Backtracking matcher over a fixed list of body atoms with dynamic atom
// ordering: fully bound atoms first, then the smallest candidate list.
class BodyMatcher {
public:
    BodyMatcher(const KnowledgeGraph& g, const std::vector<Atom>& atoms, std::uint32_t variables)
        : g_(g), atoms_(atoms), binding_(variables, kUnbound) {}

    void bind(std::uint32_t var, EntityHandle e) { binding_[var] = raw(e); }
    void unbind(std::uint32_t var) { binding_[var] = kUnbound; }
    bool bound(std::uint32_t var) const { return binding_[var] != kUnbound; }
    EntityHandle value(std::uint32_t var) const { return EntityHandle{binding_[var]}; }

    std::uint64_t full_mask() const { return atoms_.empty() ? 0 : (~std::uint64_t{0} >> (64 - atoms_.size())); }

    bool exists(std::uint64_t mask) {
        if (mask == 0) return true;
        const std::size_t i = pick(mask);
        const std::uint64_t rest = mask & ~(std::uint64_t{1} << i);
        bool found = false;
        for_each_match(atoms_[i], [&] {
            if (exists(rest)) {
                found = true;
                return false;
            }
            return true;
        });
        return found;
    }

    // Distinct (x, y) bindings of two variables for which the body holds.
    void project(std::uint64_t mask, std::uint32_t x, std::uint32_t y,
                 std::unordered_set<std::uint64_t>& out) {
        if (bound(x) && bound(y)) {
            const std::uint64_t key = (std::uint64_t(binding_[x]) << 32) | binding_[y];
            if (out.contains(key)) return;
            if (exists(mask)) out.insert(key);
            return;
        }
        if (mask == 0) return;
        const std::size_t i = pick(mask);
        const std::uint64_t rest = mask & ~(std::uint64_t{1} << i);
        for_each_match(atoms_[i], [&] {
            project(rest, x, y, out);
            return true;
        });
    }

private:
    bool term_bound(const Term& t) const { return !t.is_var() || bound(t.value); }
    EntityHandle term_value(const Term& t) const { return t.is_var() ? value(t.value) : t.entity(); }

    std::size_t cost(const Atom& a) const {
        const bool sb = term_bound(a.subject), ob = term_bound(a.object);
        if (sb && ob) return 0;
        if (sb) return 1 + g_.objects(term_value(a.subject), a.predicate).size();
        if (ob) return 1 + g_.subjects(term_value(a.object), a.predicate).size();
        return 1 + (std::size_t{1} << 40) + g_.facts(a.predicate).size();
    }

    std::size_t pick(std::uint64_t mask) const {
        std::size_t best = 64, best_cost = std::numeric_limits<std::size_t>::max();
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            if (!(mask >> i & 1)) continue;
            const std::size_t c = cost(atoms_[i]);
            if (c < best_cost) {
                best = i;
                best_cost = c;
            }
        }
        return best;
    }

    // Calls visit() for every binding of the atom's free variables that makes
    // the atom true; visit returns false to stop. Bindings are undone after.
    template <typename Visit>
    void for_each_match(const Atom& a, Visit&& visit) {
        const bool sb = term_bound(a.subject), ob = term_bound(a.object);
        if (sb && ob) {
            if (g_.contains(TripleRef{term_value(a.subject), a.predicate, term_value(a.object)})) visit();
            return;
        }
        if (sb) {
            const std::uint32_t v = a.object.value;
            for (EntityHandle o : g_.objects(term_value(a.subject), a.predicate)) {
                bind(v, o);
                const bool go_on = visit();
                unbind(v);
                if (!go_on) return;
            }
            return;
        }
        if (ob) {
            const std::uint32_t v = a.subject.value;
            for (EntityHandle s : g_.subjects(term_value(a.object), a.predicate)) {
                bind(v, s);
                const bool go_on = visit();
                unbind(v);
                if (!go_on) return;
            }
            return;
        }
        const std::uint32_t vs = a.subject.value, vo = a.object.value;
        for (const Pair& pr : g_.facts(a.predicate)) {
            if (vs == vo) {
                if (pr.subject != pr.object) continue;
                bind(vs, pr.subject);
            } else {
                bind(vs, pr.subject);
                bind(vo, pr.object);
            }
            const bool go_on = visit();
            unbind(vs);
            unbind(vo);
            if (!go_on) return;
        }
    }

    const KnowledgeGraph& g_;
    const std::vector<Atom>& atoms_;
    std::vector<std::uint32_t> binding_;
};

std::pair<std::uint32_t, std::uint32_t> head_variables(const HornRule& rule) {
    const Atom& h = rule.head;
    if (!h.subject.is_var() || !h.object.is_var() || h.subject == h.object)
        throw std::invalid_argument("rule head must be r(X, Y) with two distinct variables");
    return {h.subject.value, h.object.value};
}

std::vector<EntityHandle> intersect(std::span<const EntityHandle> a, std::span<const EntityHandle> b) {
    std::vector<EntityHandle> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

// Enumerates substitutions by assigning variables in index order, each from
// a sorted candidate list, so results come out lexicographically.
class OrderedEnumerator {
public:
    OrderedEnumerator(const KnowledgeGraph& g, const HornRule& rule, std::optional<std::size_t> cap)
        : g_(g), rule_(rule), cap_(cap), vars_(rule.variable_count()), binding_(vars_, kUnbound) {}

    void fix(std::uint32_t var, EntityHandle e) { binding_[var] = raw(e); }

    std::vector<Substitution> run() {
        if (cap_ && *cap_ == 0) return {};
        // Atoms already fully determined by the fixed variables.
        for (const auto& a : rule_.body)
            if (fully_bound(a) && !holds(a)) return {};
        assign(0);
        return std::move(results_);
    }

private:
    bool bound(const Term& t) const { return !t.is_var() || binding_[t.value] != kUnbound; }
    EntityHandle val(const Term& t) const { return t.is_var() ? EntityHandle{binding_[t.value]} : t.entity(); }
    bool fully_bound(const Atom& a) const { return bound(a.subject) && bound(a.object); }
    bool holds(const Atom& a) const { return g_.contains(TripleRef{val(a.subject), a.predicate, val(a.object)}); }
    static bool mentions(const Atom& a, std::uint32_t v) {
        return (a.subject.is_var() && a.subject.value == v) || (a.object.is_var() && a.object.value == v);
    }

    std::vector<EntityHandle> candidates(std::uint32_t v) const {
        std::optional<std::vector<EntityHandle>> acc;
        auto narrow = [&](std::span<const EntityHandle> list) {
            acc = acc ? intersect(*acc, list) : std::vector<EntityHandle>(list.begin(), list.end());
        };
        bool anchored = false;
        for (const auto& a : rule_.body) {
            const bool subj_v = a.subject.is_var() && a.subject.value == v;
            const bool obj_v = a.object.is_var() && a.object.value == v;
            if (subj_v && !obj_v && bound(a.object)) {
                narrow(g_.subjects(val(a.object), a.predicate));
                anchored = true;
            } else if (obj_v && !subj_v && bound(a.subject)) {
                narrow(g_.objects(val(a.subject), a.predicate));
                anchored = true;
            }
        }
        if (!anchored) {
            for (const auto& a : rule_.body) {
                if (a.subject.is_var() && a.subject.value == v) narrow(g_.subject_domain(a.predicate));
                if (a.object.is_var() && a.object.value == v) narrow(g_.object_domain(a.predicate));
            }
        }
        if (!acc) {
            // Variable absent from the body: ranges over every entity.
            std::vector<EntityHandle> all(g_.entity_count());
            for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = EntityHandle{i};
            return all;
        }
        return *acc;
    }

    bool assign(std::uint32_t v) {
        if (v == vars_) {
            Substitution s(vars_);
            for (std::uint32_t i = 0; i < vars_; ++i) s[i] = EntityHandle{binding_[i]};
            results_.push_back(std::move(s));
            return !(cap_ && results_.size() >= *cap_);
        }
        if (binding_[v] != kUnbound) return assign(v + 1);
        for (EntityHandle c : candidates(v)) {
            binding_[v] = raw(c);
            bool ok = true;
            for (const auto& a : rule_.body) {
                if (mentions(a, v) && fully_bound(a) && !holds(a)) {
                    ok = false;
                    break;
                }
            }
            if (ok && !assign(v + 1)) {
                binding_[v] = kUnbound;
                return false;
            }
        }
        binding_[v] = kUnbound;
        return true;
    }

    const KnowledgeGraph& g_;
    const HornRule& rule_;
    std::optional<std::size_t> cap_;
    std::uint32_t vars_;
    std::vector<std::uint32_t> binding_;
    std::vector<Substitution> results_;
};

}  // namespace

RuleMetrics compute_metrics(const KnowledgeGraph& g, const HornRule& rule) {
    const auto [x, y] = head_variables(rule);
    const PredicateHandle r = rule.head.predicate;
    RuleMetrics m;
    m.head_count = g.facts(r).size();
    BodyMatcher matcher(g, rule.body, rule.variable_count());

    if (check_rule_shape(rule).safe) {
        std::unordered_set<std::uint64_t> pairs;
        matcher.project(matcher.full_mask(), x, y, pairs);
        m.body_pairs = pairs.size();
        for (std::uint64_t key : pairs) {
            const EntityHandle sx{static_cast<std::uint32_t>(key >> 32)};
            const EntityHandle sy{static_cast<std::uint32_t>(key & 0xffffffffu)};
            if (g.contains(TripleRef{sx, r, sy})) ++m.support;
            if (!g.objects(sx, r).empty()) ++m.pca_body_pairs;
        }
    } else {
        for (const Pair& fact : g.facts(r)) {
            matcher.bind(x, fact.subject);
            matcher.bind(y, fact.object);
            if (matcher.exists(matcher.full_mask())) ++m.support;
        }
    }
    auto ratio = [](std::size_t num, std::size_t den) { return den == 0 ? 0.0 : double(num) / double(den); };
    m.head_coverage = ratio(m.support, m.head_count);
    m.confidence = ratio(m.support, m.body_pairs);
    m.pca_confidence = ratio(m.support, m.pca_body_pairs);
    return m;
}

std::vector<Grounding> enumerate_groundings(const KnowledgeGraph& g, const HornRule& rule,
                                            std::optional<std::size_t> cap) {
    OrderedEnumerator en(g, rule, cap);
    std::vector<Grounding> out;
    for (auto& s : en.run()) {
        const bool head = g.contains(instantiate(rule.head, s));
        out.push_back({std::move(s), head});
    }
    return out;
}

std::vector<Substitution> groundings_for_head(const KnowledgeGraph& g, const HornRule& rule, EntityHandle x,
                                              EntityHandle y, std::optional<std::size_t> cap) {
    const auto [vx, vy] = head_variables(rule);
    OrderedEnumerator en(g, rule, cap);
    en.fix(vx, x);
    en.fix(vy, y);
    return en.run();
}

bool body_holds(const KnowledgeGraph& g, const HornRule& rule, EntityHandle x, EntityHandle y) {
    const auto [vx, vy] = head_variables(rule);
    BodyMatcher matcher(g, rule.body, rule.variable_count());
    matcher.bind(vx, x);
    matcher.bind(vy, y);
    return matcher.exists(matcher.full_mask());
}

TripleRef instantiate(const Atom& atom, const Substitution& s) {
    auto val = [&](const Term& t) { return t.is_var() ? s.at(t.value) : t.entity(); };
    return {val(atom.subject), atom.predicate, val(atom.object)};
}

std::vector<TripleRef> instantiate_body(const HornRule& rule, const Substitution& s) {
    std::vector<TripleRef> out;
    out.reserve(rule.body.size());
    for (const auto& a : rule.body) out.push_back(instantiate(a, s));
    return out;
}

}  // namespace kgqa
