#include "support/oracles.hpp"

#include <algorithm>
#include <functional>
#include <map>

namespace oracle {

using namespace kgqa;

QuestionMetrics score(const std::set<std::string>& gold, const std::string& hard, const std::set<std::string>& pred) {
    std::set<std::string> both;
    std::set_intersection(gold.begin(), gold.end(), pred.begin(), pred.end(), std::inserter(both, both.end()));
    QuestionMetrics m;
    const double k = double(both.size());
    m.precision = pred.empty() ? 0 : k / double(pred.size());
    m.recall = gold.empty() ? 0 : k / double(gold.size());
    m.f1 = (pred.size() + gold.size()) == 0 ? 0 : 2 * k / double(pred.size() + gold.size());
    m.hit_any = !both.empty();
    m.hit_hard = both.contains(hard);
    return m;
}

Totals macro(const std::vector<QuestionMetrics>& rows) {
    Totals t;
    if (rows.empty()) return t;
    long any = 0, hard = 0;
    for (const auto& r : rows) {
        any += r.hit_any;
        hard += r.hit_hard;
        t.precision += r.precision;
        t.recall += r.recall;
        t.f1 += r.f1;
    }
    const double n = double(rows.size());
    t.precision /= n;
    t.recall /= n;
    t.f1 /= n;
    t.hits_any = double(any) / n;
    t.hits_hard = double(hard) / n;
    t.hhr = any == 0 ? 0 : double(hard) / double(any);
    return t;
}

RuleMetrics rule_metrics(const KnowledgeGraph& g, const HornRule& rule) {
    const std::size_t n = g.entity_count(), np = g.predicate_count();
    std::vector<char> fact(n * np * n, 0);
    auto at = [&](std::uint32_t s, std::uint32_t p, std::uint32_t o) -> char& { return fact[(s * np + p) * n + o]; };
    for (const auto& t : g.triples()) at(raw(t.subject), raw(t.predicate), raw(t.object)) = 1;

    std::uint32_t vars = 0;
    auto note = [&](const Term& t) {
        if (t.is_var()) vars = std::max(vars, t.value + 1);
    };
    note(rule.head.subject);
    note(rule.head.object);
    for (const auto& a : rule.body) {
        note(a.subject);
        note(a.object);
    }

    const std::uint32_t r = raw(rule.head.predicate);
    std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
    std::vector<std::uint32_t> sub(vars, 0);
    auto value = [&](const Term& t) { return t.is_var() ? sub[t.value] : t.value; };
    std::function<void(std::uint32_t)> rec = [&](std::uint32_t v) {
        if (v == vars) {
            for (const auto& a : rule.body)
                if (!at(value(a.subject), raw(a.predicate), value(a.object))) return;
            pairs.insert({value(rule.head.subject), value(rule.head.object)});
            return;
        }
        for (std::uint32_t e = 0; e < n; ++e) {
            sub[v] = e;
            rec(v + 1);
        }
    };
    rec(0);

    RuleMetrics m;
    for (std::uint32_t s = 0; s < n; ++s)
        for (std::uint32_t o = 0; o < n; ++o) m.head_count += at(s, r, o);
    for (const auto& [x, y] : pairs) {
        m.support += at(x, r, y);
        bool known = false;
        for (std::uint32_t o = 0; o < n && !known; ++o) known = at(x, r, o);
        m.pca_body_pairs += known;
    }
    m.body_pairs = pairs.size();
    m.head_coverage = m.head_count ? double(m.support) / double(m.head_count) : 0;
    m.confidence = m.body_pairs ? double(m.support) / double(m.body_pairs) : 0;
    m.pca_confidence = m.pca_body_pairs ? double(m.support) / double(m.pca_body_pairs) : 0;
    return m;
}

std::vector<HornRule> all_valid_rules(const KnowledgeGraph& g, std::size_t max_len) {
    const std::uint32_t np = static_cast<std::uint32_t>(g.predicate_count());
    const std::uint32_t max_vars = static_cast<std::uint32_t>(max_len);
    std::vector<Atom> atoms;
    for (std::uint32_t p = 0; p < np; ++p)
        for (std::uint32_t s = 0; s < max_vars; ++s)
            for (std::uint32_t o = 0; o < max_vars; ++o)
                atoms.push_back({PredicateHandle{p}, Term::var(s), Term::var(o)});

    std::map<std::string, HornRule> unique;
    std::vector<Atom> body;
    std::function<void(std::size_t, const Atom&)> extend = [&](std::size_t from, const Atom& head) {
        if (!body.empty()) {
            HornRule rule{body, head};
            if (check_rule_shape(rule).all()) {
                HornRule c = canonicalize(rule);
                unique.emplace(canonical_key(c), c);
            }
        }
        if (body.size() + 1 >= max_len) return;
        for (std::size_t i = from; i < atoms.size(); ++i) {
            body.push_back(atoms[i]);
            extend(i, head);
            body.pop_back();
        }
    };
    for (std::uint32_t p = 0; p < np; ++p) extend(0, Atom{PredicateHandle{p}, Term::var(0), Term::var(1)});

    std::vector<HornRule> out;
    for (auto& [k, r] : unique) out.push_back(std::move(r));
    return out;
}

std::vector<Walk> walks(const KnowledgeGraph& g, const std::string& start, std::size_t hops, bool inverse) {
    const std::vector<Triple> all = g.to_triples();
    std::vector<Walk> out;
    Walk cur;
    std::function<void(const std::string&)> rec = [&](const std::string& at) {
        if (!cur.steps.empty()) {
            cur.end = at;
            out.push_back(cur);
        }
        if (cur.steps.size() == hops) return;
        for (const auto& t : all) {
            if (t.subject == at) {
                cur.steps.push_back(t.predicate);
                cur.triples.push_back(t);
                rec(t.object);
                cur.steps.pop_back();
                cur.triples.pop_back();
            }
            if (inverse && t.object == at) {
                cur.steps.push_back("inv_" + t.predicate);
                cur.triples.push_back(t);
                rec(t.subject);
                cur.steps.pop_back();
                cur.triples.pop_back();
            }
        }
    };
    rec(start);
    return out;
}

}  // namespace oracle
