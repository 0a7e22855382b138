#include <doctest.h>

#include <cmath>

#include "kgqa/common.hpp"
#include "kgqa/rule_miner.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace kgqa;

namespace {

Atom atom(const KnowledgeGraph& g, const char* p, std::uint32_t s, std::uint32_t o) {
    return {*g.find_predicate(p), Term::var(s), Term::var(o)};
}

void check_same(const RuleMetrics& got, const RuleMetrics& want) {
    CHECK(got.support == want.support);
    CHECK(got.head_count == want.head_count);
    CHECK(got.body_pairs == want.body_pairs);
    CHECK(got.pca_body_pairs == want.pca_body_pairs);
    CHECK(std::abs(got.head_coverage - want.head_coverage) <= 1e-12);
    CHECK(std::abs(got.confidence - want.confidence) <= 1e-12);
    CHECK(std::abs(got.pca_confidence - want.pca_confidence) <= 1e-12);
}

}  // namespace

TEST_CASE("shape checks") {
    const auto g = parse_tsv("a\tp\tb\nb\tq\tc\na\tr\tc\n");
    HornRule comp{{atom(g, "p", 0, 2), atom(g, "q", 2, 1)}, atom(g, "r", 0, 1)};
    CHECK(check_rule_shape(comp).all());
    HornRule open{{atom(g, "p", 0, 2)}, atom(g, "r", 0, 1)};
    const auto s = check_rule_shape(open);
    CHECK(s.connected);
    CHECK_FALSE(s.closed);
    CHECK_FALSE(s.safe);
    HornRule split{{atom(g, "p", 2, 3), atom(g, "q", 0, 1)}, atom(g, "r", 0, 1)};
    CHECK_FALSE(check_rule_shape(split).connected);
    CHECK(open_variable_count(open) == 2);
}

TEST_CASE("rule types") {
    const auto g = parse_tsv("a\tp\tb\nb\tq\tc\na\tr\tc\n");
    CHECK(classify_rule({{atom(g, "p", 1, 0)}, atom(g, "p", 0, 1)}) == RuleType::symmetry);
    CHECK(classify_rule({{atom(g, "q", 1, 0)}, atom(g, "p", 0, 1)}) == RuleType::inversion);
    CHECK(classify_rule({{atom(g, "q", 0, 1)}, atom(g, "p", 0, 1)}) == RuleType::hierarchy);
    CHECK(classify_rule({{atom(g, "p", 0, 2), atom(g, "q", 2, 1)}, atom(g, "r", 0, 1)}) == RuleType::composition);
    CHECK(classify_rule({{atom(g, "p", 0, 2), atom(g, "q", 1, 2)}, atom(g, "r", 0, 1)}) == RuleType::other);
}

TEST_CASE("canonical form ignores variable names and body order") {
    const auto g = parse_tsv("a\tp\tb\nb\tq\tc\na\tr\tc\n");
    HornRule a{{atom(g, "p", 0, 2), atom(g, "q", 2, 1)}, atom(g, "r", 0, 1)};
    HornRule b{{atom(g, "q", 7, 5), atom(g, "p", 4, 7)}, atom(g, "r", 4, 5)};
    CHECK(canonical_key(canonicalize(a)) == canonical_key(canonicalize(b)));
    CHECK(format_rule(canonicalize(b), g) == "p(X,Z) ∧ q(Z,Y) => r(X,Y)");
    const HornRule back = rule_from_json(
        nlohmann::json{{"head", atom_to_json(a.head, g)},
                       {"body", {atom_to_json(a.body[0], g), atom_to_json(a.body[1], g)}}},
        g);
    CHECK(back == a);
}

TEST_CASE("metrics on a hand-sized graph") {
    // two of three uncle facts supported; four predicted pairs, one for a
    // subject with no known uncle
    const auto g = parse_tsv(
        "k1\thasParent\tm1\nm1\thasSibling\tu1\nk1\thasUncle\tu1\n"
        "k2\thasParent\tm2\nm2\thasSibling\tu2\nm2\thasSibling\tu3\nk2\thasUncle\tu2\n"
        "k3\thasParent\tm3\nm3\thasSibling\tu4\nk4\thasUncle\tu5\n");
    HornRule r{{atom(g, "hasParent", 0, 2), atom(g, "hasSibling", 2, 1)}, atom(g, "hasUncle", 0, 1)};
    const auto m = compute_metrics(g, r);
    CHECK(m.support == 2);
    CHECK(m.head_count == 3);
    CHECK(m.body_pairs == 4);
    CHECK(m.pca_body_pairs == 3);
    CHECK(m.confidence == doctest::Approx(0.5));
    CHECK(m.pca_confidence == doctest::Approx(2.0 / 3.0));
    check_same(m, oracle::rule_metrics(g, r));
}

TEST_CASE("metrics match the substitution oracle on small random graphs") {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        const auto g = testgen::random_graph(seed, {60, 3, 7});
        for (const auto& rule : oracle::all_valid_rules(g, 3)) check_same(compute_metrics(g, rule), oracle::rule_metrics(g, rule));
    }
}

TEST_CASE("support never grows under refinement") {
    MinerConfig cfg;
    cfg.max_rule_length = 3;
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
        const auto g = testgen::random_graph(seed, {120, 4, 10});
        for (std::uint32_t p = 0; p < g.predicate_count(); ++p) {
            const HornRule root = head_only(PredicateHandle{p});
            const auto root_support = compute_metrics(g, root).support;
            for (const auto& child : refine(root, g, cfg)) {
                const auto child_support = compute_metrics(g, child).support;
                CHECK(child_support <= root_support);
                for (const auto& grandchild : refine(child, g, cfg))
                    CHECK(compute_metrics(g, grandchild).support <= child_support);
            }
        }
    }
}

TEST_CASE("mined rules are well shaped and pass every threshold") {
    MinerConfig cfg;
    cfg.max_rule_length = 3;
    cfg.min_confidence = 0.2;
    cfg.min_head_coverage = 0.05;
    cfg.pca_threshold = 0.2;
    std::size_t total = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto g = testgen::random_graph(seed, {150, 4, 10});
        const auto rules = mine(g, cfg);
        total += rules.size();
        TypeHistogram h = histogram(rules);
        CHECK(h.total() == rules.size());
        for (const auto& r : rules) {
            CHECK(check_rule_shape(r.rule).all());
            CHECK(r.rule.length() <= cfg.max_rule_length);
            CHECK(r.metrics.confidence >= cfg.min_confidence);
            CHECK(r.metrics.head_coverage >= cfg.min_head_coverage);
            CHECK(r.metrics.pca_confidence >= cfg.pca_threshold);
            CHECK(r.metrics == compute_metrics(g, r.rule));
            CHECK(r.type == classify_rule(r.rule));
        }
    }
    CHECK(total > 0);
}

TEST_CASE("mining is deterministic and thread-count independent") {
    MinerConfig cfg;
    cfg.max_rule_length = 3;
    const auto g = testgen::family_graph(4, 25);
    cfg.threads = 1;
    const auto one = rules_to_jsonl(mine(g, cfg), g);
    cfg.threads = 4;
    const auto four = rules_to_jsonl(mine(g, cfg), g);
    CHECK(one == four);
    CHECK(one == rules_to_jsonl(mine(g, cfg), g));
    const auto parsed = rules_from_jsonl(one, g);
    CHECK(rules_to_jsonl(parsed, g) == one);
}

TEST_CASE("family graph yields the uncle composition") {
    MinerConfig cfg;
    cfg.max_rule_length = 3;
    const auto g = testgen::family_graph(1, 30);
    const auto rules = mine(g, cfg);
    bool found = false;
    for (const auto& r : rules)
        if (format_rule(r.rule, g) == "hasParent(X,Z) ∧ hasSibling(Z,Y) => hasUncle(X,Y)") found = true;
    CHECK(found);
    CHECK(histogram(rules).composition > 0);
}

TEST_CASE("improvement check drops rules no better than a sub-rule") {
    // q(x,y) alone already predicts p perfectly; adding r(x,y) cannot improve it
    const auto g = parse_tsv("a\tp\tb\na\tq\tb\na\tr\tb\nc\tp\td\nc\tq\td\nc\tr\td\n");
    MinerConfig cfg;
    cfg.max_rule_length = 3;
    for (const auto& r : mine(g, cfg)) CHECK(r.rule.body.size() == 1);
}

TEST_CASE("config validation") {
    MinerConfig cfg;
    cfg.pca_threshold = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.max_rule_length = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.min_confidence = 1.5;
    CHECK_THROWS_AS(cfg.validate(), Error);
}
