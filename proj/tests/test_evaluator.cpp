#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "kgqa/common.hpp"
#include "kgqa/evaluator.hpp"
#include "support/oracles.hpp"

using namespace kgqa;

namespace {

std::vector<std::string> random_answers(std::mt19937_64& rng, std::size_t max) {
    std::vector<std::string> out;
    const std::size_t n = rng() % (max + 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back("e" + std::to_string(rng() % 30));
    return out;
}

}  // namespace

TEST_CASE("answer normalization") {
    CHECK(normalize_answer("  The Eiffel-Tower! ") == "eiffeltower");
    CHECK(normalize_answer("<pad>Paris<pad>") == "paris");
    CHECK(normalize_answer("A  An Theory") == "theory");
    CHECK(normalize_answer("Théâtre") == "théâtre");
    CHECK(normalize_prediction("Paris, London\nRome") == std::set<std::string>{"paris", "london", "rome"});
    CHECK(normalize_prediction("paris london") == std::set<std::string>{"paris", "london"});
    CHECK(normalize_prediction("new york, boston") == std::set<std::string>{"new york", "boston"});
    CHECK(normalize_prediction(" , ,").empty());
}

TEST_CASE("normalization is idempotent for comma-joined multi-answer outputs") {
    std::mt19937_64 rng(11);
    const std::vector<std::string> words{"The", "new", "York", "a", "Paris", "<pad>", "san-jose", "an", "x.y"};
    for (int trial = 0; trial < 500; ++trial) {
        std::string raw;
        const std::size_t pieces = 2 + rng() % 4;
        for (std::size_t i = 0; i < pieces; ++i) {
            if (i) raw += rng() % 2 ? ", " : "\n";
            const std::size_t len = 1 + rng() % 3;
            for (std::size_t j = 0; j < len; ++j) raw += (j ? " " : "") + words[rng() % words.size()];
        }
        const auto once = normalize_prediction(raw);
        if (once.size() < 2) continue;
        std::string joined;
        for (const auto& s : once) joined += (joined.empty() ? "" : ", ") + s;
        CHECK(normalize_prediction(joined) == once);
    }
}

TEST_CASE("per-question scores") {
    const std::vector<GoldRecord> gold{{"q1", {"ab", "bc"}, "ab"}, {"q2", {"cd"}, "cd"}, {"q3", {"de", "ef"}, "ef"}};
    const std::vector<PredictionRecord> preds{{"q1", std::vector<std::string>{"AB", "x"}},
                                              {"q2", std::string("")}};
    const auto r = compute_report(gold, preds);
    REQUIRE(r.rows.size() == 3);
    CHECK(r.rows[0].precision == doctest::Approx(0.5));
    CHECK(r.rows[0].recall == doctest::Approx(0.5));
    CHECK(r.rows[0].hit_hard);
    CHECK(r.rows[1].empty_prediction);
    CHECK(r.rows[2].missing);
    CHECK(r.missing_ids == std::vector<std::string>{"q3"});
    CHECK(r.hits_any == doctest::Approx(1.0 / 3));
    CHECK(r.hhr == doctest::Approx(1.0));
    const auto csv = r.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(r.to_json().contains("metrics"));
}

TEST_CASE("bad prediction sets are rejected") {
    const std::vector<GoldRecord> gold{{"q1", {"a"}, "a"}};
    const std::vector<PredictionRecord> dup{{"q1", std::string("a")}, {"q1", std::string("b")}};
    CHECK_THROWS_AS(compute_report(gold, dup), Error);
    const std::vector<PredictionRecord> stray{{"zz", std::string("a")}};
    CHECK_THROWS_AS(compute_report(gold, stray), Error);
}

TEST_CASE("metrics agree with set arithmetic, stay bounded and ignore order") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 50; ++round) {
        std::vector<GoldRecord> gold;
        std::vector<PredictionRecord> preds;
        std::vector<oracle::QuestionMetrics> rows;
        const std::size_t n = 1 + rng() % 20;
        for (std::size_t i = 0; i < n; ++i) {
            auto answers = random_answers(rng, 20);
            if (answers.empty()) answers.push_back("e0");
            const std::string hard = answers[rng() % answers.size()];
            auto pred = random_answers(rng, 20);
            gold.push_back({"q" + std::to_string(i), answers, hard});
            preds.push_back({"q" + std::to_string(i), pred});
            rows.push_back(oracle::score({answers.begin(), answers.end()}, hard, {pred.begin(), pred.end()}));
        }
        const auto r = compute_report(gold, preds);
        const auto want = oracle::macro(rows);
        CHECK(std::abs(r.hits_any - want.hits_any) <= 1e-12);
        CHECK(std::abs(r.precision - want.precision) <= 1e-12);
        CHECK(std::abs(r.recall - want.recall) <= 1e-12);
        CHECK(std::abs(r.f1 - want.f1) <= 1e-12);
        CHECK(std::abs(r.hits_hard - want.hits_hard) <= 1e-12);
        CHECK(std::abs(r.hhr - want.hhr) <= 1e-12);
        CHECK(0 <= r.hits_hard);
        CHECK(r.hits_hard <= r.hits_any);
        CHECK(r.hits_any <= 1);
        for (const auto& row : r.rows) {
            const double hm = row.precision + row.recall == 0 ? 0 : 2 * row.precision * row.recall / (row.precision + row.recall);
            CHECK(std::abs(row.f1 - hm) <= 1e-12);
        }

        std::shuffle(gold.begin(), gold.end(), rng);
        std::shuffle(preds.begin(), preds.end(), rng);
        const auto shuffled = compute_report(gold, preds);
        CHECK(std::abs(shuffled.f1 - r.f1) <= 1e-12);
        CHECK(std::abs(shuffled.precision - r.precision) <= 1e-12);
        CHECK(shuffled.hits_any == r.hits_any);
        CHECK(shuffled.hhr == r.hhr);
    }
}
