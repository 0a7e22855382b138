#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgqa {

/// Lowercase, drop <pad>, strip ASCII punctuation, drop whole-word articles,
/// collapse whitespace. Operates on one answer string.
std::string normalize_answer(std::string_view text);

/// Splits a raw output on commas/newlines (whitespace only when neither is
/// present), normalizes the pieces and drops empties.
std::set<std::string> normalize_prediction(std::string_view raw);
std::set<std::string> normalize_list(std::span<const std::string> items);

struct PredictionRecord {
    std::string id;
    std::variant<std::string, std::vector<std::string>> output;

    std::set<std::string> normalized() const;
};

struct GoldRecord {
    std::string id;
    std::vector<std::string> answers;
    std::string hard_answer;
};

struct QuestionScore {
    std::string id;
    double precision = 0, recall = 0, f1 = 0;
    bool hit_any = false, hit_hard = false;
    bool empty_prediction = false;
    bool missing = false;
};

struct MetricsReport {
    double hits_any = 0, precision = 0, recall = 0, f1 = 0, hits_hard = 0, hhr = 0;
    std::vector<QuestionScore> rows;  // gold order
    std::vector<std::string> missing_ids;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

/// Macro-averaged metrics. Missing predictions score as empty; duplicate
/// prediction ids and ids absent from the gold set are domain errors.
MetricsReport compute_report(std::span<const GoldRecord> gold, std::span<const PredictionRecord> preds);

}  // namespace kgqa
