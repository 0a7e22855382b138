#include "kgqa/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "kgqa/common.hpp"

namespace kgqa {

namespace {

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

std::vector<std::string_view> split_any(std::string_view s, std::string_view delims) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t end = s.find_first_of(delims, start);
        parts.push_back(s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return parts;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (std::size_t pos; (pos = s.find("<pad>")) != std::string::npos;) s.replace(pos, 5, " ");
    std::erase_if(s, [](unsigned char c) { return c < 0x80 && std::ispunct(c); });

    std::string out;
    std::istringstream words(s);
    for (std::string w; words >> w;) {
        if (is_article(w)) continue;
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::set<std::string> normalize_prediction(std::string_view raw) {
    const bool delimited = raw.find_first_of(",\n") != std::string_view::npos;
    std::set<std::string> out;
    for (std::string_view piece : split_any(raw, delimited ? ",\n" : " \t\r\n")) {
        std::string n = normalize_answer(piece);
        if (!n.empty()) out.insert(std::move(n));
    }
    return out;
}

std::set<std::string> normalize_list(std::span<const std::string> items) {
    std::set<std::string> out;
    for (const auto& item : items) {
        std::string n = normalize_answer(item);
        if (!n.empty()) out.insert(std::move(n));
    }
    return out;
}

std::set<std::string> PredictionRecord::normalized() const {
    if (const auto* raw = std::get_if<std::string>(&output)) return normalize_prediction(*raw);
    return normalize_list(std::get<std::vector<std::string>>(output));
}

MetricsReport compute_report(std::span<const GoldRecord> gold, std::span<const PredictionRecord> preds) {
    std::map<std::string, const PredictionRecord*> by_id;
    std::vector<std::string> duplicates;
    for (const auto& p : preds)
        if (!by_id.emplace(p.id, &p).second) duplicates.push_back(p.id);
    if (!duplicates.empty()) throw domain_error("duplicate prediction ids: " + fmt::format("{}", fmt::join(duplicates, ",")));

    std::set<std::string> gold_ids;
    for (const auto& g : gold) gold_ids.insert(g.id);
    std::vector<std::string> unknown;
    for (const auto& [id, p] : by_id)
        if (!gold_ids.contains(id)) unknown.push_back(id);
    if (!unknown.empty()) throw domain_error("prediction ids not in gold set: " + fmt::format("{}", fmt::join(unknown, ",")));

    MetricsReport report;
    for (const auto& g : gold) {
        QuestionScore row;
        row.id = g.id;
        std::set<std::string> predicted;
        auto it = by_id.find(g.id);
        if (it == by_id.end()) {
            row.missing = true;
            report.missing_ids.push_back(g.id);
        } else {
            predicted = it->second->normalized();
        }
        const std::set<std::string> answers = normalize_list(g.answers);
        const std::string hard = normalize_answer(g.hard_answer);

        std::size_t overlap = 0;
        for (const auto& p : predicted) overlap += answers.contains(p);
        row.empty_prediction = predicted.empty();
        row.precision = predicted.empty() ? 0.0 : double(overlap) / double(predicted.size());
        row.recall = answers.empty() ? 0.0 : double(overlap) / double(answers.size());
        row.f1 = overlap == 0 ? 0.0 : 2.0 * row.precision * row.recall / (row.precision + row.recall);
        row.hit_any = overlap > 0;
        row.hit_hard = !hard.empty() && predicted.contains(hard);
        report.rows.push_back(row);
    }

    if (!report.rows.empty()) {
        const double n = double(report.rows.size());
        std::size_t any = 0, hard = 0;
        double p = 0, r = 0, f = 0;
        for (const auto& row : report.rows) {
            any += row.hit_any;
            hard += row.hit_hard && row.hit_any;
            p += row.precision;
            r += row.recall;
            f += row.f1;
        }
        report.hits_any = double(any) / n;
        report.hits_hard = double(hard) / n;
        report.precision = p / n;
        report.recall = r / n;
        report.f1 = f / n;
        report.hhr = any == 0 ? 0.0 : double(hard) / double(any);
    }
    return report;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows)
        rows_json.push_back({{"id", r.id},
                             {"precision", r.precision},
                             {"recall", r.recall},
                             {"f1", r.f1},
                             {"hit_any", r.hit_any},
                             {"hit_hard", r.hit_hard},
                             {"empty_prediction", r.empty_prediction},
                             {"missing", r.missing}});
    return {{"metrics",
             {{"hits_any", hits_any},
              {"precision", precision},
              {"recall", recall},
              {"f1", f1},
              {"hits_hard", hits_hard},
              {"hhr", hhr}}},
            {"questions", rows.size()},
            {"missing_ids", missing_ids},
            {"normalization",
             {{"split", "commas/newlines; whitespace only when no comma or newline is present"},
              {"empty_prediction_precision", 0},
              {"articles", "whole tokens"}}},
            {"rows", rows_json}};
}

std::string MetricsReport::to_csv() const {
    std::string out = "id,precision,recall,f1,hit_any,hit_hard,empty_prediction,missing\n";
    for (const auto& r : rows)
        out += fmt::format("{},{:.6f},{:.6f},{:.6f},{},{},{},{}\n", r.id, r.precision, r.recall, r.f1, int(r.hit_any),
                           int(r.hit_hard), int(r.empty_prediction), int(r.missing));
    return out;
}

}  // namespace kgqa
