#include "kgqa/reasoning_env.hpp"

#include <algorithm>
#include <map>

#include "kgqa/common.hpp"

namespace kgqa {

void EnvConfig::validate() const {
    if (max_hop_limit < 1) throw usage_error("max hop limit must be >= 1");
    if (max_relation_paths < 1) throw usage_error("relation path cap must be >= 1");
    if (max_groundings_per_path < 1) throw usage_error("grounding cap must be >= 1");
}

RelationPath ReasoningPath::relation() const {
    RelationPath r;
    r.steps.reserve(hops.size());
    for (const auto& h : hops) r.steps.push_back(h.step);
    return r;
}

Environment::Environment(const KnowledgeGraph& g, EnvConfig cfg) : g_(g), cfg_(cfg) { cfg_.validate(); }

void Environment::check_hops(std::size_t hops) const {
    if (hops < 1 || hops > cfg_.max_hop_limit)
        throw domain_error("hop limit " + std::to_string(hops) + " outside [1, " +
                           std::to_string(cfg_.max_hop_limit) + "]");
}

std::string Environment::step_name(const PathStep& s) const {
    return s.inverse ? "inv_" + g_.name(s.predicate) : g_.name(s.predicate);
}

std::vector<std::string> Environment::sort_key(const RelationPath& p) const {
    std::vector<std::string> key;
    key.reserve(p.steps.size());
    for (const auto& s : p.steps) key.push_back(step_name(s));
    return key;
}

std::vector<RelationPath> Environment::explore(EntityHandle e, std::size_t hops) const {
    check_hops(hops);
    std::vector<RelationPath> out;

    // Paths of the current length mapped to the entities they can end at.
    std::map<RelationPath, std::set<EntityHandle>> level;
    level[RelationPath{}].insert(e);
    for (std::size_t depth = 1; depth <= hops && out.size() < cfg_.max_relation_paths; ++depth) {
        std::map<RelationPath, std::set<EntityHandle>> next;
        for (const auto& [path, ends] : level) {
            for (EntityHandle end : ends) {
                for (const Edge& edge : g_.out_edges(end)) {
                    RelationPath p = path;
                    p.steps.push_back({edge.predicate, false});
                    next[std::move(p)].insert(edge.target);
                }
                if (!cfg_.include_inverse) continue;
                for (const Edge& edge : g_.in_edges(end)) {
                    RelationPath p = path;
                    p.steps.push_back({edge.predicate, true});
                    next[std::move(p)].insert(edge.target);
                }
            }
        }
        std::vector<std::pair<std::vector<std::string>, const RelationPath*>> ordered;
        ordered.reserve(next.size());
        for (const auto& [path, ends] : next) ordered.emplace_back(sort_key(path), &path);
        std::sort(ordered.begin(), ordered.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [key, path] : ordered) {
            if (out.size() >= cfg_.max_relation_paths) break;
            out.push_back(*path);
        }
        level = std::move(next);
    }
    return out;
}

std::vector<RelationPath> Environment::explore(std::string_view entity, std::size_t hops) const {
    check_hops(hops);
    auto e = g_.find_entity(entity);
    if (!e) return {};
    return explore(*e, hops);
}

GroundResult Environment::ground(EntityHandle e, std::span<const RelationPath> paths) const {
    GroundResult result;
    std::set<ReasoningPath> seen;
    for (const RelationPath& rp : paths) {
        if (rp.steps.empty()) continue;
        std::size_t found = 0;
        std::vector<Hop> hops;
        auto dfs = [&](auto&& self, EntityHandle at, std::size_t i) -> bool {
            if (i == rp.steps.size()) {
                ReasoningPath path{hops};
                if (seen.insert(path).second) result.paths.push_back(std::move(path));
                return ++found < cfg_.max_groundings_per_path;
            }
            const PathStep& step = rp.steps[i];
            auto next = step.inverse ? g_.subjects(at, step.predicate) : g_.objects(at, step.predicate);
            for (EntityHandle to : next) {
                hops.push_back({at, step, to});
                const bool go_on = self(self, to, i + 1);
                hops.pop_back();
                if (!go_on) return false;
            }
            return true;
        };
        dfs(dfs, e, 0);
    }
    for (const auto& p : result.paths)
        for (const auto& h : p.hops) {
            result.entities.insert(h.from);
            result.entities.insert(h.to);
        }
    result.entities.erase(e);
    return result;
}

std::string Environment::format(const RelationPath& p) const {
    std::string out;
    for (std::size_t i = 0; i < p.steps.size(); ++i) {
        if (i) out += " -> ";
        out += step_name(p.steps[i]);
    }
    return out;
}

std::string Environment::format(const ReasoningPath& p) const {
    std::string out;
    for (std::size_t i = 0; i < p.hops.size(); ++i) {
        if (i) out += " ; ";
        const TripleRef t = p.hops[i].triple();
        out += "(" + g_.name(t.subject) + ", " + g_.name(t.predicate) + ", " + g_.name(t.object) + ")";
    }
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\'' || s.front() == '"'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\'' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

}  // namespace

std::optional<RelationPath> Environment::parse_relation_path(std::string_view text) const {
    RelationPath path;
    std::size_t pos = 0;
    while (true) {
        const std::size_t arrow = text.find("->", pos);
        const std::string_view part = trim(text.substr(pos, arrow == std::string_view::npos ? arrow : arrow - pos));
        if (part.empty()) return std::nullopt;
        if (auto p = g_.find_predicate(part)) {
            path.steps.push_back({*p, false});
        } else if (cfg_.include_inverse && part.starts_with("inv_")) {
            auto q = g_.find_predicate(part.substr(4));
            if (!q) return std::nullopt;
            path.steps.push_back({*q, true});
        } else {
            return std::nullopt;
        }
        if (arrow == std::string_view::npos) break;
        pos = arrow + 2;
    }
    return path;
}

std::string format_string_list(std::span<const std::string> items) {
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += "'" + items[i] + "'";
    }
    return out + "]";
}

AgentState initial_state(EntityHandle topic) {
    AgentState s;
    s.E.insert(topic);
    return s;
}

AgentState apply_transition(AgentState s, const TransitionInput& input) {
    if (s.terminal) throw domain_error("transition on a terminal state");
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, ExploreOutcome>) {
                for (const auto& p : r.paths) s.P.emplace(r.start, p);
            } else if constexpr (std::is_same_v<T, GroundResult>) {
                for (const auto& p : r.paths) {
                    s.C.insert(p);
                    for (const auto& h : p.hops) {
                        s.E.insert(h.from);
                        s.E.insert(h.to);
                    }
                }
            } else {
                s.terminal = true;
            }
        },
        input);
    return s;
}

std::string state_digest(const AgentState& s, const Environment& env) {
    const KnowledgeGraph& g = env.graph();
    std::string text = "P";
    for (const auto& [start, path] : s.P) text += "\n" + g.name(start) + "\t" + env.format(path);
    text += "\nC";
    for (const auto& path : s.C) text += "\n" + env.format(path);
    text += "\nE";
    for (EntityHandle e : s.E) text += "\n" + g.name(e);
    text += s.terminal ? "\nterminal" : "\nopen";
    return sha256_hex(text);
}

}  // namespace kgqa
