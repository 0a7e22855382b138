#include "kgqa/kg_store.hpp"

#include <algorithm>
#include <numeric>

#include <spdlog/spdlog.h>

#include "kgqa/common.hpp"

namespace kgqa {

std::string to_string(const Triple& t) { return t.predicate + "(" + t.subject + ", " + t.object + ")"; }

nlohmann::json to_json(const Triple& t) {
    return {{"subject", t.subject}, {"predicate", t.predicate}, {"object", t.object}};
}

Triple triple_from_json(const nlohmann::json& j) {
    return {j.at("subject").get<std::string>(), j.at("predicate").get<std::string>(),
            j.at("object").get<std::string>()};
}

namespace {

template <typename T>
std::span<const T> slice(const std::vector<T>& data, const std::vector<std::uint32_t>& offsets,
                         std::size_t key) {
    if (key + 1 >= offsets.size()) return {};
    return std::span<const T>(data.data() + offsets[key], offsets[key + 1] - offsets[key]);
}

// Range of edges with predicate p inside a (predicate, target)-sorted span.
std::pair<std::size_t, std::size_t> predicate_range(std::span<const Edge> edges, PredicateHandle p) {
    auto lo = std::lower_bound(edges.begin(), edges.end(), p,
                               [](const Edge& e, PredicateHandle q) { return e.predicate < q; });
    auto hi = std::upper_bound(lo, edges.end(), p,
                               [](PredicateHandle q, const Edge& e) { return q < e.predicate; });
    return {static_cast<std::size_t>(lo - edges.begin()), static_cast<std::size_t>(hi - edges.begin())};
}

}  // namespace

KnowledgeGraph KnowledgeGraph::from_triples(std::vector<Triple> triples, LoadStats* stats) {
    auto registry = std::make_shared<Registry>();
    for (const auto& t : triples) {
        registry->entities.push_back(t.subject);
        registry->entities.push_back(t.object);
        registry->predicates.push_back(t.predicate);
    }
    auto sort_unique = [](std::vector<std::string>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    sort_unique(registry->entities);
    sort_unique(registry->predicates);
    for (std::uint32_t i = 0; i < registry->entities.size(); ++i) registry->entity_index.emplace(registry->entities[i], i);
    for (std::uint32_t i = 0; i < registry->predicates.size(); ++i)
        registry->predicate_index.emplace(registry->predicates[i], i);

    std::vector<TripleRef> refs;
    refs.reserve(triples.size());
    for (const auto& t : triples) {
        refs.push_back({EntityHandle{registry->entity_index.at(t.subject)},
                        PredicateHandle{registry->predicate_index.at(t.predicate)},
                        EntityHandle{registry->entity_index.at(t.object)}});
    }
    std::sort(refs.begin(), refs.end());
    const std::size_t before = refs.size();
    refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
    if (stats) stats->duplicates = before - refs.size();
    return KnowledgeGraph(std::move(registry), std::move(refs));
}

KnowledgeGraph::KnowledgeGraph(std::shared_ptr<const Registry> registry, std::vector<TripleRef> sorted_unique)
    : registry_(std::move(registry)), triples_(std::move(sorted_unique)) {
    build_indices();
}

KnowledgeGraph KnowledgeGraph::with_registry(std::shared_ptr<const Registry> registry, const KnowledgeGraph& g) {
    if (registry->entities != g.registry_->entities || registry->predicates != g.registry_->predicates)
        throw std::invalid_argument("with_registry: id order differs");
    return KnowledgeGraph(std::move(registry), g.triples_);
}

void KnowledgeGraph::build_indices() {
    const std::size_t n_ent = registry_->entities.size();
    const std::size_t n_pred = registry_->predicates.size();

    membership_.clear();
    membership_.reserve(triples_.size() * 2);
    for (const auto& t : triples_) membership_.insert(t);

    // Outgoing: triples_ is sorted by (s, p, o) already.
    out_offsets_.assign(n_ent + 1, 0);
    for (const auto& t : triples_) ++out_offsets_[raw(t.subject) + 1];
    std::partial_sum(out_offsets_.begin(), out_offsets_.end(), out_offsets_.begin());
    out_edges_.resize(triples_.size());
    out_targets_.resize(triples_.size());
    for (std::size_t i = 0; i < triples_.size(); ++i) {
        out_edges_[i] = {triples_[i].predicate, triples_[i].object};
        out_targets_[i] = triples_[i].object;
    }

    // Incoming: sort by (o, p, s).
    std::vector<TripleRef> by_object = triples_;
    std::sort(by_object.begin(), by_object.end(), [](const TripleRef& a, const TripleRef& b) {
        return std::tie(a.object, a.predicate, a.subject) < std::tie(b.object, b.predicate, b.subject);
    });
    in_offsets_.assign(n_ent + 1, 0);
    for (const auto& t : by_object) ++in_offsets_[raw(t.object) + 1];
    std::partial_sum(in_offsets_.begin(), in_offsets_.end(), in_offsets_.begin());
    in_edges_.resize(by_object.size());
    in_targets_.resize(by_object.size());
    for (std::size_t i = 0; i < by_object.size(); ++i) {
        in_edges_[i] = {by_object[i].predicate, by_object[i].subject};
        in_targets_[i] = by_object[i].subject;
    }

    // Per-predicate facts sorted by (s, o).
    std::vector<TripleRef> by_pred = triples_;
    std::stable_sort(by_pred.begin(), by_pred.end(),
                     [](const TripleRef& a, const TripleRef& b) { return a.predicate < b.predicate; });
    fact_offsets_.assign(n_pred + 1, 0);
    for (const auto& t : by_pred) ++fact_offsets_[raw(t.predicate) + 1];
    std::partial_sum(fact_offsets_.begin(), fact_offsets_.end(), fact_offsets_.begin());
    facts_.resize(by_pred.size());
    for (std::size_t i = 0; i < by_pred.size(); ++i) facts_[i] = {by_pred[i].subject, by_pred[i].object};

    subj_dom_offsets_.assign(n_pred + 1, 0);
    obj_dom_offsets_.assign(n_pred + 1, 0);
    subj_dom_.clear();
    obj_dom_.clear();
    for (std::size_t p = 0; p < n_pred; ++p) {
        auto pairs = slice(facts_, fact_offsets_, p);
        std::vector<EntityHandle> subs, objs;
        subs.reserve(pairs.size());
        objs.reserve(pairs.size());
        for (const auto& pr : pairs) {
            subs.push_back(pr.subject);
            objs.push_back(pr.object);
        }
        subs.erase(std::unique(subs.begin(), subs.end()), subs.end());  // already sorted by subject
        std::sort(objs.begin(), objs.end());
        objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
        subj_dom_.insert(subj_dom_.end(), subs.begin(), subs.end());
        obj_dom_.insert(obj_dom_.end(), objs.begin(), objs.end());
        subj_dom_offsets_[p + 1] = static_cast<std::uint32_t>(subj_dom_.size());
        obj_dom_offsets_[p + 1] = static_cast<std::uint32_t>(obj_dom_.size());
    }
}

std::optional<EntityHandle> KnowledgeGraph::find_entity(std::string_view id) const {
    auto it = registry_->entity_index.find(std::string(id));
    if (it == registry_->entity_index.end()) return std::nullopt;
    return EntityHandle{it->second};
}

std::optional<PredicateHandle> KnowledgeGraph::find_predicate(std::string_view name) const {
    auto it = registry_->predicate_index.find(std::string(name));
    if (it == registry_->predicate_index.end()) return std::nullopt;
    return PredicateHandle{it->second};
}

const std::string& KnowledgeGraph::label(EntityHandle e) const {
    if (registry_->labels.empty()) return name(e);
    return registry_->labels[raw(e)];
}

std::optional<TripleRef> KnowledgeGraph::resolve(const Triple& t) const {
    auto s = find_entity(t.subject);
    auto p = find_predicate(t.predicate);
    auto o = find_entity(t.object);
    if (!s || !p || !o) return std::nullopt;
    return TripleRef{*s, *p, *o};
}

bool KnowledgeGraph::contains(const Triple& t) const {
    auto ref = resolve(t);
    return ref && contains(*ref);
}

Triple KnowledgeGraph::materialize(const TripleRef& t) const {
    return {name(t.subject), name(t.predicate), name(t.object)};
}

std::span<const Edge> KnowledgeGraph::out_edges(EntityHandle e) const { return slice(out_edges_, out_offsets_, raw(e)); }
std::span<const Edge> KnowledgeGraph::in_edges(EntityHandle e) const { return slice(in_edges_, in_offsets_, raw(e)); }

std::span<const EntityHandle> KnowledgeGraph::objects(EntityHandle s, PredicateHandle p) const {
    auto edges = out_edges(s);
    auto [lo, hi] = predicate_range(edges, p);
    if (lo == hi) return {};
    return std::span<const EntityHandle>(out_targets_.data() + out_offsets_[raw(s)] + lo, hi - lo);
}

std::span<const EntityHandle> KnowledgeGraph::subjects(EntityHandle o, PredicateHandle p) const {
    auto edges = in_edges(o);
    auto [lo, hi] = predicate_range(edges, p);
    if (lo == hi) return {};
    return std::span<const EntityHandle>(in_targets_.data() + in_offsets_[raw(o)] + lo, hi - lo);
}

std::span<const Pair> KnowledgeGraph::facts(PredicateHandle p) const { return slice(facts_, fact_offsets_, raw(p)); }
std::span<const EntityHandle> KnowledgeGraph::subject_domain(PredicateHandle p) const {
    return slice(subj_dom_, subj_dom_offsets_, raw(p));
}
std::span<const EntityHandle> KnowledgeGraph::object_domain(PredicateHandle p) const {
    return slice(obj_dom_, obj_dom_offsets_, raw(p));
}

std::vector<std::pair<std::string, std::string>> KnowledgeGraph::outgoing(std::string_view entity) const {
    std::vector<std::pair<std::string, std::string>> out;
    auto e = find_entity(entity);
    if (!e) return out;
    for (const auto& edge : out_edges(*e)) out.emplace_back(name(edge.predicate), name(edge.target));
    return out;
}

KnowledgeGraph KnowledgeGraph::remove_triples(std::span<const TripleRef> victims) const {
    std::unordered_set<TripleRef, TripleRefHash> drop;
    for (const auto& v : victims) {
        if (!contains(v)) throw domain_error("cannot remove missing triple " + to_string(materialize(v)));
        drop.insert(v);
    }
    std::vector<TripleRef> kept;
    kept.reserve(triples_.size() - drop.size());
    for (const auto& t : triples_)
        if (!drop.contains(t)) kept.push_back(t);
    return KnowledgeGraph(registry_, std::move(kept));
}

KnowledgeGraph KnowledgeGraph::remove_triples(std::span<const Triple> victims) const {
    std::vector<TripleRef> refs;
    refs.reserve(victims.size());
    for (const auto& v : victims) {
        auto ref = resolve(v);
        if (!ref || !contains(*ref)) throw domain_error("cannot remove missing triple " + to_string(v));
        refs.push_back(*ref);
    }
    return remove_triples(std::span<const TripleRef>(refs));
}

std::vector<Triple> KnowledgeGraph::to_triples() const {
    std::vector<Triple> out;
    out.reserve(triples_.size());
    for (const auto& t : triples_) out.push_back(materialize(t));
    return out;
}

std::string KnowledgeGraph::to_tsv() const {
    std::string out;
    for (const auto& t : triples_) {
        out += name(t.subject);
        out += '\t';
        out += name(t.predicate);
        out += '\t';
        out += name(t.object);
        out += '\n';
    }
    return out;
}

KnowledgeGraph parse_tsv(std::string_view text, LoadStats* stats) {
    std::vector<Triple> triples;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        std::size_t t1 = line.find('\t');
        std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
        if (t1 == std::string_view::npos || t2 == std::string_view::npos ||
            line.find('\t', t2 + 1) != std::string_view::npos) {
            throw ParseError(line_no, "expected 3 tab-separated fields");
        }
        Triple t{std::string(line.substr(0, t1)), std::string(line.substr(t1 + 1, t2 - t1 - 1)),
                 std::string(line.substr(t2 + 1))};
        if (t.subject.empty() || t.predicate.empty() || t.object.empty())
            throw ParseError(line_no, "empty field");
        triples.push_back(std::move(t));
    }
    if (triples.empty()) throw domain_error("empty graph");
    LoadStats local;
    auto g = KnowledgeGraph::from_triples(std::move(triples), &local);
    local.lines = line_no;
    if (local.duplicates > 0) spdlog::info("collapsed {} duplicate triples", local.duplicates);
    if (stats) *stats = local;
    return g;
}

KnowledgeGraph load_graph(const std::string& path, LoadStats* stats) { return parse_tsv(read_file(path), stats); }

void save_graph(const KnowledgeGraph& g, const std::string& path) { write_file(path, g.to_tsv()); }

Anonymization anonymize(const KnowledgeGraph& g, std::uint64_t seed) {
    const std::size_t n = g.entity_count();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(mix_seed(seed, 0xa17a));
    rng.shuffle(std::span<std::size_t>(perm));

    std::map<std::string, AnonymizationEntry> mapping;
    std::vector<std::string> new_ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        new_ids[i] = std::to_string(perm[i]);
        const EntityHandle e{static_cast<std::uint32_t>(i)};
        mapping.emplace(g.name(e), AnonymizationEntry{new_ids[i], g.label(e)});
    }

    std::vector<Triple> triples;
    triples.reserve(g.size());
    for (const auto& t : g.triples())
        triples.push_back({new_ids[raw(t.subject)], g.name(t.predicate), new_ids[raw(t.object)]});
    KnowledgeGraph anon = KnowledgeGraph::from_triples(std::move(triples));

    // Carry labels over as metadata on the new registry.
    auto reg = std::make_shared<Registry>(*anon.registry());
    reg->labels.resize(reg->entities.size());
    for (const auto& [orig, entry] : mapping) {
        auto it = reg->entity_index.find(entry.index);
        if (it != reg->entity_index.end()) reg->labels[it->second] = entry.label;
    }
    return Anonymization{KnowledgeGraph::with_registry(std::move(reg), anon), std::move(mapping)};
}

nlohmann::json mapping_to_json(const std::map<std::string, AnonymizationEntry>& mapping) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [orig, entry] : mapping) j[orig] = {{"index", entry.index}, {"label", entry.label}};
    return j;
}

}  // namespace kgqa
