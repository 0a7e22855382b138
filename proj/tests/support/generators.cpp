#include "support/generators.hpp"

#include <atomic>
#include <filesystem>
#include <random>

#include <unistd.h>

namespace testgen {

using kgqa::KnowledgeGraph;
using kgqa::Triple;

KnowledgeGraph random_graph(std::uint64_t seed, const GraphShape& shape) {
    std::mt19937_64 rng(seed);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    const std::size_t entities = pick(3, shape.max_entities);
    const std::size_t predicates = pick(1, shape.max_predicates);
    const std::size_t triples = pick(1, shape.max_triples);
    std::vector<Triple> out;
    for (std::size_t i = 0; i < triples; ++i)
        out.push_back({"e" + std::to_string(pick(0, entities - 1)), "p" + std::to_string(pick(0, predicates - 1)),
                       "e" + std::to_string(pick(0, entities - 1))});
    return KnowledgeGraph::from_triples(std::move(out));
}

KnowledgeGraph family_graph(std::uint64_t seed, std::size_t families) {
    std::mt19937_64 rng(seed);
    std::vector<Triple> out;
    for (std::size_t f = 0; f < families; ++f) {
        const std::string base = "f" + std::to_string(f) + "_";
        const std::string dad = base + "dad", mom = base + "mom", uncle = base + "uncle";
        out.push_back({dad, "hasSpouse", mom});
        out.push_back({mom, "hasSpouse", dad});
        out.push_back({dad, "hasSibling", uncle});
        out.push_back({uncle, "hasSibling", dad});
        const std::size_t kids = 1 + rng() % 3;
        for (std::size_t k = 0; k < kids; ++k) {
            const std::string kid = base + "kid" + std::to_string(k);
            out.push_back({kid, "hasParent", dad});
            out.push_back({kid, "hasParent", mom});
            out.push_back({kid, "hasUncle", uncle});
            out.push_back({dad, "hasChild", kid});
        }
    }
    return KnowledgeGraph::from_triples(std::move(out));
}

std::string fixture(const std::string& name) {
    return (std::filesystem::path(KGQA_SOURCE_DIR) / "tests" / "fixtures" / name).string();
}

std::string temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("kgqa_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace testgen
