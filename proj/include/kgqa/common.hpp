#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kgqa {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
    domain,    // bad input data, violated precondition
    usage,     // bad flags / configuration
    parse,     // malformed file content
    endpoint,  // external text-generation service failed
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EndpointError : public Error {
public:
    EndpointError(const std::string& what, bool retriable)
        : Error(ErrorKind::endpoint, what), retriable_(retriable) {}
    bool retriable() const noexcept { return retriable_; }

private:
    bool retriable_;
};

inline Error domain_error(const std::string& what) { return Error(ErrorKind::domain, what); }
inline Error usage_error(const std::string& what) { return Error(ErrorKind::usage, what); }

// Seeded randomness with draws that do not depend on the standard library's
// distribution implementations, so artifacts are identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    bool coin() { return (engine_() >> 63) != 0; }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// First k positions of a partial Fisher-Yates over [0, n).
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t fnv1a(std::string_view text);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware concurrency).
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace kgqa
