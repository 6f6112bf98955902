#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace descan {

/// Error raised for malformed or inconsistent input data. Carries the
/// offending file and (1-based) line when known.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what, std::string file = {}, std::size_t line = 0)
        : std::runtime_error(format(what, file, line)), file_(std::move(file)), line_(line) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& what, const std::string& file, std::size_t line) {
        std::string out;
        if (!file.empty()) {
            out += file;
            if (line > 0) out += ":" + std::to_string(line);
            out += ": ";
        } else if (line > 0) {
            out += "line " + std::to_string(line) + ": ";
        }
        return out + what;
    }

    std::string file_;
    std::size_t line_;
};

/// Shortest round-trip decimal representation of a double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

inline unsigned default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

/// Runs body(begin, end, worker) over [0, n) split into contiguous chunks.
/// Chunk boundaries depend only on n and the number of workers.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t, std::size_t, unsigned)>& body) {
    if (n == 0) return;
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::size_t>(n, 1024))));
    if (threads == 1) {
        body(0, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end, t] {
            try {
                body(begin, end, t);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Dynamic scheduling over independent tasks [0, n).
void parallel_tasks(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& task);

std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string trim(std::string_view s);
std::string read_file(const std::string& path);

}  // namespace descan
