#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "migcdr/util/rng.hpp"

namespace migcdr {

// Error taxonomy shared by all modules.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, silent = 4 };

namespace detail {
struct LogState {
  LogLevel level = LogLevel::info;
  std::function<void(LogLevel, const std::string&)> sink;
  std::mutex mu;
};
inline LogState& log_state() {
  static LogState s;
  return s;
}
}  // namespace detail

inline void set_log_level(LogLevel lvl) { detail::log_state().level = lvl; }

/// Replaces the default stderr sink; pass an empty function to restore it.
inline void set_log_sink(std::function<void(LogLevel, const std::string&)> sink) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mu);
  s.sink = std::move(sink);
}

inline void log_message(LogLevel lvl, const std::string& msg) {
  auto& s = detail::log_state();
  if (lvl < s.level) return;
  std::lock_guard lock(s.mu);
  if (s.sink) {
    s.sink(lvl, msg);
    return;
  }
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

inline void log_info(const std::string& msg) { log_message(LogLevel::info, msg); }
inline void log_warn(const std::string& msg) { log_message(LogLevel::warn, msg); }

/// Runs f(i) for i in [0, n) on up to `threads` workers. Work is split into
/// contiguous blocks; callers write results into per-index slots so the
/// outcome is identical for every thread count.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * block;
    const std::size_t hi = std::min(n, lo + block);
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) f(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Streaming FNV-1a over file contents, used for artifact content hashes.
inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const auto got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace migcdr
