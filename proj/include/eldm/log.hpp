#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace eldm {

// Level from ELDM_LOG (error|warn|info|debug); warn when unset or unknown.
inline spdlog::level::level_enum log_level_from_env() {
  const char* env = std::getenv("ELDM_LOG");
  if (env == nullptr) return spdlog::level::warn;
  const std::string v(env);
  if (v == "error") return spdlog::level::err;
  if (v == "warn") return spdlog::level::warn;
  if (v == "info") return spdlog::level::info;
  if (v == "debug") return spdlog::level::debug;
  return spdlog::level::warn;
}

/// Shared "eldm" logger writing to stderr. Tests attach extra sinks to it.
inline std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto existing = spdlog::get("eldm");
    if (existing) return existing;
    auto sink = std::make_shared<spdlog::sinks::stderr_sink_mt>();
    auto lg = std::make_shared<spdlog::logger>("eldm", sink);
    lg->set_pattern("[eldm] [%l] %v");
    lg->set_level(log_level_from_env());
    spdlog::register_logger(lg);
    return lg;
  }();
  return instance;
}

}  // namespace eldm
