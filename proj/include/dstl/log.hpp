#pragma once

#include <iostream>
#include <sstream>
#include <string>

namespace dstl::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Reads DSTL_LOG (error|info|debug) once; defaults to info.
Level threshold();
void set_threshold(Level level);
void write(Level level, const std::string& message);

template <typename... Args>
void emit(Level level, const Args&... args) {
  if (static_cast<int>(level) > static_cast<int>(threshold())) return;
  std::ostringstream os;
  (os << ... << args);
  write(level, os.str());
}

template <typename... Args> void error(const Args&... a) { emit(Level::Error, a...); }
template <typename... Args> void warn(const Args&... a) { emit(Level::Warn, a...); }
template <typename... Args> void info(const Args&... a) { emit(Level::Info, a...); }
template <typename... Args> void debug(const Args&... a) { emit(Level::Debug, a...); }

}  // namespace dstl::log
