#include "dstl/common.hpp"
#include "dstl/log.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <optional>

namespace dstl {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::Dimension: return "dimension mismatch";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::Io: return "i/o";
    case ErrorKind::Config: return "config";
    case ErrorKind::Numerical: return "numerical failure";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) fail(ErrorKind::InvalidInput, std::string(what) + " contains non-finite entries");
}

void require_finite(const Vector& v, std::string_view what) {
  if (!v.allFinite()) fail(ErrorKind::InvalidInput, std::string(what) + " contains non-finite entries");
}

namespace {
std::atomic<int> g_threads{0};
}

void set_thread_count(int threads) { g_threads = std::max(0, threads); }

int thread_count() {
  const int t = g_threads.load();
  if (t > 0) return t;
  return std::max(1u, std::thread::hardware_concurrency());
}

bool columns_equal(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

namespace log {
namespace {

std::optional<Level> g_level;
std::mutex g_mutex;

Level from_env() {
  const char* env = std::getenv("DSTL_LOG");
  if (env == nullptr) return Level::Info;
  if (std::strcmp(env, "error") == 0) return Level::Error;
  if (std::strcmp(env, "debug") == 0) return Level::Debug;
  return Level::Info;
}

const char* tag(Level level) {
  switch (level) {
    case Level::Error: return "error";
    case Level::Warn: return "warn";
    case Level::Info: return "info";
    case Level::Debug: return "debug";
  }
  return "";
}

}  // namespace

Level threshold() {
  std::lock_guard lock(g_mutex);
  if (!g_level) g_level = from_env();
  return *g_level;
}

void set_threshold(Level level) {
  std::lock_guard lock(g_mutex);
  g_level = level;
}

void write(Level level, const std::string& message) {
  std::lock_guard lock(g_mutex);
  std::cerr << "[dstl:" << tag(level) << "] " << message << '\n';
}

}  // namespace log
}  // namespace dstl
