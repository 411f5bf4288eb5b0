#include "mixvi/util.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace mixvi {

namespace {
int g_max_threads = 1;
}

void set_max_threads(int threads) { g_max_threads = std::max(1, threads); }
int max_threads() { return g_max_threads; }

int64_t num_shards(int64_t n, int64_t shard_size) { return (n + shard_size - 1) / shard_size; }

void for_shards(int64_t n, const std::function<void(int64_t, int64_t, int64_t)>& work,
                const std::function<void(int64_t)>& combine, int64_t shard_size) {
  const int64_t shards = num_shards(n, shard_size);
  const int workers = static_cast<int>(std::min<int64_t>(g_max_threads, shards));
  if (workers <= 1) {
    for (int64_t s = 0; s < shards; ++s) {
      work(s, s * shard_size, std::min(n, (s + 1) * shard_size));
      if (combine) combine(s);
    }
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int64_t s = next.fetch_add(1);
        if (s >= shards) break;
        work(s, s * shard_size, std::min(n, (s + 1) * shard_size));
      }
    });
  }
  for (auto& t : pool) t.join();
  if (combine)
    for (int64_t s = 0; s < shards; ++s) combine(s);
}

std::string fmt_double(double v) {
  char buf[40];
  // %.17g round-trips every finite double
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

}  // namespace mixvi
