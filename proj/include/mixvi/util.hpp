#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace mixvi {

// Global worker-thread cap for shard-parallel loops (1 = serial). The shard
// partition is fixed by the data, not the thread count, and reductions run
// in shard order, so results are identical for any thread count.
void set_max_threads(int threads);
int max_threads();

// Splits [0, n) into fixed-size shards, runs `work(shard_index, begin, end)`
// possibly in parallel, then `combine(shard_index)` serially in shard order.
void for_shards(int64_t n, const std::function<void(int64_t, int64_t, int64_t)>& work,
                const std::function<void(int64_t)>& combine = nullptr, int64_t shard_size = 256);
int64_t num_shards(int64_t n, int64_t shard_size = 256);

// Shortest-round-trip decimal formatting; used by every writer so reruns
// are byte-identical.
std::string fmt_double(double v);

std::string join_csv(const std::vector<std::string>& fields);

}  // namespace mixvi
