#include "tinyattn/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <vector>

namespace tinyattn {

namespace {

// First T entries of a Fisher-Yates pass over [1, vocab): distinct tokens.
std::vector<int> sample_distinct(Rng& rng, int64_t vocab, int64_t count) {
  std::vector<int> pool(static_cast<size_t>(vocab - 1));
  std::iota(pool.begin(), pool.end(), 1);
  for (int64_t i = 0; i < count; ++i) {
    int64_t j = i + rng.uniform_int(static_cast<int64_t>(pool.size()) - i);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(count));
  return pool;
}

// Uniform token from one partition of [1, vocab).
int sample_from_partition(Rng& rng, int64_t vocab, int64_t parts, int64_t part) {
  // partition_of is monotone in the token, so the members form a range.
  int lo = 1;
  while (partition_of(lo, parts, vocab) < part) ++lo;
  int hi = lo;
  while (hi + 1 < vocab && partition_of(hi + 1, parts, vocab) == part) ++hi;
  return lo + static_cast<int>(rng.uniform_int(hi - lo + 1));
}

std::vector<int> gen_payload(const TaskSpec& spec, Rng& rng) {
  const int64_t T = spec.seq_len, V = spec.vocab;
  std::vector<int> p(static_cast<size_t>(T));
  switch (spec.rule) {
    case TaskRule::pretrain_nextset: {
      // Plant a strict majority from one partition, fill the rest anywhere.
      const int64_t target = rng.uniform_int(4);
      const int64_t planted = (T * 3 + 4) / 5;  // ceil(0.6 T), > T - planted
      for (int64_t i = 0; i < T; ++i)
        p[i] = i < planted ? sample_from_partition(rng, V, 4, target)
                           : 1 + static_cast<int>(rng.uniform_int(V - 1));
      rng.shuffle(p);
      break;
    }
    case TaskRule::majority: {
      const int64_t target = rng.uniform_int(2);
      for (int64_t i = 0; i < T; ++i) {
        const bool keep = rng.uniform(0.0, 1.0) < 0.75;
        p[i] = sample_from_partition(rng, V, 2, keep ? target : 1 - target);
      }
      break;
    }
    case TaskRule::match_pair: {
      p = sample_distinct(rng, V, T);
      if (rng.uniform_int(2) == 1) {
        // Plant 1..3 duplicated values; the last copy always survives, so
        // at least one value ends up at two distinct positions.
        const int64_t dups = 1 + rng.uniform_int(3);
        for (int64_t d = 0; d < dups; ++d) {
          const int64_t src = rng.uniform_int(T);
          int64_t dst = rng.uniform_int(T - 1);
          if (dst >= src) ++dst;
          p[static_cast<size_t>(dst)] = p[static_cast<size_t>(src)];
        }
      }
      break;
    }
    case TaskRule::first_last: {
      for (int64_t i = 0; i < T; ++i) p[i] = 1 + static_cast<int>(rng.uniform_int(V - 1));
      const int first_part = partition_of(p[0], 2, V);
      const int64_t want_same = rng.uniform_int(2);
      p.back() = sample_from_partition(rng, V, 2, want_same ? first_part : 1 - first_part);
      break;
    }
  }
  return p;
}

}  // namespace

TaskSpec make_task(const std::string& name, int64_t vocab, int64_t seq_len, uint64_t seed) {
  if (vocab < 8) throw std::invalid_argument("make_task: vocabulary too small");
  if (seq_len < 2) throw std::invalid_argument("make_task: sequence length too small");
  TaskSpec s;
  s.name = name;
  s.vocab = vocab;
  s.seq_len = seq_len;
  s.seed = seed;
  if (name == "pretrain-nextset") {
    s.rule = TaskRule::pretrain_nextset;
    s.classes = 4;
  } else if (name == "majority") {
    s.rule = TaskRule::majority;
    s.classes = 2;
  } else if (name == "match-pair") {
    s.rule = TaskRule::match_pair;
    s.classes = 2;
    if (vocab - 1 < seq_len)
      throw std::invalid_argument("match-pair: needs vocab - 1 >= seq_len for distinct payloads");
  } else if (name == "first-last") {
    s.rule = TaskRule::first_last;
    s.classes = 2;
  } else {
    throw std::invalid_argument("unknown task '" + name +
                                "' (pretrain-nextset|majority|match-pair|first-last)");
  }
  return s;
}

int partition_of(int token, int64_t parts, int64_t vocab) {
  if (token < 1 || token >= vocab) throw std::invalid_argument("partition_of: token outside payload range");
  return static_cast<int>(token * parts / vocab);
}

int oracle_label(const TaskSpec& spec, std::span<const int> payload) {
  if (static_cast<int64_t>(payload.size()) != spec.seq_len)
    throw std::invalid_argument("oracle_label: payload length mismatch");
  switch (spec.rule) {
    case TaskRule::pretrain_nextset: {
      int counts[4] = {0, 0, 0, 0};
      for (int t : payload) ++counts[partition_of(t, 4, spec.vocab)];
      int best = 0;
      for (int c = 1; c < 4; ++c)
        if (counts[c] > counts[best]) best = c;  // ties resolve to the lowest id
      return best;
    }
    case TaskRule::majority: {
      int high = 0;
      for (int t : payload) high += partition_of(t, 2, spec.vocab);
      const int low = static_cast<int>(payload.size()) - high;
      return high > low ? 1 : 0;
    }
    case TaskRule::match_pair: {
      std::vector<uint8_t> seen(static_cast<size_t>(spec.vocab), 0);
      for (int t : payload) {
        if (seen[static_cast<size_t>(t)]) return 1;
        seen[static_cast<size_t>(t)] = 1;
      }
      return 0;
    }
    case TaskRule::first_last:
      return partition_of(payload.front(), 2, spec.vocab) ==
                     partition_of(payload.back(), 2, spec.vocab)
                 ? 1
                 : 0;
  }
  throw std::invalid_argument("oracle_label: unknown rule");
}

Batch generate_batch(const TaskSpec& spec, Rng& rng, int64_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("generate_batch: batch_size must be >= 1");
  Batch b;
  b.batch = batch_size;
  b.seq_len = spec.seq_len + 1;
  b.ids.reserve(static_cast<size_t>(batch_size * b.seq_len));
  b.labels.reserve(static_cast<size_t>(batch_size));
  for (int64_t i = 0; i < batch_size; ++i) {
    std::vector<int> payload = gen_payload(spec, rng);
    b.ids.push_back(kClsToken);
    b.ids.insert(b.ids.end(), payload.begin(), payload.end());
    b.labels.push_back(oracle_label(spec, payload));
  }
  return b;
}

Batch ExamplePool::batch_of(std::span<const int64_t> indices) const {
  Batch b;
  b.batch = static_cast<int64_t>(indices.size());
  b.seq_len = seq_len;
  b.ids.reserve(indices.size() * static_cast<size_t>(seq_len));
  for (int64_t i : indices) {
    b.ids.insert(b.ids.end(), ids.begin() + i * seq_len, ids.begin() + (i + 1) * seq_len);
    b.labels.push_back(labels[static_cast<size_t>(i)]);
  }
  return b;
}

Batch ExamplePool::all() const {
  std::vector<int64_t> idx(static_cast<size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);
  return batch_of(idx);
}

ExamplePool generate_pool(const TaskSpec& spec, std::string_view stream_tag, int64_t count) {
  Rng rng(derive_seed(spec.seed, stream_tag));
  Batch b = generate_batch(spec, rng, count);
  ExamplePool pool;
  pool.count = count;
  pool.seq_len = b.seq_len;
  pool.ids = std::move(b.ids);
  pool.labels = std::move(b.labels);
  return pool;
}

void export_corpus(const TaskSpec& spec, int64_t count, std::ostream& out) {
  Rng rng(derive_seed(spec.seed, "export"));
  Batch b = generate_batch(spec, rng, count);
  for (int64_t i = 0; i < count; ++i) {
    for (int64_t t = 0; t < b.seq_len; ++t) {
      if (t) out << ' ';
      out << b.ids[static_cast<size_t>(i * b.seq_len + t)];
    }
    out << '\t' << b.labels[static_cast<size_t>(i)] << '\n';
  }
}

}  // namespace tinyattn
