#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>

#include "tinyattn/backbone.hpp"
#include "tinyattn/rng.hpp"

namespace tinyattn {

// Token id 0 is the CLS marker; payload tokens live in [1, vocab).
inline constexpr int kClsToken = 0;

enum class TaskRule {
  pretrain_nextset,  // which of 4 vocabulary partitions holds the majority, C=4
  majority,          // which of 2 partitions holds the majority, C=2
  match_pair,        // does any token value occur at two positions, C=2
  first_last,        // do first and last payload tokens share a partition, C=2
};

struct TaskSpec {
  std::string name;
  int64_t vocab = 64;    // V, including the CLS id
  int64_t seq_len = 16;  // T, payload length (CLS excluded)
  int64_t classes = 2;
  TaskRule rule = TaskRule::majority;
  uint64_t seed = 7;
};

// Known names: pretrain-nextset, majority, match-pair, first-last.
TaskSpec make_task(const std::string& name, int64_t vocab, int64_t seq_len, uint64_t seed);

// Partition index of a payload token when [1, vocab) is split into `parts`
// equal ranges: token * parts / vocab.
int partition_of(int token, int64_t parts, int64_t vocab);

// Pure label rule on the payload tokens (CLS excluded).
int oracle_label(const TaskSpec& spec, std::span<const int> payload);

// Draws batch_size labeled examples; ids come back CLS-prepended, labels
// recomputed through oracle_label. Identical rng state gives identical
// batches.
Batch generate_batch(const TaskSpec& spec, Rng& rng, int64_t batch_size);

// Fixed repository of examples, generated deterministically from
// (spec.seed, stream_tag). The trainer slices it into shuffled batches.
struct ExamplePool {
  int64_t count = 0;
  int64_t seq_len = 0;  // T+1, CLS included
  std::vector<int> ids;
  std::vector<int> labels;

  Batch batch_of(std::span<const int64_t> indices) const;
  Batch all() const;
};

ExamplePool generate_pool(const TaskSpec& spec, std::string_view stream_tag, int64_t count);

// One example per line: space-separated token ids (CLS included), a tab,
// then the label.
void export_corpus(const TaskSpec& spec, int64_t count, std::ostream& out);

}  // namespace tinyattn
