#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "fractal/kvstore/store.hpp"

namespace fractal::kv {

// Resolves a key changed on both sides. Arguments are (ancestor, mine,
// theirs); nullopt means the key is absent on that side. Returning nullopt
// deletes the key. May throw Error(MergeConflict).
using MergeFn = std::function<std::optional<SnapshotEntry>(
    const std::optional<SnapshotEntry>&, const std::optional<SnapshotEntry>&,
    const std::optional<SnapshotEntry>&)>;

// Scalar default: the value written by the higher commit id wins; equal ids
// fall back to the larger value so the result does not depend on argument
// order. A deletion loses against a concurrent write.
std::optional<SnapshotEntry> last_writer_wins(const std::optional<SnapshotEntry>& ancestor,
                                              const std::optional<SnapshotEntry>& mine,
                                              const std::optional<SnapshotEntry>& theirs);

// Log values are bracketed lists of S(<entry-id>|...) items. The merge keeps
// every entry of `mine` in order, then appends entries of `theirs` whose id
// is not already present.
std::optional<SnapshotEntry> log_union(const std::optional<SnapshotEntry>& ancestor,
                                       const std::optional<SnapshotEntry>& mine,
                                       const std::optional<SnapshotEntry>& theirs);

// The id part of a log entry: everything before the first '|'.
std::string log_entry_id(const std::string& entry);

// Per-prefix merge functions; longest registered prefix wins, otherwise
// last_writer_wins.
class MergePolicy {
 public:
  MergePolicy& on_prefix(const Path& prefix, MergeFn fn);
  MergePolicy& log_prefix(const Path& prefix) { return on_prefix(prefix, log_union); }
  const MergeFn& resolve(const Path& key) const;

 private:
  std::map<Path, MergeFn> fns_;
  MergeFn fallback_ = last_writer_wins;
};

// Three-way merge of snapshots rooted at the same path. Keys changed on one
// side only take that side; keys changed on both go through the policy.
Snapshot merge(const Snapshot& mine, const Snapshot& theirs, const Snapshot& ancestor,
               const MergePolicy& policy = {});

}  // namespace fractal::kv
