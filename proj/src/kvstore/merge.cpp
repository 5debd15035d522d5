#include "fractal/kvstore/merge.hpp"

#include <set>

#include "fractal/common/error.hpp"
#include "fractal/kvstore/value_list.hpp"

namespace fractal::kv {

namespace {

std::optional<std::string> value_of(const std::optional<SnapshotEntry>& e) {
  if (!e) return std::nullopt;
  return e->value;
}

std::optional<SnapshotEntry> lookup(const Snapshot& s, const Path& key) {
  auto it = s.entries.find(key);
  if (it == s.entries.end()) return std::nullopt;
  return it->second;
}

}  // namespace

std::optional<SnapshotEntry> last_writer_wins(const std::optional<SnapshotEntry>&,
                                              const std::optional<SnapshotEntry>& mine,
                                              const std::optional<SnapshotEntry>& theirs) {
  if (!mine) return theirs;
  if (!theirs) return mine;
  if (mine->commit != theirs->commit) return mine->commit > theirs->commit ? mine : theirs;
  return mine->value >= theirs->value ? mine : theirs;
}

std::string log_entry_id(const std::string& entry) { return entry.substr(0, entry.find('|')); }

std::optional<SnapshotEntry> log_union(const std::optional<SnapshotEntry>&,
                                       const std::optional<SnapshotEntry>& mine,
                                       const std::optional<SnapshotEntry>& theirs) {
  if (!mine) return theirs;
  if (!theirs) return mine;
  auto merged = decode_list(mine->value);
  std::set<std::string> seen;
  for (const auto& item : merged) seen.insert(log_entry_id(item.text));
  for (auto& item : decode_list(theirs->value)) {
    if (seen.insert(log_entry_id(item.text)).second) merged.push_back(std::move(item));
  }
  return SnapshotEntry{encode_list(merged), std::max(mine->commit, theirs->commit)};
}

MergePolicy& MergePolicy::on_prefix(const Path& prefix, MergeFn fn) {
  fns_[prefix] = std::move(fn);
  return *this;
}

const MergeFn& MergePolicy::resolve(const Path& key) const {
  const MergeFn* best = &fallback_;
  std::size_t best_depth = 0;
  for (const auto& [prefix, fn] : fns_) {
    if (prefix.is_prefix_of(key) && prefix.depth() >= best_depth) {
      best = &fn;
      best_depth = prefix.depth();
    }
  }
  return *best;
}

Snapshot merge(const Snapshot& mine, const Snapshot& theirs, const Snapshot& ancestor,
               const MergePolicy& policy) {
  if (!(mine.root == theirs.root) || !(mine.root == ancestor.root))
    raise(Errc::InvalidArgument, "merge snapshots must share a root");

  std::set<Path> keys;
  for (const auto* s : {&mine, &theirs, &ancestor})
    for (const auto& [k, _] : s->entries) keys.insert(k);

  Snapshot out{mine.root, std::max(mine.head, theirs.head), {}};
  for (const auto& key : keys) {
    auto a = lookup(ancestor, key);
    auto m = lookup(mine, key);
    auto t = lookup(theirs, key);
    std::optional<SnapshotEntry> result;
    if (value_of(m) == value_of(t)) {
      result = (m && t && t->commit > m->commit) ? t : m;
    } else if (value_of(m) == value_of(a)) {
      result = t;
    } else if (value_of(t) == value_of(a)) {
      result = m;
    } else {
      result = policy.resolve(key)(a, m, t);
    }
    if (result) out.entries.emplace(key, *result);
  }
  return out;
}

}  // namespace fractal::kv
