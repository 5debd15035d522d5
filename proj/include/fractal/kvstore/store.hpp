#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fractal/kvstore/path.hpp"

namespace fractal::kv {

using Identity = std::string;
using CommitId = std::uint64_t;

struct Commit {
  CommitId id = 0;
  std::vector<CommitId> parents;  // empty for the root, 2 for a merge
  std::vector<Path> changed;
};

// Who may touch a subtree. The owner is implicitly a reader and a writer.
struct AccessScope {
  Identity owner;
  std::set<Identity> readers;
  std::set<Identity> writers;

  bool may_write(const Identity& who) const { return who == owner || writers.count(who) > 0; }
  bool may_read(const Identity& who) const {
    return who == owner || readers.count(who) > 0 || writers.count(who) > 0;
  }
};

struct WatchEvent {
  Path path;                         // the written key, or the removed subtree root
  std::optional<std::string> value;  // nullopt for removals
  CommitId commit = 0;
};

using WatchCallback = std::function<void(const WatchEvent&)>;

struct WatchHandle {
  std::uint64_t id = 0;
  Path target{"_"};
  enum class Mode { Key, Subtree } mode = Mode::Key;
};

struct SnapshotEntry {
  std::string value;
  CommitId commit = 0;  // commit that last wrote the value

  friend bool operator==(const SnapshotEntry&, const SnapshotEntry&) = default;
};

// Keys under `root` at a given head. Keys are absolute.
struct Snapshot {
  Path root{"_"};
  CommitId head = 0;
  std::map<Path, SnapshotEntry> entries;
};

// One element of a transactional commit: a put, or (value == nullopt) a
// subtree removal.
struct Mutation {
  Path path;
  std::optional<std::string> value;
};

// Single-writer hierarchical store. Every mutating call produces at most one
// commit; watch callbacks for a commit run synchronously, and commits made
// from inside a callback are delivered after the current commit's callbacks
// so every watcher sees the same commit order.
class Store {
 public:
  explicit Store(Identity admin);

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const Identity& admin() const { return admin_; }

  // Registers a scope for every path under `prefix`; the longest matching
  // prefix decides. Paths without a scope are writable only by the admin.
  void grant(const Path& prefix, AccessScope scope);
  bool may_write(const Path& path, const Identity& who) const;
  bool may_read(const Path& path, const Identity& who) const;

  Commit put(const Path& path, std::string value, const Identity& writer);
  Commit remove_subtree(const Path& path, const Identity& writer);
  // All-or-nothing: a permission failure on any mutation leaves the store
  // untouched.
  Commit transact(const std::vector<Mutation>& mutations, const Identity& writer);

  std::optional<std::string> get(const Path& path) const;
  bool contains_subtree(const Path& path) const;
  // Keys at or below `prefix`, in path order.
  std::vector<Path> keys_under(const Path& prefix) const;
  // Distinct child segment names directly under `prefix`.
  std::vector<std::string> children(const Path& prefix) const;
  std::size_t size() const { return data_.size(); }
  const std::map<Path, SnapshotEntry>& data() const { return data_; }

  WatchHandle watch_key(const Path& path, WatchCallback callback);
  WatchHandle watch_subtree(const Path& path, WatchCallback callback);
  void unwatch(const WatchHandle& handle);
  std::size_t watch_count() const { return watches_.size(); }

  Snapshot snapshot(const Path& root) const;
  // Replaces the subtree at merged.root with the merged contents as a
  // two-parent commit (head, other_parent).
  Commit apply_merge(const Snapshot& merged, CommitId other_parent, const Identity& writer);

  // Independent copy of data, scopes and commit counter; no watches.
  std::unique_ptr<Store> clone(Identity admin) const;

  CommitId head() const { return head_; }
  const std::vector<Commit>& history() const { return history_; }

 private:
  struct Watch {
    std::uint64_t id;
    Path target;
    WatchHandle::Mode mode;
    WatchCallback callback;
  };
  struct Pending {
    std::uint64_t watch_id;
    WatchEvent event;
  };

  WatchHandle add_watch(const Path& path, WatchHandle::Mode mode, WatchCallback callback);
  const AccessScope* scope_for(const Path& path) const;
  void check_write(const Path& path, const Identity& writer) const;
  Commit commit(const std::vector<Mutation>& mutations, std::vector<CommitId> parents,
                const Identity& writer);
  void deliver();

  Identity admin_;
  std::map<Path, SnapshotEntry> data_;
  std::map<Path, AccessScope> scopes_;
  std::map<std::uint64_t, std::shared_ptr<Watch>> watches_;
  std::uint64_t next_watch_ = 1;
  CommitId head_ = 0;
  std::vector<Commit> history_;
  std::deque<Pending> pending_;
  bool delivering_ = false;
};

}  // namespace fractal::kv
