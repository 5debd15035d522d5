#include "fractal/kvstore/store.hpp"

#include "fractal/common/error.hpp"

namespace fractal::kv {

Store::Store(Identity admin) : admin_(std::move(admin)) {}

void Store::grant(const Path& prefix, AccessScope scope) { scopes_[prefix] = std::move(scope); }

const AccessScope* Store::scope_for(const Path& path) const {
  const AccessScope* best = nullptr;
  std::size_t best_depth = 0;
  for (const auto& [prefix, scope] : scopes_) {
    if (prefix.is_prefix_of(path) && prefix.depth() >= best_depth) {
      best = &scope;
      best_depth = prefix.depth();
    }
  }
  return best;
}

bool Store::may_write(const Path& path, const Identity& who) const {
  if (who == admin_) return true;
  const auto* scope = scope_for(path);
  return scope != nullptr && scope->may_write(who);
}

bool Store::may_read(const Path& path, const Identity& who) const {
  if (who == admin_) return true;
  const auto* scope = scope_for(path);
  return scope != nullptr && scope->may_read(who);
}

void Store::check_write(const Path& path, const Identity& writer) const {
  if (!may_write(path, writer))
    raise(Errc::PermissionDenied, writer + " may not write " + path.str() + " on store of " + admin_);
}

Commit Store::put(const Path& path, std::string value, const Identity& writer) {
  return transact({Mutation{path, std::move(value)}}, writer);
}

Commit Store::remove_subtree(const Path& path, const Identity& writer) {
  return transact({Mutation{path, std::nullopt}}, writer);
}

Commit Store::transact(const std::vector<Mutation>& mutations, const Identity& writer) {
  std::vector<CommitId> parents;
  if (head_ > 0) parents.push_back(head_);
  return commit(mutations, std::move(parents), writer);
}

Commit Store::commit(const std::vector<Mutation>& mutations, std::vector<CommitId> parents,
                     const Identity& writer) {
  for (const auto& m : mutations) {
    check_write(m.path, writer);
    if (!m.value) {
      for (const auto& key : keys_under(m.path)) check_write(key, writer);
    }
  }

  struct Change {
    Path path;
    std::optional<std::string> value;
    std::vector<Path> removed;
  };
  const CommitId id = head_ + 1;
  std::vector<Change> changes;
  for (const auto& m : mutations) {
    if (m.value) {
      data_[m.path] = SnapshotEntry{*m.value, id};
      changes.push_back({m.path, m.value, {}});
    } else {
      auto removed = keys_under(m.path);
      if (removed.empty()) continue;
      for (const auto& key : removed) data_.erase(key);
      changes.push_back({m.path, std::nullopt, std::move(removed)});
    }
  }
  if (changes.empty()) return Commit{head_, {}, {}};

  head_ = id;
  Commit c{id, std::move(parents), {}};
  for (const auto& ch : changes) {
    if (ch.value) {
      c.changed.push_back(ch.path);
    } else {
      c.changed.insert(c.changed.end(), ch.removed.begin(), ch.removed.end());
    }
  }
  history_.push_back(c);

  for (const auto& ch : changes) {
    for (const auto& [wid, w] : watches_) {
      if (ch.value) {
        const bool hit = w->mode == WatchHandle::Mode::Key ? w->target == ch.path
                                                           : w->target.is_prefix_of(ch.path);
        if (hit) pending_.push_back({wid, WatchEvent{ch.path, ch.value, id}});
        continue;
      }
      if (w->mode == WatchHandle::Mode::Key) {
        for (const auto& key : ch.removed) {
          if (key == w->target) pending_.push_back({wid, WatchEvent{key, std::nullopt, id}});
        }
        continue;
      }
      bool overlaps = w->target.is_prefix_of(ch.path);
      for (std::size_t i = 0; !overlaps && i < ch.removed.size(); ++i)
        overlaps = w->target.is_prefix_of(ch.removed[i]);
      if (overlaps) pending_.push_back({wid, WatchEvent{ch.path, std::nullopt, id}});
    }
  }
  deliver();
  return c;
}

void Store::deliver() {
  if (delivering_) return;
  delivering_ = true;
  struct Reset {
    bool& flag;
    ~Reset() { flag = false; }
  } reset{delivering_};
  while (!pending_.empty()) {
    Pending next = std::move(pending_.front());
    pending_.pop_front();
    auto it = watches_.find(next.watch_id);
    if (it == watches_.end()) continue;
    auto watch = it->second;
    watch->callback(next.event);
  }
}

std::optional<std::string> Store::get(const Path& path) const {
  auto it = data_.find(path);
  if (it == data_.end()) return std::nullopt;
  return it->second.value;
}

bool Store::contains_subtree(const Path& path) const {
  auto it = data_.lower_bound(path);
  return it != data_.end() && path.is_prefix_of(it->first);
}

std::vector<Path> Store::keys_under(const Path& prefix) const {
  std::vector<Path> out;
  for (auto it = data_.lower_bound(prefix); it != data_.end() && prefix.is_prefix_of(it->first);
       ++it) {
    out.push_back(it->first);
  }
  return out;
}

std::vector<std::string> Store::children(const Path& prefix) const {
  std::vector<std::string> out;
  const auto depth = prefix.depth();
  for (const auto& key : keys_under(prefix)) {
    if (key.depth() <= depth) continue;
    const auto& seg = key.segments()[depth];
    if (out.empty() || out.back() != seg) out.push_back(seg);
  }
  return out;
}

WatchHandle Store::add_watch(const Path& path, WatchHandle::Mode mode, WatchCallback callback) {
  const auto id = next_watch_++;
  watches_[id] = std::make_shared<Watch>(Watch{id, path, mode, std::move(callback)});
  return WatchHandle{id, path, mode};
}

WatchHandle Store::watch_key(const Path& path, WatchCallback callback) {
  return add_watch(path, WatchHandle::Mode::Key, std::move(callback));
}

WatchHandle Store::watch_subtree(const Path& path, WatchCallback callback) {
  return add_watch(path, WatchHandle::Mode::Subtree, std::move(callback));
}

void Store::unwatch(const WatchHandle& handle) { watches_.erase(handle.id); }

Snapshot Store::snapshot(const Path& root) const {
  Snapshot snap{root, head_, {}};
  for (auto it = data_.lower_bound(root); it != data_.end() && root.is_prefix_of(it->first); ++it)
    snap.entries.emplace(it->first, it->second);
  return snap;
}

Commit Store::apply_merge(const Snapshot& merged, CommitId other_parent, const Identity& writer) {
  std::vector<Mutation> muts;
  for (const auto& key : keys_under(merged.root)) {
    if (!merged.entries.count(key)) muts.push_back({key, std::nullopt});
  }
  for (const auto& [key, entry] : merged.entries) {
    if (!merged.root.is_prefix_of(key))
      raise(Errc::InvalidArgument, "merged key outside root: " + key.str());
    auto cur = data_.find(key);
    if (cur == data_.end() || cur->second.value != entry.value) muts.push_back({key, entry.value});
  }
  std::vector<CommitId> parents{head_, other_parent};
  if (muts.empty()) {
    // Nothing changes locally; the merge commit is still recorded.
    check_write(merged.root, writer);
    head_ += 1;
    Commit c{head_, std::move(parents), {}};
    history_.push_back(c);
    return c;
  }
  return commit(muts, std::move(parents), writer);
}

std::unique_ptr<Store> Store::clone(Identity admin) const {
  auto copy = std::make_unique<Store>(std::move(admin));
  copy->data_ = data_;
  copy->scopes_ = scopes_;
  copy->head_ = head_;
  copy->history_ = history_;
  return copy;
}

}  // namespace fractal::kv
