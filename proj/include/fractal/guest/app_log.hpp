#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fractal/kvstore/store.hpp"

namespace fractal::guest {

struct LogEntry {
  std::string id;  // <owner>#<seq>, unique per instance
  double ts = 0.0;
  std::string desc;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

// An instance's application repository. The service log lives under app/log
// with one key per entry, so a three-way merge of two append-only logs is a
// plain union and never conflicts.
class AppRepo {
 public:
  explicit AppRepo(std::string owner);

  const std::string& owner() const { return owner_; }
  static kv::Path log_root();

  // A replica's repository: a copy of this one, remembering the copy point
  // as the merge ancestor.
  std::unique_ptr<AppRepo> clone_for(std::string owner) const;

  // Returns the new entry id.
  std::string append(double ts, const std::string& desc);
  // Entries ordered by (ts, id).
  std::vector<LogEntry> entries() const;
  std::size_t size() const;

  // Merges this log into `target` as a two-parent commit there.
  void merge_into(AppRepo& target) const;

  const kv::Store& store() const { return *store_; }

 private:
  AppRepo(std::string owner, std::unique_ptr<kv::Store> store, kv::Snapshot base);

  std::string owner_;
  std::unique_ptr<kv::Store> store_;
  std::optional<kv::Snapshot> base_;
  std::uint64_t seq_ = 0;
};

}  // namespace fractal::guest
