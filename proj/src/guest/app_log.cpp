#include "fractal/guest/app_log.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include "fractal/common/error.hpp"
#include "fractal/kvstore/merge.hpp"

namespace fractal::guest {

namespace {

std::string encode_entry(double ts, const std::string& desc) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", ts);
  return std::string(buf) + "|" + desc;
}

LogEntry decode_entry(const std::string& id, const std::string& value) {
  const auto bar = value.find('|');
  if (bar == std::string::npos) raise(Errc::Malformed, "log entry without timestamp: " + id);
  return {id, std::strtod(value.substr(0, bar).c_str(), nullptr), value.substr(bar + 1)};
}

}  // namespace

kv::Path AppRepo::log_root() { return kv::Path{"app", "log"}; }

AppRepo::AppRepo(std::string owner)
    : owner_(std::move(owner)), store_(std::make_unique<kv::Store>(owner_)) {}

AppRepo::AppRepo(std::string owner, std::unique_ptr<kv::Store> store, kv::Snapshot base)
    : owner_(std::move(owner)), store_(std::move(store)), base_(std::move(base)) {}

std::unique_ptr<AppRepo> AppRepo::clone_for(std::string owner) const {
  auto copy = store_->clone(owner);
  auto base = store_->snapshot(log_root());
  return std::unique_ptr<AppRepo>(new AppRepo(std::move(owner), std::move(copy), std::move(base)));
}

std::string AppRepo::append(double ts, const std::string& desc) {
  auto id = owner_ + "#" + std::to_string(++seq_);
  store_->put(log_root() / id, encode_entry(ts, desc), owner_);
  return id;
}

std::vector<LogEntry> AppRepo::entries() const {
  std::vector<LogEntry> out;
  for (const auto& key : store_->keys_under(log_root()))
    out.push_back(decode_entry(key.segments().back(), *store_->get(key)));
  std::sort(out.begin(), out.end(),
            [](const LogEntry& a, const LogEntry& b) { return a.ts != b.ts ? a.ts < b.ts : a.id < b.id; });
  return out;
}

std::size_t AppRepo::size() const { return store_->keys_under(log_root()).size(); }

void AppRepo::merge_into(AppRepo& target) const {
  const auto ancestor = base_ ? *base_ : kv::Snapshot{log_root(), 0, {}};
  const auto merged = kv::merge(target.store_->snapshot(log_root()), store_->snapshot(log_root()), ancestor);
  target.store_->apply_merge(merged, store_->head(), target.owner_);
}

}  // namespace fractal::guest
