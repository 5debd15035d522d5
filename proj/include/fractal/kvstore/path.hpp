#pragma once

#include <compare>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace fractal::kv {

// A slash-separated key such as jitsu/vms/HOSTNAME/state. Never empty, and no
// segment is empty or contains '/'.
class Path {
 public:
  Path(std::initializer_list<std::string> segments);
  explicit Path(std::vector<std::string> segments);

  // Parses "a/b/c". Leading and trailing slashes are tolerated.
  static Path parse(std::string_view text);

  const std::vector<std::string>& segments() const { return segments_; }
  std::size_t depth() const { return segments_.size(); }
  const std::string& leaf() const { return segments_.back(); }

  Path child(std::string_view segment) const;
  Path operator/(std::string_view segment) const { return child(segment); }

  // True if this path equals `other` or is one of its ancestors.
  bool is_prefix_of(const Path& other) const;

  std::string str() const;

  friend bool operator==(const Path&, const Path&) = default;
  friend std::strong_ordering operator<=>(const Path& a, const Path& b) {
    return a.segments_ <=> b.segments_;
  }

 private:
  static void check_segment(std::string_view segment);

  std::vector<std::string> segments_;
};

}  // namespace fractal::kv
