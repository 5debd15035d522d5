#include "fractal/kvstore/path.hpp"

#include <algorithm>

#include "fractal/common/error.hpp"

namespace fractal::kv {

Path::Path(std::initializer_list<std::string> segments)
    : Path(std::vector<std::string>(segments)) {}

Path::Path(std::vector<std::string> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) raise(Errc::InvalidArgument, "path must have depth >= 1");
  for (const auto& s : segments_) check_segment(s);
}

void Path::check_segment(std::string_view segment) {
  if (segment.empty()) raise(Errc::InvalidArgument, "empty path segment");
  if (segment.find('/') != std::string_view::npos)
    raise(Errc::InvalidArgument, "path segment contains '/': " + std::string(segment));
}

Path Path::parse(std::string_view text) {
  while (!text.empty() && text.front() == '/') text.remove_prefix(1);
  while (!text.empty() && text.back() == '/') text.remove_suffix(1);
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('/', start);
    if (end == std::string_view::npos) end = text.size();
    parts.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return Path(std::move(parts));
}

Path Path::child(std::string_view segment) const {
  check_segment(segment);
  Path p = *this;
  p.segments_.emplace_back(segment);
  return p;
}

bool Path::is_prefix_of(const Path& other) const {
  if (segments_.size() > other.segments_.size()) return false;
  return std::equal(segments_.begin(), segments_.end(), other.segments_.begin());
}

std::string Path::str() const {
  std::string out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i) out += '/';
    out += segments_[i];
  }
  return out;
}

}  // namespace fractal::kv
