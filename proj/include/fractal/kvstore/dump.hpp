#pragma once

#include <map>
#include <string>
#include <string_view>

#include "fractal/kvstore/store.hpp"

namespace fractal::kv {

// Text snapshot: one `<path>=<value>` line per key, sorted by the path string.
// Backslashes and newlines in values are escaped as \\ and \n.
std::string dump(const Store& store);

std::map<std::string, std::string> parse_dump(std::string_view text);

// Writes every line of a dump into `store` as one commit.
Commit load(Store& store, std::string_view text, const Identity& writer);

}  // namespace fractal::kv
