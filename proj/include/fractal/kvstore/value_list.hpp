#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fractal::kv {

// Bracketed list encoding used for RPC values and logs, e.g.
//   [S(replicate); S(TARGET); I(0a000013); I(300)]
//   [S(success);]
// A one-element list keeps its trailing ';'. Longer lists do not.
struct ListItem {
  enum class Kind { String, Integer };

  Kind kind;
  std::string text;

  static ListItem str(std::string text) { return {Kind::String, std::move(text)}; }
  static ListItem integer(std::string text) { return {Kind::Integer, std::move(text)}; }

  friend bool operator==(const ListItem&, const ListItem&) = default;
};

// Throws Error(Malformed) if an item contains ';', '(' or ')'.
std::string encode_list(const std::vector<ListItem>& items);

// Throws Error(Malformed) on anything that is not a bracketed list.
std::vector<ListItem> decode_list(std::string_view text);

}  // namespace fractal::kv
