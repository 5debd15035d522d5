#include "fractal/kvstore/value_list.hpp"

#include "fractal/common/error.hpp"

namespace fractal::kv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string encode_list(const std::vector<ListItem>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    if (item.text.find_first_of(";()") != std::string::npos)
      raise(Errc::Malformed, "list item contains a reserved character: " + item.text);
    out += item.kind == ListItem::Kind::String ? "S(" : "I(";
    out += item.text;
    out += ')';
    if (i + 1 < items.size()) {
      out += "; ";
    } else if (items.size() == 1) {
      out += ';';
    }
  }
  out += ']';
  return out;
}

std::vector<ListItem> decode_list(std::string_view text) {
  text = trim(text);
  if (text.size() < 2 || text.front() != '[' || text.back() != ']')
    raise(Errc::Malformed, "not a bracketed list: " + std::string(text));
  text = text.substr(1, text.size() - 2);

  std::vector<ListItem> items;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(';', start);
    if (end == std::string_view::npos) end = text.size();
    auto token = trim(text.substr(start, end - start));
    start = end + 1;
    if (token.empty()) continue;
    if (token.size() < 3 || token[1] != '(' || token.back() != ')')
      raise(Errc::Malformed, "bad list item: " + std::string(token));
    auto body = token.substr(2, token.size() - 3);
    if (body.find_first_of("()") != std::string_view::npos)
      raise(Errc::Malformed, "bad list item: " + std::string(token));
    if (token[0] == 'S') {
      items.push_back(ListItem::str(std::string(body)));
    } else if (token[0] == 'I') {
      items.push_back(ListItem::integer(std::string(body)));
    } else {
      raise(Errc::Malformed, "unknown item tag: " + std::string(token));
    }
  }
  return items;
}

}  // namespace fractal::kv
