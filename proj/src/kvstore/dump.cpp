#include "fractal/kvstore/dump.hpp"

#include <vector>

#include "fractal/common/error.hpp"

namespace fractal::kv {

namespace {

std::string escape(const std::string& v) {
  std::string out;
  for (char c : v) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != '\\') {
      out += v[i];
      continue;
    }
    if (i + 1 >= v.size()) raise(Errc::Malformed, "dangling escape in dump value");
    char next = v[++i];
    if (next == 'n') {
      out += '\n';
    } else if (next == '\\') {
      out += '\\';
    } else {
      raise(Errc::Malformed, std::string("unknown escape \\") + next);
    }
  }
  return out;
}

}  // namespace

std::string dump(const Store& store) {
  std::map<std::string, std::string> sorted;
  for (const auto& [path, entry] : store.data()) sorted.emplace(path.str(), entry.value);
  std::string out;
  for (const auto& [path, value] : sorted) {
    out += path;
    out += '=';
    out += escape(value);
    out += '\n';
  }
  return out;
}

std::map<std::string, std::string> parse_dump(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0)
      raise(Errc::Malformed, "dump line without '=': " + std::string(line));
    out[Path::parse(line.substr(0, eq)).str()] = unescape(line.substr(eq + 1));
  }
  return out;
}

Commit load(Store& store, std::string_view text, const Identity& writer) {
  std::vector<Mutation> muts;
  for (auto& [path, value] : parse_dump(text)) muts.push_back({Path::parse(path), value});
  return store.transact(muts, writer);
}

}  // namespace fractal::kv
