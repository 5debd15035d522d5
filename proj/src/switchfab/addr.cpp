#include "fractal/switchfab/addr.hpp"

#include <charconv>
#include <cstdio>

#include "fractal/common/error.hpp"

namespace fractal::sw {

namespace {

template <typename T>
T parse_number(std::string_view text, int base, T max, std::string_view what) {
  unsigned long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, base);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || value > max)
    raise(Errc::InvalidArgument, "bad " + std::string(what) + ": " + std::string(text));
  return static_cast<T>(value);
}

}  // namespace

Ipv4 Ipv4::parse(std::string_view dotted) {
  std::uint32_t out = 0;
  int parts = 0;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    auto end = dotted.find('.', start);
    if (end == std::string_view::npos) end = dotted.size();
    out = (out << 8) |
          parse_number<std::uint32_t>(dotted.substr(start, end - start), 10, 255, "ipv4 address");
    ++parts;
    start = end + 1;
  }
  if (parts != 4) raise(Errc::InvalidArgument, "bad ipv4 address: " + std::string(dotted));
  return Ipv4{out};
}

std::string Ipv4::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", value >> 24, (value >> 16) & 0xff,
                (value >> 8) & 0xff, value & 0xff);
  return buf;
}

std::string Ipv4::hex() const {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", value);
  return buf;
}

Ipv4 Ipv4::from_hex(std::string_view hex) {
  if (hex.size() != 8) raise(Errc::InvalidArgument, "app id must be 8 hex digits: " + std::string(hex));
  return Ipv4{parse_number<std::uint32_t>(hex, 16, 0xffffffffu, "hex id")};
}

MacAddr MacAddr::parse(std::string_view text) {
  MacAddr mac;
  if (text.size() != 17) raise(Errc::InvalidArgument, "bad mac address: " + std::string(text));
  for (int i = 0; i < 6; ++i) {
    if (i > 0 && text[i * 3 - 1] != ':')
      raise(Errc::InvalidArgument, "bad mac address: " + std::string(text));
    mac.bytes[i] = parse_number<std::uint8_t>(text.substr(i * 3, 2), 16, 255, "mac address");
  }
  return mac;
}

std::string MacAddr::str() const {
  char buf[18];
  std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", bytes[0], bytes[1], bytes[2],
                bytes[3], bytes[4], bytes[5]);
  return buf;
}

}  // namespace fractal::sw
