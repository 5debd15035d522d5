#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace fractal::sw {

struct Ipv4 {
  std::uint32_t value = 0;

  static Ipv4 parse(std::string_view dotted);
  std::string str() const;
  // Eight lowercase hex digits, the form used for application ids.
  std::string hex() const;
  static Ipv4 from_hex(std::string_view hex);

  friend auto operator<=>(const Ipv4&, const Ipv4&) = default;
};

struct MacAddr {
  std::array<std::uint8_t, 6> bytes{};

  static MacAddr parse(std::string_view text);
  std::string str() const;

  friend auto operator<=>(const MacAddr&, const MacAddr&) = default;
};

}  // namespace fractal::sw
