#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace wattnet {

// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t days) : days_(days) {}

  static Date from_ymd(int year, unsigned month, unsigned day);
  // Strict YYYY-MM-DD; throws ParseError.
  static Date parse(std::string_view text);

  constexpr std::int32_t days() const { return days_; }
  int weekday() const;  // 0 = Monday
  std::string iso() const;

  constexpr Date operator+(std::int32_t n) const { return Date(days_ + n); }
  constexpr std::int32_t operator-(Date other) const { return days_ - other.days_; }
  constexpr auto operator<=>(const Date&) const = default;

 private:
  std::int32_t days_ = 0;
};

}  // namespace wattnet
