#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace wildharvest {

/// UTC calendar date. Serialized as YYYY-MM-DD.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int year, unsigned month, unsigned day);

  /// Strict YYYY-MM-DD; throws InvariantError on anything else.
  static Date parse(std::string_view text);
  static std::optional<Date> try_parse(std::string_view text);
  /// YYYY-MM, resolved to the first day of the month.
  static Date parse_month(std::string_view text);

  std::chrono::sys_days days() const { return days_; }
  std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{days_}; }
  int year() const { return static_cast<int>(ymd().year()); }
  unsigned month() const { return static_cast<unsigned>(ymd().month()); }
  unsigned day() const { return static_cast<unsigned>(ymd().day()); }

  /// Adds calendar months; the day is clamped to the end of the target month.
  Date add_months(int months) const;
  Date add_days(int n) const { return Date{days_ + std::chrono::days{n}}; }
  Date last_day_of_month() const;

  std::string to_string() const;

  friend auto operator<=>(const Date&, const Date&) = default;
  friend bool operator==(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

/// UTC timestamp, second resolution. Serialized as YYYY-MM-DDTHH:MM:SSZ.
class Timestamp {
 public:
  Timestamp() = default;
  explicit Timestamp(std::chrono::sys_seconds s) : secs_(s) {}

  static Timestamp parse(std::string_view text);
  static Timestamp now();
  static Timestamp start_of(const Date& d) { return Timestamp{std::chrono::sys_seconds{d.days()}}; }

  Date date() const { return Date{std::chrono::floor<std::chrono::days>(secs_)}; }
  std::string to_string() const;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
  friend bool operator==(const Timestamp&, const Timestamp&) = default;

 private:
  std::chrono::sys_seconds secs_{};
};

}  // namespace wildharvest
