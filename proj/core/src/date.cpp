#include "wildharvest/date.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "wildharvest/errors.hpp"

namespace wildharvest {

namespace {

bool parse_uint(std::string_view s, unsigned& out) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

std::optional<std::chrono::year_month_day> parse_ymd(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  unsigned y = 0, m = 0, d = 0;
  if (!parse_uint(text.substr(0, 4), y) || !parse_uint(text.substr(5, 2), m) ||
      !parse_uint(text.substr(8, 2), d))
    return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{static_cast<int>(y)}, std::chrono::month{m},
                                  std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return ymd;
}

}  // namespace

Date::Date(int year, unsigned month, unsigned day) {
  std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                  std::chrono::day{day}};
  if (!ymd.ok()) throw InvariantError("invalid calendar date");
  days_ = std::chrono::sys_days{ymd};
}

std::optional<Date> Date::try_parse(std::string_view text) {
  auto ymd = parse_ymd(text);
  if (!ymd) return std::nullopt;
  return Date{std::chrono::sys_days{*ymd}};
}

Date Date::parse(std::string_view text) {
  auto d = try_parse(text);
  if (!d) throw InvariantError("not a YYYY-MM-DD date: '" + std::string(text) + "'");
  return *d;
}

Date Date::parse_month(std::string_view text) {
  unsigned y = 0, m = 0;
  if (text.size() != 7 || text[4] != '-' || !parse_uint(text.substr(0, 4), y) ||
      !parse_uint(text.substr(5, 2), m) || m < 1 || m > 12)
    throw InvariantError("not a YYYY-MM month: '" + std::string(text) + "'");
  return Date{static_cast<int>(y), m, 1};
}

Date Date::add_months(int months) const {
  using namespace std::chrono;
  const year_month_day ymd = this->ymd();
  year_month ym = year_month{ymd.year(), ymd.month()} + std::chrono::months{months};
  const unsigned last = static_cast<unsigned>(year_month_day_last{ym.year(), month_day_last{ym.month()}}.day());
  const unsigned d = std::min(static_cast<unsigned>(ymd.day()), last);
  return Date{static_cast<int>(ym.year()), static_cast<unsigned>(ym.month()), d};
}

Date Date::last_day_of_month() const {
  using namespace std::chrono;
  const year_month_day ymd = this->ymd();
  return Date{sys_days{year_month_day_last{ymd.year(), month_day_last{ymd.month()}}}};
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
  return buf;
}

Timestamp Timestamp::parse(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SSZ
  if (text.size() != 20 || text[10] != 'T' || text[13] != ':' || text[16] != ':' || text[19] != 'Z')
    throw InvariantError("not a UTC timestamp: '" + std::string(text) + "'");
  auto ymd = parse_ymd(text.substr(0, 10));
  unsigned hh = 0, mm = 0, ss = 0;
  if (!ymd || !parse_uint(text.substr(11, 2), hh) || !parse_uint(text.substr(14, 2), mm) ||
      !parse_uint(text.substr(17, 2), ss) || hh > 23 || mm > 59 || ss > 60)
    throw InvariantError("not a UTC timestamp: '" + std::string(text) + "'");
  using namespace std::chrono;
  return Timestamp{sys_seconds{sys_days{*ymd}} + hours{hh} + minutes{mm} + seconds{ss}};
}

Timestamp Timestamp::now() {
  return Timestamp{std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now())};
}

std::string Timestamp::to_string() const {
  using namespace std::chrono;
  const auto day = floor<days>(secs_);
  const hh_mm_ss hms{secs_ - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", Date{day}.to_string().c_str(),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

}  // namespace wildharvest
