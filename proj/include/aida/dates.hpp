#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace aida {

using Date = std::chrono::sys_days;

/// Parses a "YYYYMMDD" stamp; rejects anything that is not a real calendar day.
std::optional<Date> parse_stamp(std::string_view text);
std::string format_stamp(Date date);

inline Date shift_days(Date date, int days) { return date + std::chrono::days{days}; }

/// Monday = 0 ... Sunday = 6
int weekday_index(Date date);

}  // namespace aida
