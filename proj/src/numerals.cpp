#include "aida/numerals.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <string>

namespace aida {
namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_word(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool looks_like_stamp(std::string_view digits) {
  if (digits.size() != 8) return false;
  const int year = std::atoi(std::string(digits.substr(0, 4)).c_str());
  const int month = std::atoi(std::string(digits.substr(4, 2)).c_str());
  const int day = std::atoi(std::string(digits.substr(6, 2)).c_str());
  return year >= 1900 && year <= 2100 && month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

bool looks_like_year(std::string_view digits) {
  if (digits.size() != 4) return false;
  const int year = std::atoi(std::string(digits).c_str());
  return year >= 1900 && year <= 2100;
}

// yyyy-mm-dd starting at `i`
std::size_t iso_date_length(std::string_view s, std::size_t i) {
  static constexpr std::string_view kShape = "dddd-dd-dd";
  if (i + kShape.size() > s.size()) return 0;
  for (std::size_t k = 0; k < kShape.size(); ++k) {
    const char c = s[i + k];
    if (kShape[k] == 'd' ? !is_digit(c) : c != '-') return 0;
  }
  if (i + kShape.size() < s.size() && is_digit(s[i + kShape.size()])) return 0;
  return kShape.size();
}

}  // namespace

std::vector<Numeral> extract_numerals(std::string_view s) {
  std::vector<Numeral> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const char c = s[i];
    const bool signed_start = (c == '-' || c == '+') && i + 1 < n && is_digit(s[i + 1]);
    if (!is_digit(c) && !signed_start) {
      ++i;
      continue;
    }
    const char prev = i > 0 ? s[i - 1] : ' ';
    // Digits glued to an identifier or a previous number are not standalone numerals.
    if (is_word(prev) || prev == '.' || (is_digit(c) && is_digit(prev))) {
      while (i < n && (is_digit(s[i]) || s[i] == '.' || is_word(s[i]))) ++i;
      continue;
    }
    bool negative = false;
    std::size_t start = i;
    if (signed_start) {
      if (is_digit(prev)) {  // "18-24" is a range, not a sign
        ++i;
        continue;
      }
      negative = c == '-';
      ++i;
      start = i;
    }
    if (const std::size_t len = iso_date_length(s, start); len > 0 && !signed_start) {
      i = start + len;
      continue;
    }

    std::string digits;
    std::size_t j = start;
    while (j < n && is_digit(s[j])) digits.push_back(s[j++]);
    bool grouped = false;
    if (digits.size() <= 3) {
      while (j + 3 < n && s[j] == ',' && is_digit(s[j + 1]) && is_digit(s[j + 2]) &&
             is_digit(s[j + 3]) && (j + 4 >= n || !is_digit(s[j + 4]))) {
        digits.append(s.substr(j + 1, 3));
        j += 4;
        grouped = true;
      }
    }
    std::string fraction;
    if (j + 1 < n && s[j] == '.' && is_digit(s[j + 1])) {
      ++j;
      while (j < n && is_digit(s[j])) fraction.push_back(s[j++]);
    }
    int exponent = 0;
    bool has_exponent = false;
    if (j < n && (s[j] == 'e' || s[j] == 'E')) {
      std::size_t k = j + 1;
      if (k < n && (s[k] == '+' || s[k] == '-')) ++k;
      if (k < n && is_digit(s[k])) {
        std::size_t e_end = k;
        while (e_end < n && is_digit(s[e_end])) ++e_end;
        exponent = std::atoi(std::string(s.substr(j + 1, e_end - j - 1)).c_str());
        has_exponent = true;
        j = e_end;
      }
    }
    bool percent = false;
    if (j < n && s[j] == '%') {
      percent = true;
      ++j;
    }
    i = j;
    if (!percent && j < n && (is_word(s[j]) || s[j] == '.')) {
      // "3rd", "v1.2.3" and the like.
      while (i < n && (is_digit(s[i]) || s[i] == '.' || is_word(s[i]))) ++i;
      continue;
    }
    const bool bare = !signed_start && !grouped && fraction.empty() && !has_exponent && !percent;
    if (bare && (looks_like_stamp(digits) || looks_like_year(digits))) continue;

    std::string literal = digits;
    if (!fraction.empty()) literal += "." + fraction;
    if (has_exponent) literal += "e" + std::to_string(exponent);
    double value = std::strtod(literal.c_str(), nullptr);
    if (negative) value = -value;
    const int decimals = std::max(0, static_cast<int>(fraction.size()) - exponent);
    out.push_back(Numeral{value, decimals, percent});
  }
  return out;
}

void GroundingIndex::insert(double value) {
  if (!std::isfinite(value)) return;
  if (value == 0.0) value = 0.0;  // fold -0
  values_.insert(value);
  magnitudes_.insert(std::fabs(value));
}

void GroundingIndex::merge(const GroundingIndex& other) {
  for (double v : other.values_) insert(v);
}

void GroundingIndex::insert_all(const std::vector<Numeral>& numerals) {
  for (const auto& num : numerals) insert(num.value);
}

bool GroundingIndex::grounds(const Numeral& claim) const {
  const double target = std::fabs(claim.value);
  const double half_ulp = 0.5 * std::pow(10.0, -claim.decimals);
  const double slack = half_ulp + 1e-9 * std::max(1.0, target);
  auto it = magnitudes_.lower_bound(target - slack);
  return it != magnitudes_.end() && *it <= target + slack;
}

}  // namespace aida
