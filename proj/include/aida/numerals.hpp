#pragma once

#include <set>
#include <string_view>
#include <vector>

namespace aida {

/// A number as written in free text. `decimals` is the written precision used for
/// grounding ("15.2" has one decimal and is grounded by an observed 15.23).
struct Numeral {
  double value = 0.0;
  int decimals = 0;
  bool percent = false;

  friend bool operator==(const Numeral&, const Numeral&) = default;
};

/// Canonical numeral extractor shared by observations, think blocks and insight proofs.
///
/// Recognizes signed decimals, thousands-separated numbers ("45,000"), scientific
/// notation and percentages (kept at their written magnitude). YYYYMMDD stamps, ISO
/// dates and bare four-digit years are skipped, as are digits glued to identifiers
/// (`S01`, `netGMV_2`).
std::vector<Numeral> extract_numerals(std::string_view text);

/// Set of normalized numbers seen in environment observations.
class GroundingIndex {
 public:
  void insert(double value);
  void merge(const GroundingIndex& other);
  void insert_all(const std::vector<Numeral>& numerals);

  /// True if some indexed value rounds to `claim` at the claim's written precision.
  /// Matching ignores sign: prose reports the magnitude of a decline.
  bool grounds(const Numeral& claim) const;

  const std::set<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  friend bool operator==(const GroundingIndex& a, const GroundingIndex& b) {
    return a.values_ == b.values_;
  }

 private:
  std::set<double> values_;
  std::set<double> magnitudes_;
};

}  // namespace aida
