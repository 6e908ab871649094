#pragma once

#include <cmath>
#include <compare>
#include <limits>
#include <string>

#include "confact/errors.hpp"

namespace confact {

/// A real number or negative infinity.
///
/// Used for filtering thresholds and conformity values, where negative
/// infinity stands for "retain every claim". NaN and +inf are rejected.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;

  static constexpr ExtendedReal neg_inf() { return ExtendedReal{}; }

  static ExtendedReal finite(double x) {
    if (!std::isfinite(x)) {
      throw DataError("extended real must be finite or -inf, got " + std::to_string(x));
    }
    return ExtendedReal{x};
  }

  constexpr bool is_neg_inf() const { return value_ == -std::numeric_limits<double>::infinity(); }
  constexpr double value() const { return value_; }

  friend constexpr bool operator==(ExtendedReal a, ExtendedReal b) { return a.value_ == b.value_; }
  friend constexpr std::partial_ordering operator<=>(ExtendedReal a, ExtendedReal b) {
    return a.value_ <=> b.value_;
  }

  // Strict comparison used by the filtering operator.
  constexpr bool below(double score) const { return score > value_; }

 private:
  constexpr explicit ExtendedReal(double x) : value_(x) {}

  double value_ = -std::numeric_limits<double>::infinity();
};

}  // namespace confact
