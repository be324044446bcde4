#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace popcomp {

/// Positive price (or exchange-rate) series r_0, r_1, ...
struct PriceSeries {
  std::vector<double> rates;
  /// Optional labels, either empty or one per rate.
  std::vector<std::string> timestamps;

  std::size_t size() const { return rates.size(); }

  /// Throws InputError when a rate is not strictly positive and finite, or
  /// when the timestamp column does not line up with the rates.
  void validate() const;

  /// z_k = r_k - r_{k-1} for k >= 1. Element 0 is unused and set to 0.
  std::vector<double> increments() const;
};

}  // namespace popcomp
