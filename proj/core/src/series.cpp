#include "popcomp/series.hpp"

#include <cmath>

#include "popcomp/error.hpp"

namespace popcomp {

void PriceSeries::validate() const {
  if (!timestamps.empty() && timestamps.size() != rates.size()) {
    throw InputError("price series: " + std::to_string(timestamps.size()) +
                     " timestamps for " + std::to_string(rates.size()) + " rates");
  }
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!std::isfinite(rates[i]) || rates[i] <= 0.0) {
      throw InputError("price series: rate at index " + std::to_string(i) +
                       " is not strictly positive");
    }
  }
}

std::vector<double> PriceSeries::increments() const {
  std::vector<double> z(rates.size(), 0.0);
  for (std::size_t k = 1; k < rates.size(); ++k) z[k] = rates[k] - rates[k - 1];
  return z;
}

}  // namespace popcomp
