#ifndef LBC_INTERVALS_HPP
#define LBC_INTERVALS_HPP

#include <cstdio>
#include <string>
#include <vector>

#include "lbc/nn.hpp"

namespace lbc {

// Confidence levels alpha, strictly increasing inside (0, 1).
class CalibrationLevels {
 public:
  CalibrationLevels() : CalibrationLevels(std::vector<double>{0.1, 0.3, 0.5, 0.7, 0.9}) {}
  explicit CalibrationLevels(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("at least one calibration level is required");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!(values_[i] > 0.0 && values_[i] < 1.0)) {
        throw std::invalid_argument("calibration levels must lie in (0, 1)");
      }
      if (i > 0 && !(values_[i] > values_[i - 1])) {
        throw std::invalid_argument("calibration levels must be strictly increasing");
      }
    }
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

// Symmetric intervals [mean - width, mean + width], one width column per level.
struct IntervalPrediction {
  VectorD mean;    // [n]
  MatrixD widths;  // [n x |A|], non-negative and non-decreasing along rows

  Index size() const { return mean.size(); }
  VectorD lower(Index level) const { return mean - widths.col(level); }
  VectorD upper(Index level) const { return mean + widths.col(level); }
};

// 17 significant digits: reads back to the same double. Used for every
// numeric CSV cell.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace lbc

#endif  // LBC_INTERVALS_HPP
