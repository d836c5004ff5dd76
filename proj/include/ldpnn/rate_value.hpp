#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ldpnn {

// Extended real: finite double or +inf, never NaN. Used for cumulant
// generating functions, which may be negative.
class ExtReal {
 public:
  ExtReal() = default;
  explicit ExtReal(double v) : v_(v) {
    if (std::isnan(v)) throw std::domain_error("ExtReal: NaN");
    if (v == -std::numeric_limits<double>::infinity())
      throw std::domain_error("ExtReal: -inf");
  }
  static ExtReal infinity() {
    return ExtReal(std::numeric_limits<double>::infinity());
  }
  double value() const { return v_; }
  bool is_infinite() const { return std::isinf(v_); }
  bool is_finite() const { return !std::isinf(v_); }
  friend bool operator==(ExtReal a, ExtReal b) { return a.v_ == b.v_; }
  friend bool operator<(ExtReal a, ExtReal b) { return a.v_ < b.v_; }

 private:
  double v_ = 0.0;
};

// Extended real in [0, +inf]; infinity explicit, NaN rejected. The value
// type of every rate function.
class RateValue {
 public:
  RateValue() = default;
  static RateValue infinity() {
    return RateValue(std::numeric_limits<double>::infinity());
  }
  static RateValue of(double v) {
    if (std::isnan(v)) throw std::domain_error("RateValue: NaN");
    if (v < 0) throw std::domain_error("RateValue: negative");
    return RateValue(v);
  }

  double value() const { return v_; }
  bool is_infinite() const { return std::isinf(v_); }
  bool is_finite() const { return !std::isinf(v_); }

  friend bool operator==(RateValue a, RateValue b) { return a.v_ == b.v_; }
  friend bool operator<(RateValue a, RateValue b) { return a.v_ < b.v_; }
  friend RateValue operator+(RateValue a, RateValue b) {
    return RateValue(a.v_ + b.v_);
  }

 private:
  explicit RateValue(double v) : v_(v) {}
  double v_ = 0.0;
};

// gamma * rate, gamma >= 1; preserves +inf.
inline RateValue scale_rate(double gamma, RateValue r) {
  if (r.is_infinite()) return RateValue::infinity();
  return RateValue::of(gamma * r.value());
}

}  // namespace ldpnn
