#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pelc {

// Exact rational arithmetic for the receptive-field calculus. Strides of
// fractionally-strided (upsampling) layers such as 1/2 must stay exact.
class Rational {
 public:
  constexpr Rational() : num_(0), den_(1) {}
  constexpr Rational(std::int64_t n) : num_(n), den_(1) {}
  Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) {
    if (den_ == 0) throw std::invalid_argument("Rational: zero denominator");
    normalize();
  }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  Rational operator+(const Rational& o) const {
    return Rational(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
  }
  Rational operator-(const Rational& o) const {
    return Rational(num_ * o.den_ - o.num_ * den_, den_ * o.den_);
  }
  Rational operator*(const Rational& o) const {
    return Rational(num_ * o.num_, den_ * o.den_);
  }
  Rational operator/(const Rational& o) const {
    if (o.num_ == 0) throw std::invalid_argument("Rational: division by zero");
    return Rational(num_ * o.den_, den_ * o.num_);
  }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }

  bool operator==(const Rational& o) const {
    return num_ == o.num_ && den_ == o.den_;
  }
  bool operator!=(const Rational& o) const { return !(*this == o); }
  bool operator<(const Rational& o) const {
    return num_ * o.den_ < o.num_ * den_;
  }

  double to_double() const { return double(num_) / double(den_); }

  // "217", "35.5", "13/7" -- decimal when the denominator divides a power
  // of ten, fraction otherwise.
  std::string str() const {
    if (den_ == 1) return std::to_string(num_);
    std::int64_t scale = 1;
    int digits = 0;
    while (digits < 12 && scale % den_ != 0) { scale *= 10; ++digits; }
    if (scale % den_ != 0)
      return std::to_string(num_) + "/" + std::to_string(den_);
    std::int64_t v = num_ * (scale / den_);
    bool neg = v < 0;
    if (neg) v = -v;
    std::string frac = std::to_string(v % scale);
    frac.insert(0, std::size_t(digits) - frac.size(), '0');
    while (frac.size() > 1 && frac.back() == '0') frac.pop_back();
    return (neg ? "-" : "") + std::to_string(v / scale) + "." + frac;
  }

 private:
  void normalize() {
    if (den_ < 0) { num_ = -num_; den_ = -den_; }
    std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) { num_ /= g; den_ /= g; }
    if (num_ == 0) den_ = 1;
  }

  std::int64_t num_;
  std::int64_t den_;
};

}  // namespace pelc
