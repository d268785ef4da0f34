#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace proxest {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Absolute tolerance for indicator-domain and set-membership checks.
inline constexpr double kMembershipTol = 1e-9;

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A function or memory was configured with invalid parameters.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dykstra could not reach a point feasible for every ball.
struct InconsistentSetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected dimension " +
                             std::to_string(want) + ", got " + std::to_string(got));
    }
}

/// Value in R ∪ {+inf}. Infinity is a tag, never a sentinel double.
class ExtendedReal {
  public:
    static ExtendedReal finite(double v) { return ExtendedReal(false, v); }
    static ExtendedReal infinity() { return ExtendedReal(true, 0.0); }

    bool is_finite() const { return !infinite_; }
    bool is_infinite() const { return infinite_; }

    double value() const {
        if (infinite_)
            throw std::domain_error("ExtendedReal: value() on +inf");
        return value_;
    }

    /// Finite value or std::numeric_limits<double>::infinity(); for reporting only.
    double as_double() const {
        return infinite_ ? std::numeric_limits<double>::infinity() : value_;
    }

    friend ExtendedReal operator+(ExtendedReal a, ExtendedReal b) {
        if (a.infinite_ || b.infinite_) return infinity();
        return finite(a.value_ + b.value_);
    }
    friend ExtendedReal operator+(ExtendedReal a, double b) { return a + finite(b); }
    friend ExtendedReal operator*(double s, ExtendedReal a) {
        // s > 0 is the only use; 0 * inf stays inf (indicator convention).
        if (a.infinite_) return infinity();
        return finite(s * a.value_);
    }

    friend bool operator==(ExtendedReal a, ExtendedReal b) {
        if (a.infinite_ || b.infinite_) return a.infinite_ == b.infinite_;
        return a.value_ == b.value_;
    }
    friend bool operator<(ExtendedReal a, ExtendedReal b) {
        if (a.infinite_) return false;
        if (b.infinite_) return true;
        return a.value_ < b.value_;
    }
    friend bool operator<=(ExtendedReal a, ExtendedReal b) { return !(b < a); }

    friend std::ostream& operator<<(std::ostream& os, ExtendedReal a) {
        if (a.infinite_) return os << "+inf";
        return os << a.value_;
    }

  private:
    ExtendedReal(bool inf, double v) : infinite_(inf), value_(v) {}
    bool infinite_;
    double value_;
};

}  // namespace proxest
