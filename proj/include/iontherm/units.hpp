#pragma once

#include "iontherm/constants.hpp"

namespace iontherm {

// The two frequency conventions in use are kept in distinct types so a
// natural linewidth (angular) can never be handed to code expecting a
// secular frequency (ordinary) without an explicit conversion.

/// Angular frequency, rad/s. Used for detunings and natural linewidths.
struct AngularFreq {
    double rad_per_s = 0.0;

    constexpr AngularFreq() = default;
    constexpr explicit AngularFreq(double w) : rad_per_s(w) {}

    static constexpr AngularFreq from_hz(double hz) { return AngularFreq(constants::two_pi * hz); }
    static constexpr AngularFreq from_mhz(double mhz) { return AngularFreq(constants::two_pi * mhz * 1e6); }

    constexpr double hz() const { return rad_per_s / constants::two_pi; }
    constexpr double mhz() const { return hz() * 1e-6; }
};

/// Ordinary frequency, Hz (cycles/s). Used for secular frequencies,
/// RF drive, and spectral FWHM widths.
struct OrdinaryFreq {
    double hz = 0.0;

    constexpr OrdinaryFreq() = default;
    constexpr explicit OrdinaryFreq(double f) : hz(f) {}

    static constexpr OrdinaryFreq from_mhz(double mhz) { return OrdinaryFreq(mhz * 1e6); }
    static constexpr OrdinaryFreq from_khz(double khz) { return OrdinaryFreq(khz * 1e3); }

    constexpr double mhz() const { return hz * 1e-6; }
    constexpr AngularFreq angular() const { return AngularFreq(constants::two_pi * hz); }
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2() = default;
    constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

    constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator*(double c) const { return {x * c, y * c}; }
    constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }

    Vec2 normalized() const {
        const double n = norm();
        return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
    }

    /// Counterclockwise rotation by `angle_rad`.
    Vec2 rotated(double angle_rad) const {
        const double c = std::cos(angle_rad);
        const double s = std::sin(angle_rad);
        return {c * x - s * y, s * x + c * y};
    }
};

inline constexpr double deg_to_rad(double deg) { return deg * constants::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / constants::pi; }

} // namespace iontherm
