#pragma once

// Forward-mode dual numbers with a compile-time number of derivative
// directions. Every solver in the library is templated on its scalar type,
// so Dual<N> flows through them unchanged.

#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <type_traits>

namespace neurodiff {

template <std::size_t N>
class Dual {
public:
    static constexpr std::size_t width = N;

    double v = 0.0;
    std::array<double, N> d{};

    constexpr Dual() = default;
    constexpr Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
    constexpr Dual(double value, const std::array<double, N>& partials) : v(value), d(partials) {}

    /// Seeds direction `dir` with a unit partial.
    static constexpr Dual variable(double value, std::size_t dir) {
        Dual x(value);
        x.d[dir] = 1.0;
        return x;
    }

    constexpr double value() const { return v; }
    constexpr double partial(std::size_t i) const { return d[i]; }

    constexpr Dual& operator+=(const Dual& o) {
        v += o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    constexpr Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    constexpr Dual& operator*=(const Dual& o) {
        for (std::size_t i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    constexpr Dual& operator/=(const Dual& o) {
        const double q = v / o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] = (d[i] - q * o.d[i]) / o.v;
        v = q;
        return *this;
    }
    constexpr Dual& operator+=(double s) {
        v += s;
        return *this;
    }
    constexpr Dual& operator-=(double s) {
        v -= s;
        return *this;
    }
    constexpr Dual& operator*=(double s) {
        v *= s;
        for (auto& g : d) g *= s;
        return *this;
    }
    constexpr Dual& operator/=(double s) {
        v /= s;
        for (auto& g : d) g /= s;
        return *this;
    }
};

template <class T>
struct is_dual : std::false_type {};
template <std::size_t N>
struct is_dual<Dual<N>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<T>::value;

// ---- arithmetic -----------------------------------------------------------

template <std::size_t N>
constexpr Dual<N> operator-(Dual<N> a) {
    a.v = -a.v;
    for (auto& g : a.d) g = -g;
    return a;
}
template <std::size_t N>
constexpr Dual<N> operator+(const Dual<N>& a) {
    return a;
}

template <std::size_t N>
constexpr Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <std::size_t N>
constexpr Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <std::size_t N>
constexpr Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <std::size_t N>
constexpr Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }

template <std::size_t N>
constexpr Dual<N> operator+(Dual<N> a, double s) { return a += s; }
template <std::size_t N>
constexpr Dual<N> operator+(double s, Dual<N> a) { return a += s; }
template <std::size_t N>
constexpr Dual<N> operator-(Dual<N> a, double s) { return a -= s; }
template <std::size_t N>
constexpr Dual<N> operator-(double s, const Dual<N>& a) { return -a + s; }
template <std::size_t N>
constexpr Dual<N> operator*(Dual<N> a, double s) { return a *= s; }
template <std::size_t N>
constexpr Dual<N> operator*(double s, Dual<N> a) { return a *= s; }
template <std::size_t N>
constexpr Dual<N> operator/(Dual<N> a, double s) { return a /= s; }
template <std::size_t N>
constexpr Dual<N> operator/(double s, const Dual<N>& a) {
    return Dual<N>(s) / a;
}

// Comparisons look at the value only; branching in user code therefore
// follows the primal computation.
template <std::size_t N>
constexpr bool operator==(const Dual<N>& a, const Dual<N>& b) { return a.v == b.v; }
template <std::size_t N>
constexpr auto operator<=>(const Dual<N>& a, const Dual<N>& b) { return a.v <=> b.v; }
template <std::size_t N>
constexpr bool operator==(const Dual<N>& a, double b) { return a.v == b; }
template <std::size_t N>
constexpr auto operator<=>(const Dual<N>& a, double b) { return a.v <=> b; }

// ---- elementary functions -------------------------------------------------

namespace detail {
template <std::size_t N>
constexpr Dual<N> chain(double fv, double dfdv, const Dual<N>& a) {
    Dual<N> r(fv);
    for (std::size_t i = 0; i < N; ++i) r.d[i] = dfdv * a.d[i];
    return r;
}
}  // namespace detail

template <std::size_t N>
Dual<N> exp(const Dual<N>& a) {
    const double e = std::exp(a.v);
    return detail::chain(e, e, a);
}
template <std::size_t N>
Dual<N> log(const Dual<N>& a) { return detail::chain(std::log(a.v), 1.0 / a.v, a); }
template <std::size_t N>
Dual<N> sqrt(const Dual<N>& a) {
    const double s = std::sqrt(a.v);
    return detail::chain(s, 0.5 / s, a);
}
template <std::size_t N>
Dual<N> sin(const Dual<N>& a) { return detail::chain(std::sin(a.v), std::cos(a.v), a); }
template <std::size_t N>
Dual<N> cos(const Dual<N>& a) { return detail::chain(std::cos(a.v), -std::sin(a.v), a); }
template <std::size_t N>
Dual<N> tanh(const Dual<N>& a) {
    const double t = std::tanh(a.v);
    return detail::chain(t, 1.0 - t * t, a);
}
template <std::size_t N>
Dual<N> abs(const Dual<N>& a) {
    return a.v < 0.0 ? -a : a;
}
template <std::size_t N>
Dual<N> pow(const Dual<N>& a, double b) {
    if (b == 0.0) return Dual<N>(1.0);
    return detail::chain(std::pow(a.v, b), b * std::pow(a.v, b - 1.0), a);
}
template <std::size_t N>
Dual<N> pow(const Dual<N>& a, int b) {
    return pow(a, static_cast<double>(b));
}
template <std::size_t N>
Dual<N> pow(const Dual<N>& a, const Dual<N>& b) {
    return exp(b * log(a));
}
template <std::size_t N>
Dual<N> pow(double a, const Dual<N>& b) {
    return exp(b * std::log(a));
}
template <std::size_t N>
Dual<N> max(const Dual<N>& a, const Dual<N>& b) { return a.v >= b.v ? a : b; }
template <std::size_t N>
Dual<N> min(const Dual<N>& a, const Dual<N>& b) { return a.v <= b.v ? a : b; }

template <std::size_t N>
bool isfinite(const Dual<N>& a) {
    if (!std::isfinite(a.v)) return false;
    for (double g : a.d)
        if (!std::isfinite(g)) return false;
    return true;
}

// ---- scalar helpers usable with both double and Dual ----------------------

constexpr double value(double x) { return x; }
template <std::size_t N>
constexpr double value(const Dual<N>& x) { return x.v; }

constexpr double abs2(double x) { return x * x; }
template <std::size_t N>
constexpr Dual<N> abs2(const Dual<N>& a) { return a * a; }

/// max(x, 0), with zero derivative on the flat side.
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
template <std::size_t N>
Dual<N> relu(const Dual<N>& a) { return a.v > 0.0 ? a : Dual<N>(0.0); }

template <std::size_t N>
std::ostream& operator<<(std::ostream& os, const Dual<N>& a) {
    os << "Dual(" << a.v << ", [";
    for (std::size_t i = 0; i < N; ++i) os << (i ? ", " : "") << a.d[i];
    return os << "])";
}

}  // namespace neurodiff
