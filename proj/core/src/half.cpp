#include "mtpd/half.hpp"

#include <cmath>

namespace mtpd {

double round_to_half(double x) {
    if (std::isnan(x)) return x;
    const double mag = std::fabs(x);
    if (mag >= half_max) return std::copysign(half_max, x);
    if (mag == 0.0) return x;
    // binary16 has 10 fraction bits; below 2^-14 the spacing is fixed at 2^-24.
    int exp = std::ilogb(mag);
    if (exp < -14) exp = -14;
    const double quantum = std::ldexp(1.0, exp - 10);
    // nearbyint honours the default round-to-nearest-even mode.
    const double rounded = std::nearbyint(mag / quantum) * quantum;
    return std::copysign(std::fmin(rounded, half_max), x);
}

Tensor to_half_precision(const Tensor& x) {
    Tensor out(x.shape());
    auto dst = out.data();
    const auto src = x.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = round_to_half(src[i]);
    return out;
}

double half_bits_to_double(std::uint16_t bits) {
    const int sign = (bits >> 15) & 1;
    const int exp = (bits >> 10) & 0x1f;
    const int frac = bits & 0x3ff;
    double v;
    if (exp == 0) {
        v = std::ldexp(static_cast<double>(frac), -24);
    } else if (exp == 31) {
        v = frac ? std::nan("") : INFINITY;
    } else {
        v = std::ldexp(static_cast<double>(frac | 0x400), exp - 25);
    }
    return sign ? -v : v;
}

}  // namespace mtpd
