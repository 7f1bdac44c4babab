#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "sail/common.hpp"

namespace sail {

/// splitmix64. Output depends only on the seed and the draw count, so
/// ensembles are identical across platforms and standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Box-Muller; the spare value is discarded to keep draws stateless.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Independent stream for sample k.
    SplitMix64 fork(std::uint64_t k) const {
        SplitMix64 s(state_ ^ (0xd1b54a32d192ed03ULL * (k + 1)));
        s.next();
        return s;
    }

private:
    std::uint64_t state_;
};

/// Random low-mode cosine series on [0,lx]x[0,ly] with coefficients
/// decaying like 1/(1 + k^2 + l^2). Evaluable at any point, so the same
/// sample can be put on two grids.
struct SmoothField {
    double lx = 1.0;
    double ly = 1.0;
    Matrix coeffs;

    static SmoothField random(SplitMix64& rng, int modes, double lx, double ly) {
        SmoothField f{lx, ly, Matrix(modes, modes)};
        for (int k = 0; k < modes; ++k)
            for (int l = 0; l < modes; ++l) f.coeffs(k, l) = rng.normal() / (1.0 + k * k + l * l);
        return f;
    }

    double operator()(double x, double y) const {
        double s = 0.0;
        for (Eigen::Index k = 0; k < coeffs.rows(); ++k) {
            const double cx = std::cos(std::numbers::pi * static_cast<double>(k) * x / lx);
            for (Eigen::Index l = 0; l < coeffs.cols(); ++l)
                s += coeffs(k, l) * cx * std::cos(std::numbers::pi * static_cast<double>(l) * y / ly);
        }
        return s;
    }
};

}  // namespace sail
