#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <variant>

#include "crowdbandit/arms.hpp"
#include "crowdbandit/errors.hpp"
#include "crowdbandit/random.hpp"

namespace crowdbandit {

// First abscissa where E e^{sX} blows up: -ln θ for an uncapped geometric law,
// +infinity for bounded support.
inline double mgf_pole(const GrowthDistribution& dist) {
    if (const auto* g = std::get_if<GeometricGrowth>(&dist); g && !g->truncated() && g->theta() > 0.0) {
        return -std::log(g->theta());
    }
    return std::numeric_limits<double>::infinity();
}

// Λ(s) = ln E e^{sX}.
inline double cumulant(const GrowthDistribution& dist, double s) {
    return std::visit(
        [s](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, PointGrowth>) {
                return s * static_cast<double>(d.value);
            } else if constexpr (std::is_same_v<T, GeometricGrowth>) {
                const double th = d.theta();
                if (th == 0.0) return 0.0;
                if (!d.truncated()) {
                    if (s >= -std::log(th)) return std::numeric_limits<double>::infinity();
                    return std::log1p(-th) - std::log1p(-th * std::exp(s));
                }
                // Renormalised finite sum over {0..cap}.
                double num = 0.0;
                double den = 0.0;
                double w = 1.0;
                for (std::int64_t j = 0; j <= d.cap(); ++j) {
                    num += w * std::exp(s * static_cast<double>(j));
                    den += w;
                    w *= th;
                }
                return std::log(num / den);
            } else {
                double acc = 0.0;
                for (std::size_t j = 0; j < d.pmf.size(); ++j) {
                    acc += d.pmf[j] * std::exp(s * static_cast<double>(j));
                }
                return std::log(acc);
            }
        },
        dist);
}

// Unique positive root of Λ(s) = s for a subcritical offspring law.
inline double solve_s0(const GrowthDistribution& dist, double tolerance = 1e-10) {
    const double m = growth_mean(dist);
    if (!(m < 1.0)) throw DomainError("offspring mean must be below 1");
    if (growth_support_max(dist) <= 1.0) {
        throw DomainError("offspring law concentrated on {0, 1} has no positive root");
    }
    auto f = [&](double s) { return cumulant(dist, s) - s; };
    const double pole = mgf_pole(dist);
    const double cap = std::isfinite(pole) ? 0.999 * pole : std::numeric_limits<double>::infinity();
    double hi = std::min(1.0, cap);
    while (!(f(hi) > 0.0)) {
        if (hi >= cap) {
            // Root lies between 0.999 of the pole and the pole itself.
            double gap = pole - hi;
            int guard = 0;
            while (!(f(hi) > 0.0)) {
                gap *= 0.1;
                hi = pole - gap;
                if (++guard > 60) throw NumericError("no positive root of the cumulant equation");
            }
            break;
        }
        hi = std::min(2.0 * hi, cap);
        if (hi > 1e6) throw NumericError("no positive root of the cumulant equation");
    }
    double lo = 0.0;
    while (hi - lo > tolerance) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return 0.5 * (lo + hi);
}

struct ExceedanceBound {
    double s0 = 0.0;
    std::int64_t x0 = 0;
    std::int64_t x_top = 0;
    double bound = 1.0;
};

inline double exceedance_bound(double s0, std::int64_t x0, std::int64_t x_top) {
    if (!(s0 > 0.0)) throw DomainError("s0 must be positive");
    if (x0 > x_top) throw DomainError("x0 must not exceed x_top");
    return std::exp(-s0 * static_cast<double>(x_top - x0));
}

inline ExceedanceBound exceedance(const GrowthDistribution& dist, std::int64_t x0,
                                  std::int64_t x_top) {
    ExceedanceBound b;
    b.s0 = solve_s0(dist);
    b.x0 = x0;
    b.x_top = x_top;
    b.bound = exceedance_bound(b.s0, x0, x_top);
    return b;
}

struct MonteCarloEstimate {
    double p = 0.0;
    double std_error = 0.0;
    std::size_t runs = 0;
};

// Uncapped Galton-Watson process X_{t+1} = Σ_{i < X_t} ξ_i started at x0; estimates
// P(sup_t X_t > x_top). Run r uses stream derive_key(seed, {r}).
inline MonteCarloEstimate simulate_exceedance(const GrowthDistribution& dist, std::int64_t x0,
                                              std::int64_t x_top, std::size_t runs,
                                              std::uint64_t seed) {
    if (runs == 0) throw DomainError("need at least one run");
    if (!(growth_mean(dist) < 1.0)) throw DomainError("offspring mean must be below 1");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < runs; ++r) {
        RandomStream rng(derive_key(seed, {r}));
        std::int64_t x = x0;
        while (x > 0 && x <= x_top) {
            std::int64_t next = 0;
            for (std::int64_t i = 0; i < x; ++i) next += sample_growth(dist, rng);
            x = next;
        }
        if (x > x_top) ++hits;
    }
    MonteCarloEstimate e;
    e.runs = runs;
    e.p = static_cast<double>(hits) / static_cast<double>(runs);
    e.std_error = std::sqrt(e.p * (1.0 - e.p) / static_cast<double>(runs));
    return e;
}

} // namespace crowdbandit
