#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mfcrowd/grid.hpp"

namespace mfcrowd {

enum class KernelMode { Nonlocal, Local };

/// Half-open arc [lo, hi) on the torus; hi may exceed the torus length to
/// express wrap-around supports such as [0.9, 1.1).
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double length() const { return hi - lo; }
};

/// Personal-space kernel phi_r discretised on the torus.
///
/// Nonlocal kernels hold one weight per cell offset: weights()[o] is the
/// value of phi at displacement o*h. Local mode stands for the weak limit
/// phi_r -> delta_0 and carries no weights; callers then use the density
/// itself wherever the nonlocal code would convolve.
class AversionKernel {
 public:
    struct Tap {
        std::size_t offset;
        double weight;
    };

    static AversionKernel local();
    static AversionKernel nonlocal(std::vector<double> weights, Interval support, double delta);

    KernelMode mode() const { return mode_; }
    bool is_local() const { return mode_ == KernelMode::Local; }
    const std::vector<double>& weights() const { return weights_; }
    /// Nonzero weights only; convolutions run over these.
    const std::vector<Tap>& taps() const { return taps_; }
    Interval support() const { return support_; }
    double radius() const { return 0.5 * support_.length(); }
    double delta() const { return delta_; }

    /// h * sum(weights); 1 for every kernel this library builds.
    double mass(const TorusGrid& grid) const;
    /// weights[o] == weights[-o mod n] for all offsets, within tol.
    bool is_symmetric(double tol = 1e-12) const;

 private:
    KernelMode mode_ = KernelMode::Local;
    std::vector<double> weights_;
    std::vector<Tap> taps_;
    Interval support_{};
    double delta_ = 0.0;
};

/// Normalised indicator Vol(support)^{-1} 1_support, cell-averaged so that
/// partially covered boundary cells get fractional weight and the discrete
/// mass is exactly one.
AversionKernel build_indicator_kernel(Interval support, const TorusGrid& grid);

/// Discretised bump gamma_delta(x) = gamma(x/delta)/delta with
/// gamma(u) ~ exp(-1/(1-u^2)) on |u| < 1, normalised to h*sum = 1.
std::vector<double> bump_weights(double delta, const TorusGrid& grid);

/// Circular convolution of a nonlocal kernel with gamma_delta. Returns the
/// input unchanged when delta < 2h.
AversionKernel mollify(const AversionKernel& kernel, double delta, const TorusGrid& grid);

/// G[m](x_i) = h * sum_j phi(x_i - x_j) m_j.
void crowding_term(const AversionKernel& kernel, std::span<const double> density,
                   const TorusGrid& grid, std::span<double> out);
std::vector<double> crowding_term(const AversionKernel& kernel, std::span<const double> density,
                                  const TorusGrid& grid);

/// Transposed convolution G*[m](x_i) = h * sum_j phi(x_j - x_i) m_j, so that
/// <G[u], v> = <u, G*[v]>. Equal to crowding_term for symmetric kernels.
void crowding_term_transposed(const AversionKernel& kernel, std::span<const double> density,
                              const TorusGrid& grid, std::span<double> out);

/// crowding_term for Nonlocal kernels, a copy of the density for Local ones.
void penalty_field(const AversionKernel& kernel, std::span<const double> density,
                   const TorusGrid& grid, std::span<double> out);
void penalty_field_transposed(const AversionKernel& kernel, std::span<const double> density,
                              const TorusGrid& grid, std::span<double> out);

}  // namespace mfcrowd
