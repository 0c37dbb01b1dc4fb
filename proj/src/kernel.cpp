#include "mfcrowd/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mfcrowd/errors.hpp"

namespace mfcrowd {
namespace {

std::vector<AversionKernel::Tap> collect_taps(const std::vector<double>& weights) {
    std::vector<AversionKernel::Tap> taps;
    for (std::size_t o = 0; o < weights.size(); ++o) {
        if (weights[o] != 0.0) {
            taps.push_back({o, weights[o]});
        }
    }
    return taps;
}

double overlap(double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

void require_nonlocal(const AversionKernel& kernel, const char* what) {
    if (kernel.is_local()) {
        throw ModeError(std::string(what) + ": local kernel has no convolution weights");
    }
}

void check_sizes(const AversionKernel& kernel, std::span<const double> density,
                 const TorusGrid& grid, std::span<double> out, const char* what) {
    const std::size_t n = grid.size();
    if (density.size() != n || out.size() != n ||
        (!kernel.is_local() && kernel.weights().size() != n)) {
        throw DimensionError(std::string(what) + ": size mismatch with grid");
    }
}

// out[i] = h sum_o w_o src[i - o], or src[i + o] when transposed. The
// source is laid out twice so every tap reads one contiguous run.
void circular_convolve(const std::vector<AversionKernel::Tap>& taps,
                       std::span<const double> src, double h, bool transposed,
                       std::span<double> out) {
    const std::size_t n = src.size();
    thread_local std::vector<double> ext;
    thread_local std::vector<double> acc;
    ext.resize(2 * n);
    std::copy(src.begin(), src.end(), ext.begin());
    std::copy(src.begin(), src.end(), ext.begin() + static_cast<std::ptrdiff_t>(n));
    acc.assign(n, 0.0);
    double* a = acc.data();
    for (const auto& tap : taps) {
        const double* base = transposed ? ext.data() + tap.offset : ext.data() + n - tap.offset;
        const double w = tap.weight;
        for (std::size_t i = 0; i < n; ++i) {
            a[i] += w * base[i];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = h * a[i];
    }
}

}  // namespace

AversionKernel AversionKernel::local() {
    return AversionKernel{};
}

AversionKernel AversionKernel::nonlocal(std::vector<double> weights, Interval support,
                                        double delta) {
    AversionKernel k;
    k.mode_ = KernelMode::Nonlocal;
    k.taps_ = collect_taps(weights);
    k.weights_ = std::move(weights);
    k.support_ = support;
    k.delta_ = delta;
    return k;
}

double AversionKernel::mass(const TorusGrid& grid) const {
    if (is_local()) {
        return 1.0;
    }
    double s = 0.0;
    for (double w : weights_) {
        s += w;
    }
    return grid.h() * s;
}

bool AversionKernel::is_symmetric(double tol) const {
    if (is_local()) {
        return true;
    }
    const std::size_t n = weights_.size();
    for (std::size_t o = 1; o < n; ++o) {
        if (std::fabs(weights_[o] - weights_[n - o]) > tol) {
            return false;
        }
    }
    return true;
}

AversionKernel build_indicator_kernel(Interval support, const TorusGrid& grid) {
    const double s = support.length();
    const double len = grid.length();
    if (!(s > 0.0) || !(s < len)) {
        throw std::invalid_argument("build_indicator_kernel: support length " + std::to_string(s) +
                                    " must lie strictly between 0 and the torus length");
    }
    const double lo = grid.wrap_position(support.lo);
    const double hi = lo + s;
    const double h = grid.h();
    std::vector<double> weights(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double c = grid.node(i);
        double covered = 0.0;
        for (int k = -1; k <= 2; ++k) {
            const double shift = k * len;
            covered += overlap(c - 0.5 * h + shift, c + 0.5 * h + shift, lo, hi);
        }
        weights[i] = covered / (h * s);
    }
    return AversionKernel::nonlocal(std::move(weights), support, 0.0);
}

std::vector<double> bump_weights(double delta, const TorusGrid& grid) {
    if (!(delta > 0.0)) {
        throw std::invalid_argument("bump_weights: delta must be positive");
    }
    std::vector<double> b(grid.size(), 0.0);
    double sum = 0.0;
    for (std::size_t o = 0; o < grid.size(); ++o) {
        const double u = grid.displacement(0.0, grid.node(o)) / delta;
        if (std::fabs(u) < 1.0) {
            b[o] = std::exp(-1.0 / (1.0 - u * u));
            sum += b[o];
        }
    }
    if (sum == 0.0) {
        // delta below half a cell: the bump collapses onto the origin
        b[0] = 1.0;
        sum = 1.0;
    }
    for (double& v : b) {
        v /= grid.h() * sum;
    }
    return b;
}

AversionKernel mollify(const AversionKernel& kernel, double delta, const TorusGrid& grid) {
    if (!(delta > 0.0)) {
        throw std::invalid_argument("mollify: delta must be positive");
    }
    require_nonlocal(kernel, "mollify");
    if (delta < 2.0 * grid.h()) {
        return kernel;
    }
    const std::size_t n = grid.size();
    const auto bump = bump_weights(delta, grid);
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += bump[(i + n - j) % n] * kernel.weights()[j];
        }
        out[i] = grid.h() * acc;
    }
    return AversionKernel::nonlocal(std::move(out), kernel.support(), delta);
}

void crowding_term(const AversionKernel& kernel, std::span<const double> density,
                   const TorusGrid& grid, std::span<double> out) {
    require_nonlocal(kernel, "crowding_term");
    check_sizes(kernel, density, grid, out, "crowding_term");
    circular_convolve(kernel.taps(), density, grid.h(), false, out);
}

std::vector<double> crowding_term(const AversionKernel& kernel, std::span<const double> density,
                                  const TorusGrid& grid) {
    std::vector<double> out(grid.size());
    crowding_term(kernel, density, grid, out);
    return out;
}

void crowding_term_transposed(const AversionKernel& kernel, std::span<const double> density,
                              const TorusGrid& grid, std::span<double> out) {
    require_nonlocal(kernel, "crowding_term_transposed");
    check_sizes(kernel, density, grid, out, "crowding_term_transposed");
    circular_convolve(kernel.taps(), density, grid.h(), true, out);
}

void penalty_field(const AversionKernel& kernel, std::span<const double> density,
                   const TorusGrid& grid, std::span<double> out) {
    if (kernel.is_local()) {
        check_sizes(kernel, density, grid, out, "penalty_field");
        std::copy(density.begin(), density.end(), out.begin());
        return;
    }
    crowding_term(kernel, density, grid, out);
}

void penalty_field_transposed(const AversionKernel& kernel, std::span<const double> density,
                              const TorusGrid& grid, std::span<double> out) {
    if (kernel.is_local()) {
        check_sizes(kernel, density, grid, out, "penalty_field_transposed");
        std::copy(density.begin(), density.end(), out.begin());
        return;
    }
    crowding_term_transposed(kernel, density, grid, out);
}

}  // namespace mfcrowd
