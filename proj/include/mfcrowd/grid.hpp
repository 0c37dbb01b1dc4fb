#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mfcrowd {

/// Uniform periodic grid on a circle of circumference `length`.
/// Node i sits at x_i = i*h and is the centre of the finite-volume cell
/// [x_i - h/2, x_i + h/2).
class TorusGrid {
 public:
    explicit TorusGrid(std::size_t n_x, double length = 1.0);

    std::size_t size() const { return n_x_; }
    double length() const { return length_; }
    double h() const { return h_; }
    double node(std::size_t i) const { return static_cast<double>(i) * h_; }

    std::size_t wrap(std::ptrdiff_t i) const;
    /// Maps any real position into [0, length).
    double wrap_position(double x) const;
    /// Index of the cell whose centre is nearest to x.
    std::size_t nearest_cell(double x) const;
    /// Signed shortest displacement y - x, in [-length/2, length/2).
    double displacement(double x, double y) const;
    /// Geodesic distance on the circle.
    double distance(double x, double y) const;

 private:
    std::size_t n_x_;
    double length_;
    double h_;
};

class TimeGrid {
 public:
    TimeGrid(double horizon, std::size_t n_t);

    double horizon() const { return horizon_; }
    std::size_t steps() const { return n_t_; }
    double dt() const { return dt_; }
    double time(std::size_t k) const { return static_cast<double>(k) * dt_; }

 private:
    double horizon_;
    std::size_t n_t_;
    double dt_;
};

/// Dense row-major (time x space) array of doubles.
class SpaceTimeField {
 public:
    SpaceTimeField() = default;
    SpaceTimeField(std::size_t n_slices, std::size_t n_x, double fill = 0.0);

    std::size_t slices() const { return n_slices_; }
    std::size_t width() const { return n_x_; }

    std::span<double> slice(std::size_t k) { return {data_.data() + k * n_x_, n_x_}; }
    std::span<const double> slice(std::size_t k) const { return {data_.data() + k * n_x_, n_x_}; }

    double& operator()(std::size_t k, std::size_t i) { return data_[k * n_x_ + i]; }
    double operator()(std::size_t k, std::size_t i) const { return data_[k * n_x_ + i]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool operator==(const SpaceTimeField&) const = default;

 private:
    std::size_t n_slices_ = 0;
    std::size_t n_x_ = 0;
    std::vector<double> data_;
};

/// Probability densities m(t_k, x_i), k = 0..n_t. Each slice has unit mass.
class DensityField : public SpaceTimeField {
 public:
    DensityField() = default;
    DensityField(const TimeGrid& time, const TorusGrid& grid)
        : SpaceTimeField(time.steps() + 1, grid.size()) {}
};

/// Feedback control a(t_k, x_i), piecewise constant on [t_k, t_{k+1}),
/// k = 0..n_t-1, with values in [-a_max, a_max].
class ControlField : public SpaceTimeField {
 public:
    ControlField() = default;
    ControlField(const TimeGrid& time, const TorusGrid& grid, double a_max, double fill = 0.0);

    double a_max() const { return a_max_; }
    void clamp();
    bool within_bounds() const;

 private:
    double a_max_ = 0.0;
};

/// Costate p(t_k, x_i), k = 0..n_t, with p(T, .) equal to the terminal cost.
class AdjointField : public SpaceTimeField {
 public:
    AdjointField() = default;
    AdjointField(const TimeGrid& time, const TorusGrid& grid)
        : SpaceTimeField(time.steps() + 1, grid.size()) {}
};

/// Midpoint rule h * sum(slice).
double integrate(std::span<const double> slice, const TorusGrid& grid);

/// Periodic central difference (s[i+1] - s[i-1]) / 2h.
std::vector<double> gradient_x(std::span<const double> slice, const TorusGrid& grid);
void gradient_x(std::span<const double> slice, const TorusGrid& grid, std::span<double> out);

/// Writes `t,x,value` rows (time-major), 17 significant digits. Every
/// `stride`-th slice is written, and the last slice always is.
void write_field_csv(std::ostream& out, const SpaceTimeField& field, const TorusGrid& grid,
                     const TimeGrid& time, std::size_t stride = 1);
void write_field_csv(const std::string& path, const SpaceTimeField& field, const TorusGrid& grid,
                     const TimeGrid& time, std::size_t stride = 1);

struct CsvFieldRow {
    double t;
    double x;
    double value;
};
std::vector<CsvFieldRow> read_field_csv(const std::string& path);

}  // namespace mfcrowd
