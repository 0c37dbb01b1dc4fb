#include "mfcrowd/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "mfcrowd/errors.hpp"

namespace mfcrowd {

TorusGrid::TorusGrid(std::size_t n_x, double length)
    : n_x_(n_x), length_(length), h_(length / static_cast<double>(n_x)) {
    if (n_x < 8) {
        throw std::invalid_argument("TorusGrid: n_x must be at least 8");
    }
    if (!(length > 0.0) || !std::isfinite(length)) {
        throw std::invalid_argument("TorusGrid: length must be positive");
    }
}

std::size_t TorusGrid::wrap(std::ptrdiff_t i) const {
    const auto n = static_cast<std::ptrdiff_t>(n_x_);
    std::ptrdiff_t r = i % n;
    if (r < 0) {
        r += n;
    }
    return static_cast<std::size_t>(r);
}

double TorusGrid::wrap_position(double x) const {
    double r = std::fmod(x, length_);
    if (r < 0.0) {
        r += length_;
    }
    // fmod of a tiny negative number can round up to exactly length
    if (r >= length_) {
        r = 0.0;
    }
    return r;
}

std::size_t TorusGrid::nearest_cell(double x) const {
    const double u = wrap_position(x) / h_;
    return wrap(static_cast<std::ptrdiff_t>(std::floor(u + 0.5)));
}

double TorusGrid::displacement(double x, double y) const {
    double d = std::fmod(y - x, length_);
    if (d < -0.5 * length_) {
        d += length_;
    } else if (d >= 0.5 * length_) {
        d -= length_;
    }
    return d;
}

double TorusGrid::distance(double x, double y) const {
    return std::fabs(displacement(x, y));
}

TimeGrid::TimeGrid(double horizon, std::size_t n_t)
    : horizon_(horizon), n_t_(n_t), dt_(horizon / static_cast<double>(n_t)) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw std::invalid_argument("TimeGrid: horizon must be positive");
    }
    if (n_t == 0) {
        throw std::invalid_argument("TimeGrid: n_t must be positive");
    }
}

SpaceTimeField::SpaceTimeField(std::size_t n_slices, std::size_t n_x, double fill)
    : n_slices_(n_slices), n_x_(n_x), data_(n_slices * n_x, fill) {}

ControlField::ControlField(const TimeGrid& time, const TorusGrid& grid, double a_max, double fill)
    : SpaceTimeField(time.steps(), grid.size(), fill), a_max_(a_max) {
    if (!(a_max >= 0.0)) {
        throw std::invalid_argument("ControlField: a_max must be nonnegative");
    }
    clamp();
}

void ControlField::clamp() {
    for (double& v : values()) {
        v = std::clamp(v, -a_max_, a_max_);
    }
}

bool ControlField::within_bounds() const {
    return std::all_of(values().begin(), values().end(),
                       [this](double v) { return std::fabs(v) <= a_max_; });
}

double integrate(std::span<const double> slice, const TorusGrid& grid) {
    if (slice.size() != grid.size()) {
        throw DimensionError("integrate: slice length " + std::to_string(slice.size()) +
                             " does not match n_x = " + std::to_string(grid.size()));
    }
    double sum = 0.0;
    for (double v : slice) {
        sum += v;
    }
    return grid.h() * sum;
}

void gradient_x(std::span<const double> slice, const TorusGrid& grid, std::span<double> out) {
    const std::size_t n = grid.size();
    if (slice.size() != n || out.size() != n) {
        throw DimensionError("gradient_x: slice length does not match grid");
    }
    const double inv_2h = 0.5 / grid.h();
    out[0] = (slice[1] - slice[n - 1]) * inv_2h;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        out[i] = (slice[i + 1] - slice[i - 1]) * inv_2h;
    }
    out[n - 1] = (slice[0] - slice[n - 2]) * inv_2h;
}

std::vector<double> gradient_x(std::span<const double> slice, const TorusGrid& grid) {
    std::vector<double> out(grid.size());
    gradient_x(slice, grid, out);
    return out;
}

void write_field_csv(std::ostream& out, const SpaceTimeField& field, const TorusGrid& grid,
                     const TimeGrid& time, std::size_t stride) {
    if (field.width() != grid.size()) {
        throw DimensionError("write_field_csv: field width does not match grid");
    }
    stride = std::max<std::size_t>(stride, 1);
    out << "t,x,value\n";
    out << std::setprecision(17);
    const std::size_t last = field.slices() == 0 ? 0 : field.slices() - 1;
    for (std::size_t k = 0; k < field.slices(); ++k) {
        if (k % stride != 0 && k != last) {
            continue;
        }
        const double t = time.time(k);
        const auto row = field.slice(k);
        for (std::size_t i = 0; i < row.size(); ++i) {
            out << t << ',' << grid.node(i) << ',' << row[i] << '\n';
        }
    }
}

void write_field_csv(const std::string& path, const SpaceTimeField& field, const TorusGrid& grid,
                     const TimeGrid& time, std::size_t stride) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_field_csv(out, field, grid, time, stride);
}

std::vector<CsvFieldRow> read_field_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::string line;
    std::getline(in, line);
    if (line != "t,x,value") {
        throw std::runtime_error(path + ": unexpected header '" + line + "'");
    }
    std::vector<CsvFieldRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        CsvFieldRow row{};
        char c1 = 0;
        char c2 = 0;
        if (!(ss >> row.t >> c1 >> row.x >> c2 >> row.value) || c1 != ',' || c2 != ',') {
            throw std::runtime_error(path + ": malformed row '" + line + "'");
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace mfcrowd
