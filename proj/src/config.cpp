#include "mfcrowd/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

#include "mfcrowd/errors.hpp"
#include "mfcrowd/risk.hpp"

namespace mfcrowd {

namespace {

using Keys = std::set<std::string, std::less<>>;

std::string join(const std::string& where, std::string_view key) {
    return where.empty() ? std::string(key) : where + "." + std::string(key);
}

void reject_unknown(const toml::table& table, const Keys& allowed, const std::string& where) {
    for (const auto& [key, node] : table) {
        if (!allowed.contains(key.str())) {
            std::string list;
            for (const auto& k : allowed) {
                list += (list.empty() ? "" : ", ") + k;
            }
            throw ConfigError("unknown key '" + std::string(key.str()) + "' in " + where +
                              " (allowed: " + list + ")");
        }
    }
}

const toml::table* sub_table(const toml::table& parent, std::string_view key,
                             const std::string& where) {
    const auto* node = parent.get(key);
    if (node == nullptr) {
        return nullptr;
    }
    const auto* table = node->as_table();
    if (table == nullptr) {
        throw ConfigError(join(where, key) + " must be a table");
    }
    return table;
}

double get_real(const toml::table& t, std::string_view key, double fallback,
                const std::string& where) {
    const auto* node = t.get(key);
    if (node == nullptr) {
        return fallback;
    }
    if (const auto v = node->value<double>(); v && (node->is_floating_point() || node->is_integer())) {
        return *v;
    }
    throw ConfigError(join(where, key) + " must be a number");
}

std::int64_t get_int(const toml::table& t, std::string_view key, std::int64_t fallback,
                     const std::string& where) {
    const auto* node = t.get(key);
    if (node == nullptr) {
        return fallback;
    }
    if (!node->is_integer()) {
        throw ConfigError(join(where, key) + " must be an integer");
    }
    return *node->value<std::int64_t>();
}

std::size_t get_count(const toml::table& t, std::string_view key, std::size_t fallback,
                      const std::string& where) {
    const auto v = get_int(t, key, static_cast<std::int64_t>(fallback), where);
    if (v < 0) {
        throw ConfigError(join(where, key) + " must be nonnegative");
    }
    return static_cast<std::size_t>(v);
}

std::string get_string(const toml::table& t, std::string_view key, const std::string& fallback,
                       const std::string& where) {
    const auto* node = t.get(key);
    if (node == nullptr) {
        return fallback;
    }
    if (!node->is_string()) {
        throw ConfigError(join(where, key) + " must be a string");
    }
    return *node->value<std::string>();
}

std::vector<double> get_reals(const toml::node& node, const std::string& where) {
    const auto* arr = node.as_array();
    if (arr == nullptr) {
        throw ConfigError(where + " must be an array of numbers");
    }
    std::vector<double> out;
    for (const auto& item : *arr) {
        if (!(item.is_floating_point() || item.is_integer())) {
            throw ConfigError(where + " must contain only numbers");
        }
        out.push_back(*item.value<double>());
    }
    return out;
}

ProfileSpec parse_profile(const toml::node& node, const std::string& where) {
    const auto* t = node.as_table();
    if (t == nullptr) {
        throw ConfigError(where + " must be a table such as { kind = \"wrapped_gaussian\" }");
    }
    ProfileSpec spec;
    spec.kind = get_string(*t, "kind", "", where);
    if (spec.kind == "wrapped_gaussian") {
        reject_unknown(*t, {"kind", "center", "std"}, where);
        spec.center = get_real(*t, "center", 0.0, where);
        spec.width = get_real(*t, "std", 0.1, where);
    } else if (spec.kind == "well") {
        reject_unknown(*t, {"kind", "center", "width", "height"}, where);
        spec.center = get_real(*t, "center", 0.5, where);
        spec.width = get_real(*t, "width", 0.1, where);
        spec.height = get_real(*t, "height", 2.0, where);
    } else if (spec.kind == "table") {
        reject_unknown(*t, {"kind", "values"}, where);
        const auto* values = t->get("values");
        if (values == nullptr) {
            throw ConfigError(where + ".values is required for kind = \"table\"");
        }
        spec.values = get_reals(*values, where + ".values");
    } else if (spec.kind == "uniform" || spec.kind == "zero") {
        reject_unknown(*t, {"kind"}, where);
    } else {
        throw ConfigError(where + ".kind must be one of wrapped_gaussian, well, table, uniform, zero");
    }
    return spec;
}

nlohmann::json profile_json(const ProfileSpec& p) {
    nlohmann::json j;
    j["kind"] = p.kind;
    if (p.kind == "wrapped_gaussian") {
        j["center"] = p.center;
        j["std"] = p.width;
    } else if (p.kind == "well") {
        j["center"] = p.center;
        j["width"] = p.width;
        j["height"] = p.height;
    } else if (p.kind == "table") {
        j["values"] = p.values;
    }
    return j;
}

constexpr std::string_view kRequired = "C, kernel, grid.T, [[crowd]]";

MultiCrowdProblem build(const toml::table& root, const std::string& source) {
    const std::string top = source;
    reject_unknown(root,
                   {"C", "arms", "kernel", "grid", "dynamics", "optimizer", "convexity",
                    "particles", "output", "crowd"},
                   top);
    std::vector<std::string> missing;
    const auto* grid_t = sub_table(root, "grid", "");
    if (!root.contains("C")) {
        missing.push_back("C");
    }
    if (!root.contains("kernel")) {
        missing.push_back("kernel");
    }
    if (grid_t == nullptr || !grid_t->contains("T")) {
        missing.push_back("grid.T");
    }
    if (!root.contains("crowd")) {
        missing.push_back("[[crowd]]");
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) {
            list += (list.empty() ? "" : ", ") + m;
        }
        throw ConfigError(source + ": missing required keys: " + list +
                          " (required: " + std::string(kRequired) + ")");
    }

    MultiCrowdProblem p;
    p.aversion_weight = get_real(root, "C", 0.0, "");
    if (!(p.aversion_weight >= 0.0)) {
        throw ConfigError("C must be nonnegative");
    }

    reject_unknown(*grid_t, {"n_x", "n_t", "T", "length"}, "grid");
    p.n_x = get_count(*grid_t, "n_x", p.n_x, "grid");
    p.n_t = get_count(*grid_t, "n_t", 0, "grid");
    p.horizon = get_real(*grid_t, "T", p.horizon, "grid");
    p.length = get_real(*grid_t, "length", p.length, "grid");
    if (p.n_x < 8) {
        throw ConfigError("grid.n_x must be at least 8");
    }
    if (!(p.horizon > 0.0) || !(p.length > 0.0)) {
        throw ConfigError("grid.T and grid.length must be positive");
    }
    if (grid_t->contains("n_t") && p.n_t == 0) {
        throw ConfigError("grid.n_t must be positive");
    }

    if (const auto* t = sub_table(root, "dynamics", "")) {
        reject_unknown(*t, {"sigma"}, "dynamics");
        p.dynamics.sigma = get_real(*t, "sigma", p.dynamics.sigma, "dynamics");
    }
    if (!(p.dynamics.sigma >= 0.0)) {
        throw ConfigError("dynamics.sigma must be nonnegative");
    }

    const auto* kernel_t = root.get("kernel")->as_table();
    if (kernel_t == nullptr) {
        throw ConfigError("kernel must be a table { mode, support_lo, support_hi, delta }");
    }
    reject_unknown(*kernel_t, {"mode", "support_lo", "support_hi", "delta"}, "kernel");
    p.kernel.mode = parse_kernel_mode(get_string(*kernel_t, "mode", "nonlocal", "kernel"));
    p.kernel.support_lo = get_real(*kernel_t, "support_lo", p.kernel.support_lo, "kernel");
    p.kernel.support_hi = get_real(*kernel_t, "support_hi", p.kernel.support_hi, "kernel");
    p.kernel.delta = get_real(*kernel_t, "delta", 0.0, "kernel");

    if (const auto* node = root.get("arms")) {
        const auto* arr = node->as_array();
        if (arr == nullptr || arr->empty()) {
            throw ConfigError("arms must be a nonempty array of \"local\" / \"nonlocal\"");
        }
        p.arms.clear();
        for (const auto& item : *arr) {
            const auto name = item.value<std::string>();
            if (!name) {
                throw ConfigError("arms must contain strings");
            }
            parse_kernel_mode(*name);
            if (std::find(p.arms.begin(), p.arms.end(), *name) != p.arms.end()) {
                throw ConfigError("arms lists '" + *name + "' twice");
            }
            p.arms.push_back(*name);
        }
    } else if (p.kernel.mode == KernelMode::Local) {
        p.arms = {"local"};
    }
    if (p.kernel.mode == KernelMode::Local &&
        std::find(p.arms.begin(), p.arms.end(), "nonlocal") != p.arms.end()) {
        throw ConfigError("arm 'nonlocal' needs kernel.mode = \"nonlocal\"");
    }

    if (const auto* t = sub_table(root, "optimizer", "")) {
        reject_unknown(*t, {"tau0", "shrink", "max_iters", "rel_tol", "a_max", "max_halvings"},
                       "optimizer");
        p.gdm.tau0 = get_real(*t, "tau0", p.gdm.tau0, "optimizer");
        p.gdm.shrink = get_real(*t, "shrink", p.gdm.shrink, "optimizer");
        p.gdm.max_iters = get_count(*t, "max_iters", p.gdm.max_iters, "optimizer");
        p.gdm.rel_tol = get_real(*t, "rel_tol", p.gdm.rel_tol, "optimizer");
        p.gdm.a_max = get_real(*t, "a_max", p.gdm.a_max, "optimizer");
        p.gdm.max_halvings = get_count(*t, "max_halvings", p.gdm.max_halvings, "optimizer");
    }
    p.gdm.validate();

    if (const auto* t = sub_table(root, "convexity", "")) {
        reject_unknown(*t, {"trials", "seed"}, "convexity");
        p.convexity_trials = get_count(*t, "trials", p.convexity_trials, "convexity");
        p.convexity_seed = get_count(*t, "seed", p.convexity_seed, "convexity");
    }

    if (const auto* t = sub_table(root, "particles", "")) {
        reject_unknown(*t, {"ladder", "seeds", "seed", "checkpoints"}, "particles");
        if (const auto* node = t->get("ladder")) {
            p.particles.ladder.clear();
            for (double v : get_reals(*node, "particles.ladder")) {
                if (!(v >= 1.0) || v != std::floor(v)) {
                    throw ConfigError("particles.ladder entries must be positive integers");
                }
                p.particles.ladder.push_back(static_cast<std::size_t>(v));
            }
        }
        p.particles.seeds = get_count(*t, "seeds", p.particles.seeds, "particles");
        p.particles.seed = get_count(*t, "seed", p.particles.seed, "particles");
        p.particles.checkpoints = get_count(*t, "checkpoints", p.particles.checkpoints, "particles");
        if (p.particles.seeds == 0 || p.particles.checkpoints == 0) {
            throw ConfigError("particles.seeds and particles.checkpoints must be positive");
        }
    }

    if (const auto* t = sub_table(root, "output", "")) {
        reject_unknown(*t, {"time_stride"}, "output");
        p.output_stride = get_count(*t, "time_stride", p.output_stride, "output");
        if (p.output_stride == 0) {
            throw ConfigError("output.time_stride must be positive");
        }
    }

    const auto* crowds = root.get("crowd")->as_array();
    if (crowds == nullptr || crowds->empty()) {
        throw ConfigError("crowd must be a nonempty array of tables ([[crowd]])");
    }
    for (std::size_t j = 0; j < crowds->size(); ++j) {
        const std::string where = "crowd[" + std::to_string(j) + "]";
        const auto* t = (*crowds)[j].as_table();
        if (t == nullptr) {
            throw ConfigError(where + " must be a table");
        }
        reject_unknown(*t, {"profile", "m0", "psi", "lambda"}, where);
        CrowdSpec crowd;
        bool have_m0 = false;
        bool have_psi = false;
        if (t->contains("profile")) {
            const auto prof = builtin_profiles(get_string(*t, "profile", "", where));
            crowd.m0 = prof.m0;
            crowd.psi = prof.psi;
            have_m0 = have_psi = true;
        }
        if (const auto* node = t->get("m0")) {
            crowd.m0 = parse_profile(*node, where + ".m0");
            have_m0 = true;
        }
        if (const auto* node = t->get("psi")) {
            crowd.psi = parse_profile(*node, where + ".psi");
            have_psi = true;
        }
        if (!have_m0 || !have_psi) {
            throw ConfigError(where + " needs m0 and psi (directly or through profile)");
        }
        if (const auto* node = t->get("lambda")) {
            crowd.lambda_row = get_reals(*node, where + ".lambda");
        }
        p.crowds.push_back(std::move(crowd));
    }

    const std::size_t m = p.crowds.size();
    p.lambda.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j) {
        auto& row = p.crowds[j].lambda_row;
        if (row.empty() && m == 1) {
            row = {1.0};
        }
        if (row.size() != m) {
            throw ConfigError("crowd[" + std::to_string(j) + "].lambda must have " +
                              std::to_string(m) + " entries");
        }
        for (std::size_t l = 0; l < m; ++l) {
            p.lambda(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = row[l];
        }
    }
    try {
        p.lambda_bar = symmetrize_lambda(p.lambda);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("crowd lambda rows: ") + e.what());
    }

    const TorusGrid grid = p.grid();
    if (p.n_t == 0) {
        p.n_t = auto_time_steps(grid, p.dynamics, p.gdm.a_max, p.horizon);
        p.notes.push_back("grid.n_t defaulted to " + std::to_string(p.n_t) +
                          " (smallest power of two satisfying CFL)");
    }
    check_cfl(grid, p.time(), p.dynamics, p.gdm.a_max);

    for (const auto& mode_name : p.arms) {
        if (parse_kernel_mode(mode_name) == KernelMode::Nonlocal) {
            p.build_kernel(KernelMode::Nonlocal);
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        std::string note;
        discretize_profile(p.crowds[j].m0, grid, true, &note);
        if (!note.empty()) {
            p.notes.push_back("crowd[" + std::to_string(j) + "].m0: " + note);
        }
        discretize_profile(p.crowds[j].psi, grid, false);
    }
    return p;
}

}  // namespace

KernelMode parse_kernel_mode(std::string_view name) {
    if (name == "nonlocal") {
        return KernelMode::Nonlocal;
    }
    if (name == "local") {
        return KernelMode::Local;
    }
    throw ConfigError("kernel mode must be \"local\" or \"nonlocal\", got \"" + std::string(name) +
                      "\"");
}

std::string to_string(KernelMode mode) {
    return mode == KernelMode::Local ? "local" : "nonlocal";
}

std::size_t auto_time_steps(const TorusGrid& grid, const Dynamics& dynamics, double a_max,
                            double horizon) {
    const double limit = cfl_max_dt(grid, dynamics, a_max);
    std::size_t n_t = 1;
    while (horizon / static_cast<double>(n_t) > limit) {
        n_t *= 2;
    }
    return n_t;
}

Profiles builtin_profiles(std::string_view name) {
    if (name == "paper_fig1") {
        ProfileSpec m0;
        m0.kind = "wrapped_gaussian";
        m0.center = 0.0;
        m0.width = 0.1;
        ProfileSpec psi;
        psi.kind = "well";
        psi.center = 0.5;
        psi.width = 0.1;
        psi.height = 2.0;
        return {m0, psi};
    }
    if (name == "flat") {
        ProfileSpec m0;
        m0.kind = "uniform";
        ProfileSpec psi;
        psi.kind = "zero";
        return {m0, psi};
    }
    throw ConfigError("unknown profile \"" + std::string(name) +
                      "\" (known: paper_fig1, flat)");
}

std::vector<double> discretize_profile(const ProfileSpec& spec, const TorusGrid& grid,
                                       bool density, std::string* note) {
    const std::size_t n = grid.size();
    const double length = grid.length();
    std::vector<double> v(n, 0.0);
    if (spec.kind == "wrapped_gaussian") {
        if (!(spec.width > 0.0)) {
            throw ConfigError("wrapped_gaussian std must be positive");
        }
        const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * spec.width);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = grid.displacement(spec.center, grid.node(i));
            for (int image = -3; image <= 3; ++image) {
                const double y = d + image * length;
                v[i] += norm * std::exp(-y * y / (2.0 * spec.width * spec.width));
            }
        }
    } else if (spec.kind == "well") {
        if (!(spec.width > 0.0)) {
            throw ConfigError("well width must be positive");
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double d = grid.distance(spec.center, grid.node(i));
            v[i] = spec.height * (1.0 - std::exp(-d * d / (2.0 * spec.width * spec.width)));
        }
    } else if (spec.kind == "table") {
        if (spec.values.size() != n) {
            throw ConfigError("tabulated profile has " + std::to_string(spec.values.size()) +
                              " values, grid.n_x is " + std::to_string(n));
        }
        v = spec.values;
    } else if (spec.kind == "uniform") {
        std::fill(v.begin(), v.end(), 1.0 / length);
    } else if (spec.kind != "zero") {
        throw ConfigError("unknown profile kind \"" + spec.kind + "\"");
    }
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw ConfigError("profile values must be finite");
        }
    }
    if (density) {
        for (double x : v) {
            if (x < 0.0) {
                throw ConfigError("initial density values must be nonnegative");
            }
        }
        const double mass = integrate(v, grid);
        if (!(mass > 0.0)) {
            throw ConfigError("initial density has zero mass");
        }
        if (std::fabs(mass - 1.0) > 1e-12 && note != nullptr) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "renormalised from mass " << mass;
            *note = msg.str();
        }
        for (double& x : v) {
            x /= mass;
        }
    }
    return v;
}

AversionKernel MultiCrowdProblem::build_kernel(KernelMode mode) const {
    if (mode == KernelMode::Local) {
        return AversionKernel::local();
    }
    if (kernel.mode == KernelMode::Local) {
        throw ConfigError("nonlocal arm requested with kernel.mode = \"local\"");
    }
    const TorusGrid g = grid();
    const double delta = kernel.delta > 0.0 ? kernel.delta : 4.0 * g.h();
    try {
        const auto indicator = build_indicator_kernel({kernel.support_lo, kernel.support_hi}, g);
        return mollify(indicator, delta, g);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("kernel: ") + e.what());
    }
}

ControlProblem MultiCrowdProblem::control_problem(KernelMode mode) const {
    const TorusGrid g = grid();
    ControlProblem p{g, time(), dynamics, build_kernel(mode), aversion_weight, lambda_bar, {}, {}};
    for (const auto& crowd : crowds) {
        p.m0.push_back(discretize_profile(crowd.m0, g, true));
        p.psi.push_back(discretize_profile(crowd.psi, g, false));
    }
    p.validate(gdm.a_max);
    return p;
}

std::string MultiCrowdProblem::echo_json() const {
    nlohmann::json j;
    j["C"] = aversion_weight;
    j["arms"] = arms;
    j["kernel"] = {{"mode", to_string(kernel.mode)},
                   {"support_lo", kernel.support_lo},
                   {"support_hi", kernel.support_hi},
                   {"delta", kernel.delta > 0.0 ? kernel.delta : 4.0 * length / n_x}};
    j["grid"] = {{"n_x", n_x}, {"n_t", n_t}, {"T", horizon}, {"length", length}};
    j["dynamics"] = {{"sigma", dynamics.sigma}};
    j["optimizer"] = {{"tau0", gdm.tau0},       {"shrink", gdm.shrink},
                      {"max_iters", gdm.max_iters}, {"rel_tol", gdm.rel_tol},
                      {"a_max", gdm.a_max},     {"max_halvings", gdm.max_halvings}};
    j["convexity"] = {{"trials", convexity_trials}, {"seed", convexity_seed}};
    j["particles"] = {{"ladder", particles.ladder},
                      {"seeds", particles.seeds},
                      {"seed", particles.seed},
                      {"checkpoints", particles.checkpoints}};
    j["output"] = {{"time_stride", output_stride}};
    nlohmann::json crowd_list = nlohmann::json::array();
    for (const auto& c : crowds) {
        crowd_list.push_back({{"m0", profile_json(c.m0)},
                              {"psi", profile_json(c.psi)},
                              {"lambda", c.lambda_row}});
    }
    j["crowd"] = crowd_list;
    j["notes"] = notes;
    return j.dump(2);
}

MultiCrowdProblem parse_config_text(std::string_view text, const std::string& source) {
    toml::table root;
    try {
        root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << source << ": " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }
    return build(root, source);
}

MultiCrowdProblem parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str(), path);
}

}  // namespace mfcrowd
