#include "kmpc/config.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <utility>

#include "kmpc/io.hpp"
#include "kmpc/koopman.hpp"

namespace kmpc {

namespace {

using nlohmann::json;

class Section {
public:
    Section(const json* j, std::string path) : j_(j), path_(std::move(path))
    {
        if (j_ && !j_->is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    }

    [[noreturn]] static void fail(const std::string& where, const std::string& what)
    {
        throw ConfigError(where + ": " + what);
    }

    std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const char* key)
    {
        seen_.insert(key);
        if (!j_) return nullptr;
        const auto it = j_->find(key);
        return it == j_->end() ? nullptr : &*it;
    }

    Section sub(const char* key)
    {
        const json* v = find(key);
        return Section(v, at(key));
    }

    void get(const char* key, double& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_number()) fail(at(key), "expected a number");
            out = v->get<double>();
        }
    }
    void get(const char* key, int& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) fail(at(key), "expected an integer");
            out = v->get<int>();
        }
    }
    void get(const char* key, std::size_t& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_number_integer() || v->get<long long>() < 0) fail(at(key), "expected a nonnegative integer");
            out = v->get<std::size_t>();
        }
    }
    void get(const char* key, bool& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) fail(at(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void get(const char* key, std::string& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_string()) fail(at(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const char* key, std::vector<double>& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_array()) fail(at(key), "expected an array of numbers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number()) fail(at(key) + "[" + std::to_string(i) + "]", "expected a number");
                out.push_back((*v)[i].get<double>());
            }
        }
    }
    void get(const char* key, std::vector<int>& out)
    {
        if (const json* v = find(key)) {
            if (!v->is_array()) fail(at(key), "expected an array of integers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number_integer()) fail(at(key) + "[" + std::to_string(i) + "]", "expected an integer");
                out.push_back((*v)[i].get<int>());
            }
        }
    }
    /// Square matrix from a number (1x1) or an array of rows.
    void get(const char* key, Mat& out)
    {
        const json* v = find(key);
        if (!v) return;
        if (v->is_number()) {
            out = Mat::Constant(1, 1, v->get<double>());
            return;
        }
        if (!v->is_array() || v->empty()) fail(at(key), "expected a number or an array of rows");
        const auto n = v->size();
        Mat m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const json& row = (*v)[i];
            if (!row.is_array() || row.size() != n) fail(at(key), "expected a square matrix");
            for (std::size_t k = 0; k < n; ++k) {
                if (!row[k].is_number()) fail(at(key), "expected numeric entries");
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k].get<double>();
            }
        }
        out = m;
    }

    void finish() const
    {
        if (!j_) return;
        for (const auto& [k, v] : j_->items())
            if (!seen_.count(k)) fail(at(k.c_str()), "unknown field");
    }

private:
    const json* j_;
    std::string path_;
    std::set<std::string> seen_;
};

json mat_json(const Mat& m)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        a.push_back(row);
    }
    return a;
}

}  // namespace

ExperimentConfig parse_config(const json& j)
{
    ExperimentConfig c;
    Section root(&j, "");

    {
        Section s = root.sub("plant");
        auto& p = c.plant;
        s.get("H", p.H);
        s.get("omega_s", p.omega_s);
        s.get("D", p.D);
        s.get("Tdo_prime", p.Tdo_prime);
        s.get("Xd", p.Xd);
        s.get("Xd_prime", p.Xd_prime);
        s.get("Xe", p.Xe);
        s.get("V_inf", p.V_inf);
        s.get("E_fd", p.E_fd);
        s.get("dt", p.dt);
        s.finish();
    }
    {
        Section s = root.sub("region");
        auto& r = c.region;
        s.get("delta_s", r.delta_s);
        s.get("delta_max", r.delta_max);
        s.get("omega_max", r.omega_max);
        s.get("Eq_min", r.Eq_min);
        s.get("Eq_max", r.Eq_max);
        s.get("u_min", r.u_min);
        s.get("u_max", r.u_max);
        s.finish();
    }
    {
        Section s = root.sub("certify");
        s.get("n_samples", c.certify.n_samples);
        s.get("include_corners", c.certify.include_corners);
        s.finish();
    }
    {
        Section s = root.sub("bounds");
        auto& b = c.bounds;
        s.get("L_pred", b.L_pred);
        s.get("n_grid", b.n_grid);
        s.get("L_grid", b.L_grid);
        s.get("kappa_beta", b.kappa_beta);
        s.get("c_env", b.c_env);
        s.get("R_max_factor", b.R_max_factor);
        s.get("tol", b.tol);
        s.finish();
    }
    {
        Section s = root.sub("data");
        auto& d = c.data;
        std::string mode = d.mode == LibraryMode::SingleTrajectory ? "single" : "library";
        s.get("mode", mode);
        if (mode == "single") d.mode = LibraryMode::SingleTrajectory;
        else if (mode == "library") d.mode = LibraryMode::MultiTrajectory;
        else Section::fail(s.at("mode"), "expected \"single\" or \"library\"");
        s.get("amplitude", d.excitation.amplitude);
        std::string center = d.excitation.center == ExcitationConfig::Center::Equilibrium ? "equilibrium" : "initial_power";
        s.get("center", center);
        if (center == "equilibrium") d.excitation.center = ExcitationConfig::Center::Equilibrium;
        else if (center == "initial_power") d.excitation.center = ExcitationConfig::Center::InitialPower;
        else Section::fail(s.at("center"), "expected \"equilibrium\" or \"initial_power\"");
        s.get("init_box_fraction", d.excitation.init_box_fraction);
        s.get("max_attempts", d.excitation.max_attempts_per_trajectory);
        s.get("length", d.length);
        s.get("l", d.l);
        s.finish();
    }
    {
        Section s = root.sub("represent");
        auto& r = c.represent;
        s.get("T_ini", r.T_ini);
        s.get("N", r.N);
        s.get("l", r.l);
        s.get("amplitude", r.amplitude);
        s.get("n_fresh", r.n_fresh);
        s.get("perturbation", r.perturbation);
        s.get("tol", r.tol);
        s.get("corrupt_min", r.corrupt_min);
        s.finish();
    }
    {
        Section s = root.sub("mpc");
        auto& m = c.mpc;
        s.get("L_pred", m.cfg.L_pred);
        s.get("n_z", m.cfg.n_z);
        s.get("Q", m.cfg.Q);
        s.get("R", m.cfg.R);
        s.get("lambda_alpha", m.cfg.lambda_alpha);
        s.get("lambda_sigma", m.cfg.lambda_sigma);
        if (const json* v = s.find("eps_bar")) {
            if (v->is_number()) {
                m.eps_bar_choice = EpsBarChoice::Value;
                m.eps_bar_value = v->get<double>();
            } else if (v->is_string() && *v == "loose") {
                m.eps_bar_choice = EpsBarChoice::Loose;
            } else if (v->is_string() && *v == "tight") {
                m.eps_bar_choice = EpsBarChoice::Tight;
            } else {
                Section::fail(s.at("eps_bar"), "expected a number, \"loose\" or \"tight\"");
            }
        }
        std::string slack = m.cfg.slack_mode == SlackMode::Sequential ? "sequential" : "fixed";
        s.get("slack_mode", slack);
        if (slack == "sequential") m.cfg.slack_mode = SlackMode::Sequential;
        else if (slack == "fixed") m.cfg.slack_mode = SlackMode::Fixed;
        else Section::fail(s.at("slack_mode"), "expected \"sequential\" or \"fixed\"");
        s.get("alpha_bar", m.cfg.alpha_bar);
        s.get("slack_max_iter", m.cfg.slack_max_iter);
        s.get("slack_tol", m.cfg.slack_tol);
        s.get("delta0_offset", m.delta0_offset);
        s.get("duration", m.duration);
        s.get("iterations", m.iterations);
        s.get("stop_on_region_exit", m.stop_on_region_exit);
        s.get("gate_samples", m.gate_samples);
        {
            Section q = s.sub("qp");
            q.get("eps_abs", m.cfg.qp.eps_abs);
            q.get("eps_rel", m.cfg.qp.eps_rel);
            q.get("max_iter", m.cfg.qp.max_iter);
            q.get("rho", m.cfg.qp.rho);
            q.get("polish", m.cfg.qp.polish);
            q.finish();
        }
        s.finish();
    }
    {
        Section s = root.sub("sweep");
        s.get("parameter", c.sweep.parameter);
        s.get("values", c.sweep.values);
        s.get("closed_loop", c.sweep.closed_loop);
        s.finish();
    }
    if (const json* v = root.find("seed"); v && !v->is_null()) {
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
            Section::fail("seed", "expected a nonnegative integer");
        c.seed = v->get<std::uint64_t>();
    }
    root.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    return parse_config(read_json(path));
}

void ExperimentConfig::validate() const
{
    const auto wrap = [](const char* section, const auto& fn) {
        try {
            fn();
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string(section) + ": " + e.what());
        }
    };
    const std::pair<const char*, double> positive[] = {
        {"H", plant.H},       {"omega_s", plant.omega_s}, {"Tdo_prime", plant.Tdo_prime}, {"Xd", plant.Xd},
        {"Xd_prime", plant.Xd_prime}, {"Xe", plant.Xe},   {"V_inf", plant.V_inf},         {"E_fd", plant.E_fd},
        {"dt", plant.dt}};
    for (const auto& [name, v] : positive)
        if (!(std::isfinite(v) && v > 0.0)) throw ConfigError(std::string("plant.") + name + ": must be finite and positive");
    if (!(std::isfinite(plant.D) && plant.D >= 0.0)) throw ConfigError("plant.D: must be finite and nonnegative");
    if (plant.dt > 0.005) throw ConfigError("plant.dt: must not exceed 0.005");
    wrap("plant", [&] { plant.validate(); });
    if (!(region.delta_max > 0.0 && region.delta_max < std::numbers::pi / 2))
        throw ConfigError("region.delta_max: must lie in (0, pi/2)");
    if (!(region.omega_max >= 0.0)) throw ConfigError("region.omega_max: must be nonnegative");
    if (!(region.Eq_min < region.Eq_max)) throw ConfigError("region.Eq_min: must be below region.Eq_max");
    if (!(region.u_min < region.u_max)) throw ConfigError("region.u_min: must be below region.u_max");
    wrap("region", [&] { region.validate(); });
    if (certify.n_samples < 1) throw ConfigError("certify.n_samples: must be at least 1");
    if (bounds.L_pred < 2) throw ConfigError("bounds.L_pred: must be at least 2");
    if (bounds.n_grid < 2) throw ConfigError("bounds.n_grid: must be at least 2");
    for (std::size_t i = 0; i < bounds.L_grid.size(); ++i)
        if (bounds.L_grid[i] < 2) throw ConfigError("bounds.L_grid[" + std::to_string(i) + "]: must be at least 2");
    if (!(bounds.kappa_beta >= 0.0)) throw ConfigError("bounds.kappa_beta: must be nonnegative");
    if (!(bounds.c_env >= 0.0)) throw ConfigError("bounds.c_env: must be nonnegative");
    if (!(bounds.R_max_factor > 0.0)) throw ConfigError("bounds.R_max_factor: must be positive");
    if (!(bounds.tol > 0.0)) throw ConfigError("bounds.tol: must be positive");
    if (!(data.excitation.amplitude >= 0.0)) throw ConfigError("data.amplitude: must be nonnegative");
    if (!(data.excitation.init_box_fraction >= 0.0 && data.excitation.init_box_fraction <= 1.0))
        throw ConfigError("data.init_box_fraction: must lie in [0, 1]");
    if (data.excitation.max_attempts_per_trajectory < 1) throw ConfigError("data.max_attempts: must be positive");
    if (represent.T_ini < kLiftDim) throw ConfigError("represent.T_ini: must be at least 7");
    if (represent.N < 1) throw ConfigError("represent.N: must be positive");
    if (represent.n_fresh < 1) throw ConfigError("represent.n_fresh: must be positive");
    if (!(mpc.duration > 0.0)) throw ConfigError("mpc.duration: must be positive");
    if (mpc.iterations < 0) throw ConfigError("mpc.iterations: must be nonnegative");
    if (mpc.eps_bar_choice == EpsBarChoice::Value && !(mpc.eps_bar_value >= 0.0))
        throw ConfigError("mpc.eps_bar: must be nonnegative");
    {
        MpcConfig m = mpc.cfg;
        m.u_s = Vec::Constant(1, 0.5 * (region.u_min + region.u_max));
        m.y_s = Vec::Zero(m.Q.rows() == 2 ? 2 : m.Q.rows());
        m.u_min = region.u_min;
        m.u_max = region.u_max;
        m.eps_bar = 0.0;
        wrap("mpc", [&] { m.validate(false); });
        if (m.Q.rows() != 2) throw ConfigError("mpc.Q: must be 2x2");
        if (m.R.rows() != 1) throw ConfigError("mpc.R: must be 1x1");
    }
    if (sweep.parameter != "dt" && sweep.parameter != "L_pred")
        throw ConfigError("sweep.parameter: expected \"dt\" or \"L_pred\"");
    if (sweep.values.empty()) throw ConfigError("sweep.values: must not be empty");
    for (std::size_t i = 0; i < sweep.values.size(); ++i) {
        const double v = sweep.values[i];
        const std::string where = "sweep.values[" + std::to_string(i) + "]";
        if (sweep.parameter == "dt" && !(v > 0.0 && v <= 0.005)) throw ConfigError(where + ": dt must lie in (0, 0.005]");
        if (sweep.parameter == "L_pred" && (v != std::floor(v) || v < 2.0))
            throw ConfigError(where + ": L_pred must be an integer >= 2");
    }
}

json config_to_json(const ExperimentConfig& c)
{
    json j;
    const auto& p = c.plant;
    j["plant"] = {{"H", p.H},     {"omega_s", p.omega_s}, {"D", p.D},         {"Tdo_prime", p.Tdo_prime},
                  {"Xd", p.Xd},   {"Xd_prime", p.Xd_prime}, {"Xe", p.Xe},    {"V_inf", p.V_inf},
                  {"E_fd", p.E_fd}, {"dt", p.dt}};
    const auto& r = c.region;
    j["region"] = {{"delta_s", r.delta_s}, {"delta_max", r.delta_max}, {"omega_max", r.omega_max},
                   {"Eq_min", r.Eq_min},   {"Eq_max", r.Eq_max},       {"u_min", r.u_min},
                   {"u_max", r.u_max}};
    j["certify"] = {{"n_samples", c.certify.n_samples}, {"include_corners", c.certify.include_corners}};
    j["bounds"] = {{"L_pred", c.bounds.L_pred},         {"n_grid", c.bounds.n_grid},
                   {"L_grid", c.bounds.L_grid},         {"kappa_beta", c.bounds.kappa_beta},
                   {"c_env", c.bounds.c_env},           {"R_max_factor", c.bounds.R_max_factor},
                   {"tol", c.bounds.tol}};
    j["data"] = {{"mode", c.data.mode == LibraryMode::SingleTrajectory ? "single" : "library"},
                 {"amplitude", c.data.excitation.amplitude},
                 {"center", c.data.excitation.center == ExcitationConfig::Center::Equilibrium ? "equilibrium"
                                                                                              : "initial_power"},
                 {"init_box_fraction", c.data.excitation.init_box_fraction},
                 {"max_attempts", c.data.excitation.max_attempts_per_trajectory},
                 {"length", c.data.length},
                 {"l", c.data.l}};
    j["represent"] = {{"T_ini", c.represent.T_ini},         {"N", c.represent.N},
                      {"l", c.represent.l},                 {"amplitude", c.represent.amplitude},
                      {"n_fresh", c.represent.n_fresh},     {"perturbation", c.represent.perturbation},
                      {"tol", c.represent.tol},             {"corrupt_min", c.represent.corrupt_min}};
    const auto& m = c.mpc;
    json eps;
    if (m.eps_bar_choice == EpsBarChoice::Loose) eps = "loose";
    else if (m.eps_bar_choice == EpsBarChoice::Tight) eps = "tight";
    else eps = m.eps_bar_value;
    j["mpc"] = {{"L_pred", m.cfg.L_pred},
                {"n_z", m.cfg.n_z},
                {"Q", mat_json(m.cfg.Q)},
                {"R", mat_json(m.cfg.R)},
                {"lambda_alpha", m.cfg.lambda_alpha},
                {"lambda_sigma", m.cfg.lambda_sigma},
                {"eps_bar", eps},
                {"slack_mode", m.cfg.slack_mode == SlackMode::Sequential ? "sequential" : "fixed"},
                {"alpha_bar", m.cfg.alpha_bar},
                {"slack_max_iter", m.cfg.slack_max_iter},
                {"slack_tol", m.cfg.slack_tol},
                {"delta0_offset", m.delta0_offset},
                {"duration", m.duration},
                {"iterations", m.iterations},
                {"stop_on_region_exit", m.stop_on_region_exit},
                {"gate_samples", m.gate_samples},
                {"qp",
                 {{"eps_abs", m.cfg.qp.eps_abs},
                  {"eps_rel", m.cfg.qp.eps_rel},
                  {"max_iter", m.cfg.qp.max_iter},
                  {"rho", m.cfg.qp.rho},
                  {"polish", m.cfg.qp.polish}}}};
    j["sweep"] = {{"parameter", c.sweep.parameter}, {"values", c.sweep.values}, {"closed_loop", c.sweep.closed_loop}};
    j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
    return j;
}

}  // namespace kmpc
