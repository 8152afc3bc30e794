#include "calib/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace calib {

using nlohmann::json;

namespace {

struct ErrorList {
    std::vector<std::string> errors;
    void add(const std::string& path, const std::string& what) {
        errors.push_back(path + ": " + what);
    }
    void raise_if_any() const {
        if (errors.empty()) return;
        std::string joined = "invalid config:";
        for (const auto& e : errors) joined += "\n  " + e;
        throw config_error(joined);
    }
};

class Reader {
public:
    Reader(const json& j, ErrorList& errs) : j_(j), errs_(errs) {}

    template <class T>
    void get(const json& obj, const std::string& path, const char* key, T& out) {
        auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            errs_.add(path + "." + key, "wrong type");
        }
    }
    template <class T>
    void get_opt(const json& obj, const std::string& path, const char* key,
                 std::optional<T>& out) {
        auto it = obj.find(key);
        if (it == obj.end()) return;
        if (it->is_null()) {
            out.reset();
            return;
        }
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            errs_.add(path + "." + key, "wrong type");
        }
    }
    const json& section(const char* key) {
        static const json empty = json::object();
        auto it = j_.find(key);
        if (it == j_.end()) return empty;
        if (!it->is_object()) {
            errs_.add(key, "must be an object");
            return empty;
        }
        return *it;
    }

private:
    const json& j_;
    ErrorList& errs_;
};

void check_positive(ErrorList& errs, const std::string& path, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) errs.add(path, "must be a positive number");
}

}  // namespace

ParameterBounds default_bounds() {
    ParameterBounds b;
    b.lo.assign(kThetaDim, 0.02);
    b.hi.assign(kThetaDim, 2.5);
    return b;
}

std::string tool_version() { return "0.1.0"; }

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config root must be a JSON object");

    RunConfig cfg;
    cfg.bounds = default_bounds();
    ErrorList errs;
    Reader r(j, errs);

    {
        const json& d = r.section("data");
        r.get(d, "data", "path", cfg.data_path);
    }
    {
        const json& s = r.section("spectral");
        r.get(s, "spectral", "K", cfg.K);
        r.get_opt(s, "spectral", "sigma2_F", cfg.sigma2_F);
        r.get(s, "spectral", "sample_sigma2", cfg.sample_sigma2);
        if (cfg.K < 1) errs.add("spectral.K", "must be >= 1");
        if (cfg.sigma2_F && !(*cfg.sigma2_F > 0.0))
            errs.add("spectral.sigma2_F", "must be positive when set");
    }
    {
        const json& b = r.section("bounds");
        r.get(b, "bounds", "lo", cfg.bounds.lo);
        r.get(b, "bounds", "hi", cfg.bounds.hi);
        if (cfg.bounds.lo.size() != kThetaDim)
            errs.add("bounds.lo", "needs exactly 9 entries");
        if (cfg.bounds.hi.size() != kThetaDim)
            errs.add("bounds.hi", "needs exactly 9 entries");
        if (cfg.bounds.lo.size() == cfg.bounds.hi.size())
            for (std::size_t i = 0; i < cfg.bounds.lo.size(); ++i) {
                if (!(cfg.bounds.lo[i] > 0.0))
                    errs.add("bounds.lo[" + std::to_string(i) + "]", "must be positive");
                if (!(cfg.bounds.lo[i] < cfg.bounds.hi[i]))
                    errs.add("bounds.hi[" + std::to_string(i) + "]",
                             "must exceed the lower bound");
            }
    }
    {
        const json& o = r.section("ode");
        r.get(o, "ode", "c", cfg.c);
        std::vector<double> ic{cfg.ode.initial_state.begin(), cfg.ode.initial_state.end()};
        r.get(o, "ode", "initial_state", ic);
        if (ic.size() != 3)
            errs.add("ode.initial_state", "needs exactly 3 entries");
        else
            std::copy(ic.begin(), ic.end(), cfg.ode.initial_state.begin());
        r.get(o, "ode", "transient_hours", cfg.ode.transient_hours);
        r.get(o, "ode", "dt_out", cfg.ode.dt_out);
        r.get(o, "ode", "sample_count", cfg.ode.sample_count);
        r.get(o, "ode", "abs_tol", cfg.ode.abs_tol);
        r.get(o, "ode", "rel_tol", cfg.ode.rel_tol);
        r.get(o, "ode", "max_step", cfg.ode.max_step);
        r.get(o, "ode", "init_step", cfg.ode.init_step);
        r.get(o, "ode", "overflow_guard", cfg.ode.overflow_guard);
        r.get(o, "ode", "hill_exponent_eq3", cfg.ode.hill_exponent_eq3);
        check_positive(errs, "ode.c", cfg.c);
        check_positive(errs, "ode.dt_out", cfg.ode.dt_out);
        check_positive(errs, "ode.abs_tol", cfg.ode.abs_tol);
        check_positive(errs, "ode.rel_tol", cfg.ode.rel_tol);
        check_positive(errs, "ode.max_step", cfg.ode.max_step);
        check_positive(errs, "ode.init_step", cfg.ode.init_step);
        check_positive(errs, "ode.overflow_guard", cfg.ode.overflow_guard);
        if (cfg.ode.transient_hours < 0.0)
            errs.add("ode.transient_hours", "must be >= 0");
        if (cfg.ode.sample_count < 3) errs.add("ode.sample_count", "must be >= 3");
        if (cfg.ode.hill_exponent_eq3 != 2 && cfg.ode.hill_exponent_eq3 != 4)
            errs.add("ode.hill_exponent_eq3", "must be 2 or 4");
    }
    {
        const json& p = r.section("priors");
        r.get(p, "priors", "a_theta", cfg.prior_theta.a);
        r.get(p, "priors", "b_theta", cfg.prior_theta.b);
        r.get(p, "priors", "a_tau", cfg.prior_tau2.a);
        r.get(p, "priors", "b_tau", cfg.prior_tau2.b);
        r.get(p, "priors", "a_sigma", cfg.prior_sigma2.a);
        r.get(p, "priors", "b_sigma", cfg.prior_sigma2.b);
        for (auto [name, v] : {std::pair<const char*, double>{"a_theta", cfg.prior_theta.a},
                               {"b_theta", cfg.prior_theta.b},
                               {"a_tau", cfg.prior_tau2.a},
                               {"b_tau", cfg.prior_tau2.b},
                               {"a_sigma", cfg.prior_sigma2.a},
                               {"b_sigma", cfg.prior_sigma2.b}})
            check_positive(errs, std::string("priors.") + name, v);
    }
    {
        const json& s = r.section("sweep");
        r.get(s, "sweep", "N", cfg.sweep.N);
        r.get(s, "sweep", "q", cfg.sweep.q);
        r.get(s, "sweep", "d0", cfg.sweep.d0);
        r.get_opt(s, "sweep", "l_min", cfg.sweep.l_min);
        r.get(s, "sweep", "l_min_top_fraction", cfg.sweep.l_min_top_fraction);
        r.get(s, "sweep", "n_min", cfg.sweep.n_min);
        r.get(s, "sweep", "rho0", cfg.sweep.rho0);
        r.get(s, "sweep", "rho1", cfg.sweep.rho1);
        r.get(s, "sweep", "design", cfg.sweep.design);
        r.get_opt(s, "sweep", "tau2", cfg.sweep.tau2);
        r.get(s, "sweep", "exact_cell_cap", cfg.sweep.exact_cell_cap);
        r.get(s, "sweep", "mc_points", cfg.sweep.mc_points);
        r.get(s, "sweep", "seed", cfg.sweep.seed);
        if (cfg.sweep.N < 1) errs.add("sweep.N", "must be >= 1");
        if (cfg.sweep.q < 2) errs.add("sweep.q", "must be >= 2");
        if (cfg.sweep.d0 < 1 || cfg.sweep.d0 > kThetaDim)
            errs.add("sweep.d0", "must be in 1..9");
        if (!(cfg.sweep.l_min_top_fraction > 0.0 && cfg.sweep.l_min_top_fraction < 1.0))
            errs.add("sweep.l_min_top_fraction", "must be in (0,1)");
        if (!(cfg.sweep.rho0 > 0.0) || !(cfg.sweep.rho1 >= cfg.sweep.rho0))
            errs.add("sweep.rho0", "need rho1 >= rho0 > 0");
        if (cfg.sweep.design != "iid" && cfg.sweep.design != "oa-factorial")
            errs.add("sweep.design", "must be \"iid\" or \"oa-factorial\"");
        if (cfg.sweep.mc_points < 1000000)
            errs.add("sweep.mc_points", "must be >= 1000000");
    }
    {
        const json& s = r.section("sampler");
        SamplerSettings& st = cfg.sampler.settings;
        r.get(s, "sampler", "algorithm", cfg.sampler.algorithm);
        r.get(s, "sampler", "instrumental", cfg.sampler.instrumental);
        r.get(s, "sampler", "multiset_size", st.multiset_size);
        r.get(s, "sampler", "iterations", st.iterations);
        r.get(s, "sampler", "burn_in_frac", st.burn_in_frac);
        r.get(s, "sampler", "thin", st.thin);
        r.get(s, "sampler", "seed", st.seed);
        r.get(s, "sampler", "stepsize_theta_frac", st.stepsize_theta_frac);
        r.get(s, "sampler", "stepsize_s_frac", st.stepsize_s_frac);
        r.get(s, "sampler", "stepsize_tau2_frac", st.stepsize_tau2_frac);
        r.get(s, "sampler", "adapt", st.adapt);
        r.get(s, "sampler", "target_accept", st.target_accept);
        r.get(s, "sampler", "tau2_init", st.tau2_init);
        r.get(s, "sampler", "init_attempts", st.init_attempts);
        r.get(s, "sampler", "checkpoint_interval", cfg.sampler.checkpoint_interval);
        st.sample_sigma2 = cfg.sample_sigma2;
        if (cfg.sampler.algorithm != "gmss" && cfg.sampler.algorithm != "mh")
            errs.add("sampler.algorithm", "must be \"gmss\" or \"mh\"");
        if (cfg.sampler.instrumental != "prospect" && cfg.sampler.instrumental != "uniform")
            errs.add("sampler.instrumental", "must be \"prospect\" or \"uniform\"");
        if (st.multiset_size < 1) errs.add("sampler.multiset_size", "must be >= 1");
        if (!(st.burn_in_frac >= 0.0 && st.burn_in_frac < 1.0))
            errs.add("sampler.burn_in_frac", "must be in [0,1)");
        if (st.thin < 1) errs.add("sampler.thin", "must be >= 1");
        if (!(st.target_accept > 0.0 && st.target_accept < 1.0))
            errs.add("sampler.target_accept", "must be in (0,1)");
        check_positive(errs, "sampler.stepsize_theta_frac", st.stepsize_theta_frac);
        check_positive(errs, "sampler.stepsize_s_frac", st.stepsize_s_frac);
        check_positive(errs, "sampler.stepsize_tau2_frac", st.stepsize_tau2_frac);
        if (st.tau2_init < 0.0) errs.add("sampler.tau2_init", "must be >= 0");
        if (st.init_attempts < 1) errs.add("sampler.init_attempts", "must be >= 1");
    }
    {
        const json& iv = r.section("intervention");
        InterventionConfig& ic = cfg.intervention;
        r.get(iv, "intervention", "targets", ic.targets);
        r.get(iv, "intervention", "alphas", ic.alphas);
        r.get(iv, "intervention", "deltas", ic.deltas);
        r.get(iv, "intervention", "feature", ic.feature);
        r.get(iv, "intervention", "baseline", ic.baseline);
        r.get(iv, "intervention", "data_period", ic.data_period);
        r.get(iv, "intervention", "draw_cap", ic.draw_cap);
        r.get(iv, "intervention", "resample_seed", ic.resample_seed);
        r.get(iv, "intervention", "pairs", ic.pairs);
        r.get(iv, "intervention", "nominal_period", ic.period.nominal_period);
        r.get(iv, "intervention", "window_cycles", ic.period.window_cycles);
        r.get(iv, "intervention", "period_dt", ic.period.dt);
        r.get(iv, "intervention", "amp_tol", ic.period.amp_tol);
        for (std::size_t t : ic.targets)
            if (t < 1 || t > kThetaDim)
                errs.add("intervention.targets", "entries are 1-based indices in 1..9");
        for (double a : ic.alphas)
            if (!(a > 0.0)) errs.add("intervention.alphas", "must all be positive");
        if (ic.feature != "period" && ic.feature != "frequency")
            errs.add("intervention.feature", "must be \"period\" or \"frequency\"");
        if (ic.baseline != "paired" && ic.baseline != "data")
            errs.add("intervention.baseline", "must be \"paired\" or \"data\"");
        for (auto& pr : ic.pairs)
            if (pr[0] < 1 || pr[0] > kThetaDim || pr[1] < 1 || pr[1] > kThetaDim ||
                pr[0] == pr[1])
                errs.add("intervention.pairs", "entries must be distinct indices in 1..9");
        check_positive(errs, "intervention.nominal_period", ic.period.nominal_period);
        check_positive(errs, "intervention.window_cycles", ic.period.window_cycles);
        check_positive(errs, "intervention.period_dt", ic.period.dt);
        check_positive(errs, "intervention.amp_tol", ic.period.amp_tol);
    }
    {
        const json& s = r.section("simulate");
        std::vector<double> th{cfg.simulate.theta_true.begin(),
                               cfg.simulate.theta_true.end()};
        r.get(s, "simulate", "theta_true", th);
        if (th.size() != kThetaDim)
            errs.add("simulate.theta_true", "needs exactly 9 entries");
        else
            std::copy(th.begin(), th.end(), cfg.simulate.theta_true.begin());
        r.get(s, "simulate", "noise_sigma", cfg.simulate.noise_sigma);
        r.get(s, "simulate", "replicates", cfg.simulate.replicates);
        r.get(s, "simulate", "seed", cfg.simulate.seed);
        if (cfg.simulate.noise_sigma < 0.0)
            errs.add("simulate.noise_sigma", "must be >= 0");
        if (cfg.simulate.replicates < 1) errs.add("simulate.replicates", "must be >= 1");
    }
    {
        const json& o = r.section("output");
        r.get(o, "output", "dir", cfg.output_dir);
    }
    {
        r.get(j, "", "workers", cfg.workers);
        if (cfg.workers < 1) errs.add("workers", "must be >= 1");
    }
    if (cfg.K > max_harmonics(cfg.ode.sample_count))
        errs.add("spectral.K", "exceeds floor((T-1)/2) for ode.sample_count");

    errs.raise_if_any();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
    json j;
    j["data"]["path"] = cfg.data_path;
    j["spectral"]["K"] = cfg.K;
    j["spectral"]["sigma2_F"] = cfg.sigma2_F ? json(*cfg.sigma2_F) : json(nullptr);
    j["spectral"]["sample_sigma2"] = cfg.sample_sigma2;
    j["bounds"]["lo"] = cfg.bounds.lo;
    j["bounds"]["hi"] = cfg.bounds.hi;
    j["ode"]["c"] = cfg.c;
    j["ode"]["initial_state"] = cfg.ode.initial_state;
    j["ode"]["transient_hours"] = cfg.ode.transient_hours;
    j["ode"]["dt_out"] = cfg.ode.dt_out;
    j["ode"]["sample_count"] = cfg.ode.sample_count;
    j["ode"]["abs_tol"] = cfg.ode.abs_tol;
    j["ode"]["rel_tol"] = cfg.ode.rel_tol;
    j["ode"]["max_step"] = cfg.ode.max_step;
    j["ode"]["init_step"] = cfg.ode.init_step;
    j["ode"]["overflow_guard"] = cfg.ode.overflow_guard;
    j["ode"]["hill_exponent_eq3"] = cfg.ode.hill_exponent_eq3;
    j["priors"]["a_theta"] = cfg.prior_theta.a;
    j["priors"]["b_theta"] = cfg.prior_theta.b;
    j["priors"]["a_tau"] = cfg.prior_tau2.a;
    j["priors"]["b_tau"] = cfg.prior_tau2.b;
    j["priors"]["a_sigma"] = cfg.prior_sigma2.a;
    j["priors"]["b_sigma"] = cfg.prior_sigma2.b;
    j["sweep"]["N"] = cfg.sweep.N;
    j["sweep"]["q"] = cfg.sweep.q;
    j["sweep"]["d0"] = cfg.sweep.d0;
    j["sweep"]["l_min"] = cfg.sweep.l_min ? json(*cfg.sweep.l_min) : json(nullptr);
    j["sweep"]["l_min_top_fraction"] = cfg.sweep.l_min_top_fraction;
    j["sweep"]["n_min"] = cfg.sweep.n_min;
    j["sweep"]["rho0"] = cfg.sweep.rho0;
    j["sweep"]["rho1"] = cfg.sweep.rho1;
    j["sweep"]["design"] = cfg.sweep.design;
    j["sweep"]["tau2"] = cfg.sweep.tau2 ? json(*cfg.sweep.tau2) : json(nullptr);
    j["sweep"]["exact_cell_cap"] = cfg.sweep.exact_cell_cap;
    j["sweep"]["mc_points"] = cfg.sweep.mc_points;
    j["sweep"]["seed"] = cfg.sweep.seed;
    const SamplerSettings& st = cfg.sampler.settings;
    j["sampler"]["algorithm"] = cfg.sampler.algorithm;
    j["sampler"]["instrumental"] = cfg.sampler.instrumental;
    j["sampler"]["multiset_size"] = st.multiset_size;
    j["sampler"]["iterations"] = st.iterations;
    j["sampler"]["burn_in_frac"] = st.burn_in_frac;
    j["sampler"]["thin"] = st.thin;
    j["sampler"]["seed"] = st.seed;
    j["sampler"]["stepsize_theta_frac"] = st.stepsize_theta_frac;
    j["sampler"]["stepsize_s_frac"] = st.stepsize_s_frac;
    j["sampler"]["stepsize_tau2_frac"] = st.stepsize_tau2_frac;
    j["sampler"]["adapt"] = st.adapt;
    j["sampler"]["target_accept"] = st.target_accept;
    j["sampler"]["tau2_init"] = st.tau2_init;
    j["sampler"]["init_attempts"] = st.init_attempts;
    j["sampler"]["checkpoint_interval"] = cfg.sampler.checkpoint_interval;
    j["intervention"]["targets"] = cfg.intervention.targets;
    j["intervention"]["alphas"] = cfg.intervention.alphas;
    j["intervention"]["deltas"] = cfg.intervention.deltas;
    j["intervention"]["feature"] = cfg.intervention.feature;
    j["intervention"]["baseline"] = cfg.intervention.baseline;
    j["intervention"]["data_period"] = cfg.intervention.data_period;
    j["intervention"]["draw_cap"] = cfg.intervention.draw_cap;
    j["intervention"]["resample_seed"] = cfg.intervention.resample_seed;
    j["intervention"]["pairs"] = cfg.intervention.pairs;
    j["intervention"]["nominal_period"] = cfg.intervention.period.nominal_period;
    j["intervention"]["window_cycles"] = cfg.intervention.period.window_cycles;
    j["intervention"]["period_dt"] = cfg.intervention.period.dt;
    j["intervention"]["amp_tol"] = cfg.intervention.period.amp_tol;
    j["simulate"]["theta_true"] = cfg.simulate.theta_true;
    j["simulate"]["noise_sigma"] = cfg.simulate.noise_sigma;
    j["simulate"]["replicates"] = cfg.simulate.replicates;
    j["simulate"]["seed"] = cfg.simulate.seed;
    j["output"]["dir"] = cfg.output_dir;
    j["workers"] = cfg.workers;
    return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(serialize_config(cfg))));
    return buf;
}

}  // namespace calib
