#include "calib/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "calib/rng.hpp"

namespace calib {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

ReplicateSeries load_data(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw data_error("cannot open data file: " + path);
    std::string line;
    std::size_t lineno = 0;

    // skip comment lines
    do {
        if (!std::getline(f, line)) throw data_error(path + ": empty file");
        ++lineno;
    } while (!line.empty() && line[0] == '#');

    std::vector<std::string> header = split_csv(line);
    if (header.size() < 2 || header[0] != "t")
        throw data_error(path + ":" + std::to_string(lineno) +
                         ": expected header `t,rep1,...`");
    const std::size_t n = header.size() - 1;

    ReplicateSeries data;
    data.series.assign(n, {});
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv(line);
        if (cells.size() != n + 1)
            throw data_error(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(n + 1) + " columns, found " +
                             std::to_string(cells.size()));
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c].empty())
                throw data_error(path + ":" + std::to_string(lineno) + ": column " +
                                 header[c] + " is missing a value");
            try {
                std::size_t used = 0;
                double v = std::stod(cells[c], &used);
                if (used != cells[c].size()) throw std::invalid_argument("trailing");
                if (!std::isfinite(v)) throw std::invalid_argument("nan");
                data.series[c - 1].push_back(v);
            } catch (const std::exception&) {
                throw data_error(path + ":" + std::to_string(lineno) + ": column " +
                                 header[c] + " is not a finite number: `" + cells[c] +
                                 "`");
            }
        }
    }
    if (data.T() < 4) throw data_error(path + ": needs at least 4 data rows");
    return data;
}

std::vector<double> estimated_spectra(const ReplicateSeries& data, std::size_t K) {
    std::vector<double> s_hat;
    s_hat.reserve(data.n() * K);
    for (const auto& series : data.series) {
        PowerSpectrum sp = power_spectrum(harmonic_coefficients(series, K));
        s_hat.insert(s_hat.end(), sp.s.begin(), sp.s.end());
    }
    return s_hat;
}

std::unique_ptr<HierarchicalModel> build_model(const ReplicateSeries& data,
                                               const RunConfig& cfg) {
    if (data.T() != cfg.ode.sample_count)
        throw data_error("data length T=" + std::to_string(data.T()) +
                         " does not match ode.sample_count=" +
                         std::to_string(cfg.ode.sample_count));
    if (data.T() < 2 * cfg.K + 1)
        throw data_error("data length T=" + std::to_string(data.T()) +
                         " too short for K=" + std::to_string(cfg.K) +
                         " (need T >= 2K+1)");
    const double sigma2 = cfg.sigma2_F ? *cfg.sigma2_F : estimate_sigma2(data.series);
    auto model = std::make_unique<HierarchicalModel>(
        estimated_spectra(data, cfg.K), data.n(), cfg.K, sigma2, cfg.prior_theta,
        cfg.prior_tau2, cfg.ode);
    model->set_prior_sigma2(cfg.prior_sigma2);
    return model;
}

SimulateResult simulate_data(const RunConfig& cfg, const std::string& path) {
    ThetaVector theta;
    theta.theta = cfg.simulate.theta_true;
    theta.c = cfg.c;
    if (!theta.valid()) throw config_error("simulate.theta_true must be positive");

    TrajectoryResult r = integrate(theta, cfg.ode);
    if (integration_failed(r))
        throw data_error("simulate: integration of theta_true failed");
    const Trajectory& traj = std::get<Trajectory>(r);

    SimulateResult res;
    OscillationCheck osc = detect_oscillation(traj, cfg.intervention.period.amp_tol);
    res.oscillating = osc.oscillating;
    res.peak_to_trough = osc.peak_to_trough;

    Rng rng(cfg.simulate.seed);
    std::ofstream f(path);
    if (!f) throw data_error("cannot write data file: " + path);
    f << "# calib v" << tool_version() << " config=" << config_hash(cfg) << "\n";
    f << "t";
    for (std::size_t i = 1; i <= cfg.simulate.replicates; ++i) f << ",rep" << i;
    f << "\n";
    std::vector<std::vector<double>> rows(cfg.simulate.replicates);
    for (std::size_t i = 0; i < cfg.simulate.replicates; ++i) {
        rows[i].resize(traj.values.size());
        for (std::size_t t = 0; t < traj.values.size(); ++t)
            rows[i][t] = traj.values[t] + cfg.simulate.noise_sigma * rng.normal();
    }
    for (std::size_t t = 0; t < traj.values.size(); ++t) {
        f << format_full(static_cast<double>(t) * traj.dt_out);
        for (std::size_t i = 0; i < cfg.simulate.replicates; ++i)
            f << "," << format_full(rows[i][t]);
        f << "\n";
    }
    if (!f) throw data_error("short write on data file: " + path);

    nlohmann::json sidecar;
    sidecar["theta_true"] = cfg.simulate.theta_true;
    sidecar["c"] = cfg.c;
    sidecar["noise_sigma"] = cfg.simulate.noise_sigma;
    sidecar["seed"] = cfg.simulate.seed;
    sidecar["oscillating"] = res.oscillating;
    sidecar["peak_to_trough"] = res.peak_to_trough;
    sidecar["config"] = config_hash(cfg);
    sidecar["version"] = tool_version();
    std::ofstream sc(path + ".truth.json");
    if (!sc) throw data_error("cannot write sidecar: " + path + ".truth.json");
    sc << sidecar.dump(2) << "\n";
    return res;
}

}  // namespace calib
