#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "calib/calibration.hpp"
#include "calib/chainio.hpp"
#include "calib/config.hpp"
#include "calib/data.hpp"
#include "calib/gmss.hpp"
#include "calib/intervention.hpp"
#include "calib/parallel.hpp"
#include "calib/report.hpp"

namespace fs = std::filesystem;
using namespace calib;

namespace {

struct missing_prerequisite : std::runtime_error {
    explicit missing_prerequisite(const std::string& w) : std::runtime_error(w) {}
};

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<std::string> out;
    std::optional<std::string> algorithm;
    std::optional<std::size_t> multiset_size;
    bool resume = false;
    bool force = false;
    bool dump_config = false;
};

RunConfig effective_config(const CliOptions& opt) {
    RunConfig cfg = opt.config_path.empty() ? parse_config("{}")
                                            : load_config(opt.config_path);
    if (opt.seed) cfg.sampler.settings.seed = *opt.seed;
    if (opt.workers) cfg.workers = *opt.workers;
    if (opt.out) cfg.output_dir = *opt.out;
    if (opt.algorithm) cfg.sampler.algorithm = *opt.algorithm;
    if (opt.multiset_size) cfg.sampler.settings.multiset_size = *opt.multiset_size;
    if (opt.algorithm && *opt.algorithm != "gmss" && *opt.algorithm != "mh")
        throw config_error("--algorithm must be gmss or mh");
    return cfg;
}

std::string out_path(const RunConfig& cfg, const char* name) {
    fs::create_directories(cfg.output_dir);
    return (fs::path(cfg.output_dir) / name).string();
}

double sweep_tau2(const RunConfig& cfg, const HierarchicalModel& model) {
    if (cfg.sweep.tau2) return *cfg.sweep.tau2;
    double mean_abs = 0.0;
    for (double v : model.s_hat()) mean_abs += std::abs(v);
    mean_abs /= static_cast<double>(model.s_hat().size());
    return std::max(0.04 * mean_abs * mean_abs, 1e-12);
}

int cmd_simulate(const CliOptions& opt) {
    RunConfig cfg = effective_config(opt);
    const std::string path = out_path(cfg, "data.csv");
    SimulateResult res = simulate_data(cfg, path);
    if (!res.oscillating)
        std::cerr << "warning: theta_true does not oscillate (peak-to-trough "
                  << res.peak_to_trough << "); wrote the data anyway\n";
    std::cout << "wrote " << path << " and " << path << ".truth.json\n";
    return 0;
}

int cmd_prognose(const CliOptions& opt) {
    RunConfig cfg = effective_config(opt);
    const std::string hash = config_hash(cfg);
    ReplicateSeries data = load_data(cfg.data_path);
    auto model = build_model(data, cfg);
    const double tau2 = sweep_tau2(cfg, *model);
    const std::string sweep_path = out_path(cfg, "sweep.csv");
    const std::string map_path = out_path(cfg, "prospect_map.txt");

    std::uint64_t start = 0;
    if (opt.resume && fs::exists(sweep_path)) {
        std::string existing_hash = file_config_hash(sweep_path);
        if (existing_hash != hash)
            throw config_error("sweep file " + sweep_path +
                               " was produced under a different config; refusing to "
                               "resume");
        start = count_sweep_rows(sweep_path);
    }
    const DesignKind kind =
        cfg.sweep.design == "iid" ? DesignKind::iid : DesignKind::oa_factorial;

    struct Row {
        std::vector<double> u;
        bool ok;
        double loglik;
    };
    auto eval_point = [&](std::uint64_t index) -> Row {
        Row row;
        row.u = design_point(cfg.sweep.seed, index, kThetaDim, kind, cfg.sweep.q);
        ThetaVector theta;
        cfg.bounds.from_unit(row.u, theta.theta);
        theta.c = cfg.c;
        SpectrumResult r = model_spectrum(theta, cfg.K, cfg.ode);
        if (spectrum_failed(r)) {
            row.ok = false;
            row.loglik = kNegInf;
            return row;
        }
        const PowerSpectrum& lam = std::get<PowerSpectrum>(r);
        double acc = 0.0;
        for (std::size_t i = 0; i < model->n(); ++i)
            acc += model->row_loglik(lam.s, model->s_hat_row(i), tau2);
        row.ok = std::isfinite(acc);
        row.loglik = row.ok ? acc : kNegInf;
        return row;
    };

    if (start < cfg.sweep.N) {
        SweepWriter writer(sweep_path, kThetaDim, hash, start > 0);
        parallel_map_ordered(
            cfg.sweep.N - start, cfg.workers,
            [&](std::size_t i) { return eval_point(start + i); },
            [&](std::size_t i, const Row& row) {
                writer.write(start + i, row.u, row.ok, row.loglik);
            });
        writer.flush();
    }

    // Reduce: threshold from the finite logliks, then cell counting.
    double l_min;
    if (cfg.sweep.l_min) {
        l_min = *cfg.sweep.l_min;
    } else {
        std::vector<double> finite;
        read_sweep(sweep_path, [&](const SweepRow& row) {
            if (row.ok && std::isfinite(row.loglik)) finite.push_back(row.loglik);
        });
        l_min = threshold_top_fraction(std::move(finite), cfg.sweep.l_min_top_fraction);
    }
    ProspectClassifier cls(kThetaDim, cfg.sweep.q, cfg.sweep.d0, l_min, cfg.sweep.n_min);
    std::uint64_t total = read_sweep(sweep_path, [&](const SweepRow& row) {
        if (row.ok) cls.add(row.u, row.loglik);
    });
    VolhighSettings vol{cfg.sweep.exact_cell_cap, cfg.sweep.mc_points, cfg.sweep.seed};
    ProspectMap map = cls.finish(cfg.sweep.rho0, cfg.sweep.rho1, vol);
    map.save(map_path, hash);

    std::cout << "sweep: " << total << " points, l_min=" << format_full(l_min)
              << ", marked cells=" << map.marked_count()
              << ", volhigh=" << format_full(map.volhigh()) << " ("
              << map.volhigh_method() << ")\n";
    std::cout << "wrote " << sweep_path << " and " << map_path << "\n";
    return 0;
}

ChainMeta make_meta(const RunConfig& cfg, const std::string& hash, std::size_t n,
                    const RunPlan& plan) {
    ChainMeta meta;
    meta.config = hash;
    meta.algorithm = cfg.sampler.algorithm;
    meta.p = kThetaDim;
    meta.n = n;
    meta.K = cfg.K;
    meta.M = cfg.sampler.algorithm == "mh" ? 1 : cfg.sampler.settings.multiset_size;
    meta.iterations = plan.iterations;
    meta.burn_in = plan.burn_in;
    meta.thin = plan.thin;
    return meta;
}

template <class Chain>
int run_calibration(Chain& chain, const ChainMeta& meta, const RunPlan& plan,
                    bool resuming, const std::string& chain_path,
                    const std::string& trace_path, const std::string& ckpt_path) {
    ChainWriter chain_writer(chain_path, meta, resuming);
    TraceWriter trace_writer(trace_path, meta, resuming);
    const std::uint64_t tick = std::max<std::uint64_t>(1, plan.iterations / 20);
    run_chain<Chain>(
        chain, plan,
        [&](const ChainSample& s) { chain_writer.write(s); },
        [&](std::uint64_t it, std::size_t leading, std::span<const double> theta) {
            trace_writer.write(it, leading, theta);
            if (it % tick == 0)
                std::cerr << "iter " << it << "/" << plan.iterations
                          << " leading=" << leading + 1 << "\n";
        },
        [&](const Chain& c) {
            chain_writer.flush();
            trace_writer.flush();
            save_checkpoint(ckpt_path, meta, c.raw_state());
        });
    return 0;
}

int cmd_calibrate(const CliOptions& opt) {
    RunConfig cfg = effective_config(opt);
    const std::string hash = config_hash(cfg);
    ReplicateSeries data = load_data(cfg.data_path);
    auto model = build_model(data, cfg);
    CalibrationProblem problem(*model, cfg.bounds);
    problem.set_c(cfg.c);

    std::optional<ProspectMap> map;
    const std::string map_path = out_path(cfg, "prospect_map.txt");
    if (cfg.sampler.instrumental == "prospect") {
        if (!fs::exists(map_path))
            throw missing_prerequisite("prospect map " + map_path +
                                       " not found; run `calib prognose` first");
        map = ProspectMap::load(map_path);
    }
    UniformInstrumental uniform(cfg.bounds);
    std::optional<ProspectInstrumental> prospect;
    const Instrumental* g = &uniform;
    if (map) {
        prospect.emplace(*map, cfg.bounds);
        g = &*prospect;
    }

    RunPlan plan;
    plan.iterations = cfg.sampler.settings.iterations;
    plan.burn_in = static_cast<std::uint64_t>(
        std::floor(cfg.sampler.settings.burn_in_frac *
                   static_cast<double>(plan.iterations)));
    plan.thin = cfg.sampler.settings.thin;
    plan.checkpoint_interval = cfg.sampler.checkpoint_interval;
    const ChainMeta meta = make_meta(cfg, hash, model->n(), plan);

    const std::string chain_path = out_path(cfg, "chain.csv");
    const std::string trace_path = out_path(cfg, "trace.csv");
    const std::string ckpt_path = out_path(cfg, "checkpoint.json");

    bool resuming = false;
    Checkpoint cp;
    if (opt.resume) {
        if (!fs::exists(ckpt_path))
            throw missing_prerequisite("checkpoint " + ckpt_path +
                                       " not found; run `calib calibrate` first");
        cp = load_checkpoint(ckpt_path);
        if (cp.meta.config != hash)
            throw config_error("checkpoint was produced under a different config; "
                               "refusing to resume");
        if (cp.meta.algorithm != cfg.sampler.algorithm)
            throw config_error("checkpoint algorithm mismatch");
        resuming = true;
    }

    if (cfg.sampler.algorithm == "mh") {
        MhChain chain(problem, cfg.sampler.settings);
        if (resuming)
            chain.restore(to_mh_state(cp.raw));
        else
            chain.initialize(map ? &*map : nullptr);
        if (!resuming) save_checkpoint(ckpt_path, meta, chain.raw_state());
        return run_calibration(chain, meta, plan, resuming, chain_path, trace_path,
                               ckpt_path);
    }
    GmssChain chain(problem, *g, cfg.sampler.settings);
    if (resuming)
        chain.restore(cp.raw);
    else
        chain.initialize(map ? &*map : nullptr);
    if (!resuming) save_checkpoint(ckpt_path, meta, chain.raw_state());
    return run_calibration(chain, meta, plan, resuming, chain_path, trace_path,
                           ckpt_path);
}

FeatureFn feature_from_config(const RunConfig& cfg) {
    return make_feature(cfg.intervention.feature == "frequency" ? Feature::frequency
                                                                : Feature::period,
                        cfg.ode, cfg.intervention.period);
}

int cmd_analyze(const CliOptions& opt) {
    RunConfig cfg = effective_config(opt);
    const std::string hash = config_hash(cfg);
    const std::string chain_path = out_path(cfg, "chain.csv");
    if (!fs::exists(chain_path))
        throw missing_prerequisite("chain file " + chain_path +
                                   " not found; run `calib calibrate` first");
    ChainFile chain = read_chain(chain_path);
    if (chain.samples.empty()) throw data_error("chain file holds no retained samples");

    DrawSet draws = flatten_draws(chain.samples, cfg.c, cfg.intervention.draw_cap,
                                  cfg.intervention.resample_seed);
    FeatureFn feature = feature_from_config(cfg);

    InterventionSpec spec;
    for (std::size_t t : cfg.intervention.targets) spec.targets.push_back(t - 1);
    spec.alphas = cfg.intervention.alphas;
    spec.deltas = cfg.intervention.deltas;
    spec.bounds = &cfg.bounds;
    spec.data_anchored_baseline = cfg.intervention.baseline == "data";
    spec.baseline_value = cfg.intervention.feature == "frequency"
                              ? 1.0 / cfg.intervention.data_period
                              : cfg.intervention.data_period;

    FeatureDistribution dist = intervention_estimate(draws, spec, feature, cfg.workers);
    const std::string sens_path = out_path(cfg, "sensitivity.csv");
    write_sensitivity_csv(sens_path, dist, spec.deltas, hash);

    std::vector<std::array<std::size_t, 2>> pairs = cfg.intervention.pairs;
    if (pairs.empty()) {
        for (std::size_t a = 1; a <= kThetaDim; ++a)
            for (std::size_t b = a + 1; b <= kThetaDim; ++b)
                pairs.push_back({a, b});
    }
    std::vector<HeatmapRecord> records;
    for (const auto& pr : pairs) {
        auto cells = pairwise_heatmap(draws, pr[0] - 1, pr[1] - 1,
                                      cfg.intervention.alphas, feature, &cfg.bounds,
                                      cfg.workers);
        for (const auto& cell : cells)
            records.push_back(HeatmapRecord{pr[0], pr[1], cell});
    }
    const std::string heat_path = out_path(cfg, "heatmap.csv");
    write_heatmap_csv(heat_path, records, hash);
    std::cout << "wrote " << sens_path << " and " << heat_path << "\n";
    return 0;
}

int cmd_report(const CliOptions& opt) {
    RunConfig cfg = effective_config(opt);
    const std::string chain_path = out_path(cfg, "chain.csv");
    const std::string trace_path = out_path(cfg, "trace.csv");
    const std::string sens_path = out_path(cfg, "sensitivity.csv");
    const std::string heat_path = out_path(cfg, "heatmap.csv");
    for (auto [path, producer] :
         {std::pair<const std::string&, const char*>{chain_path, "calib calibrate"},
          {trace_path, "calib calibrate"},
          {sens_path, "calib analyze"},
          {heat_path, "calib analyze"}})
        if (!fs::exists(path))
            throw missing_prerequisite(path + " not found; run `" +
                                       std::string(producer) + "` first");

    const std::string h_chain = file_config_hash(chain_path);
    for (const std::string& p : {trace_path, sens_path, heat_path}) {
        if (!opt.force && file_config_hash(p) != h_chain)
            throw config_error("config hash mismatch between " + chain_path + " and " +
                               p + " (use --force to override)");
    }

    const fs::path dir = fs::path(cfg.output_dir) / "report";
    fs::create_directories(dir);
    copy_bytes(trace_path, (dir / "trace_leading.csv").string());
    copy_bytes(sens_path, (dir / "sensitivity.csv").string());
    copy_bytes(heat_path, (dir / "heatmap.csv").string());
    write_exceedance_csv(sens_path, (dir / "exceedance_table.csv").string(), h_chain);

    ChainFile chain = read_chain(chain_path);
    std::vector<std::uint64_t> checkpoints;
    if (!chain.samples.empty()) {
        const std::uint64_t last = chain.samples.back().iteration;
        for (int i = 1; i <= 4; ++i)
            checkpoints.push_back(last * static_cast<std::uint64_t>(i) / 4);
    }
    CumulativeHistogram hist = cumulative_histogram_diagnostic(
        chain.samples, checkpoints, cfg.bounds);
    write_cumhist_csv((dir / "cumulative_hist.csv").string(), hist, h_chain);

    std::ofstream summary(dir / "report.txt");
    summary << "calib report\n";
    summary << "config=" << h_chain << " version=" << tool_version() << "\n";
    summary << "retained_samples=" << chain.samples.size() << " M=" << chain.meta.M
            << " algorithm=" << chain.meta.algorithm << "\n";
    summary << "stationary=" << (hist.all_stationary ? "yes" : "no") << "\n";
    summary << "files: trace_leading.csv sensitivity.csv heatmap.csv "
               "exceedance_table.csv cumulative_hist.csv\n";
    if (!summary) throw data_error("short write on report summary");
    std::cout << "wrote report bundle under " << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"calib: spectral Bayesian calibration of the three-variable "
                 "circadian oscillator"};
    app.require_subcommand(1);

    CliOptions opt;
    app.add_option("--config", opt.config_path, "JSON config file");
    app.add_option("--seed", opt.seed, "override sampler.seed");
    app.add_option("--workers", opt.workers, "override worker count");
    app.add_option("--out", opt.out, "override output.dir");
    app.add_flag("--resume", opt.resume, "resume from existing outputs");
    app.add_flag("--force", opt.force, "ignore config hash mismatches (report)");
    app.add_flag("--dump-config", opt.dump_config,
                 "print the canonical config (all defaults applied) and exit");

    auto* simulate = app.add_subcommand("simulate", "generate synthetic data");
    auto* prognose = app.add_subcommand("prognose", "likelihood sweep + prospect map");
    auto* calibrate = app.add_subcommand("calibrate", "run the posterior sampler");
    calibrate->add_option("--algorithm", opt.algorithm, "gmss or mh");
    calibrate->add_option("--multiset-size", opt.multiset_size, "override M");
    auto* analyze = app.add_subcommand("analyze", "intervention sensitivity grids");
    auto* report = app.add_subcommand("report", "bundle plot-ready outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (opt.dump_config) {
            std::cout << serialize_config(effective_config(opt));
            return 0;
        }
        if (simulate->parsed()) return cmd_simulate(opt);
        if (prognose->parsed()) return cmd_prognose(opt);
        if (calibrate->parsed()) return cmd_calibrate(opt);
        if (analyze->parsed()) return cmd_analyze(opt);
        if (report->parsed()) return cmd_report(opt);
    } catch (const missing_prerequisite& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
