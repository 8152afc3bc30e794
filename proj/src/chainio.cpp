#include "calib/chainio.hpp"

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "calib/common.hpp"

namespace calib {

using nlohmann::json;

namespace {

std::string meta_line(const char* kind, const ChainMeta& m) {
    std::ostringstream os;
    os << "# calib " << kind << " v1 config=" << m.config << " algorithm=" << m.algorithm
       << " p=" << m.p << " n=" << m.n << " K=" << m.K << " M=" << m.M
       << " iterations=" << m.iterations << " burn_in=" << m.burn_in
       << " thin=" << m.thin;
    return os.str();
}

ChainMeta parse_meta_line(const std::string& line, const char* kind,
                          const std::string& path) {
    ChainMeta m;
    std::istringstream is(line);
    std::string hash_tok, word;
    is >> word;  // '#'
    is >> word;  // 'calib'
    is >> word;  // kind
    if (word != kind) throw data_error(path + ": not a calib " + kind + " file");
    is >> word;  // version
    auto grab = [&](const std::string& tok, const char* key) -> std::string {
        const std::string prefix = std::string(key) + "=";
        if (tok.rfind(prefix, 0) != 0)
            throw data_error(path + ": malformed header near `" + tok + "`");
        return tok.substr(prefix.size());
    };
    is >> word;
    m.config = grab(word, "config");
    is >> word;
    m.algorithm = grab(word, "algorithm");
    is >> word;
    m.p = std::stoull(grab(word, "p"));
    is >> word;
    m.n = std::stoull(grab(word, "n"));
    is >> word;
    m.K = std::stoull(grab(word, "K"));
    is >> word;
    m.M = std::stoull(grab(word, "M"));
    is >> word;
    m.iterations = std::stoull(grab(word, "iterations"));
    is >> word;
    m.burn_in = std::stoull(grab(word, "burn_in"));
    is >> word;
    m.thin = std::stoull(grab(word, "thin"));
    return m;
}

}  // namespace

ChainWriter::ChainWriter(const std::string& path, const ChainMeta& meta, bool append)
    : out_(path, append ? std::ios::app : std::ios::out), meta_(meta) {
    if (!out_) throw data_error("cannot open chain file for writing: " + path);
    if (append) return;
    out_ << meta_line("chain", meta) << "\n";
    out_ << "iteration,tau2,sigma2";
    for (std::size_t i = 1; i <= meta.n; ++i)
        for (std::size_t k = 1; k <= meta.K; ++k) out_ << ",s_" << i << "_" << k;
    for (std::size_t m = 1; m <= meta.M; ++m) {
        for (std::size_t j = 1; j <= meta.p; ++j) out_ << ",theta_" << m << "_" << j;
        out_ << ",logf_" << m << ",w_" << m;
    }
    out_ << "\n";
}

void ChainWriter::write(const ChainSample& s) {
    out_ << s.iteration << "," << format_full(s.tau2) << "," << format_full(s.sigma2);
    for (double v : s.s) out_ << "," << format_full(v);
    for (const auto& el : s.elements) {
        for (double v : el.theta) out_ << "," << format_full(v);
        out_ << "," << format_full(el.logf) << "," << format_full(el.w);
    }
    out_ << "\n";
}

ChainFile read_chain(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw data_error("cannot open chain file: " + path);
    std::string line;
    if (!std::getline(f, line)) throw data_error(path + ": empty chain file");
    ChainFile out;
    out.meta = parse_meta_line(line, "chain", path);
    if (!std::getline(f, line)) throw data_error(path + ": missing column header");

    const std::size_t latent_cols = out.meta.n * out.meta.K;
    const std::size_t row_len =
        3 + latent_cols + out.meta.M * (out.meta.p + 2);
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string cell;
        std::vector<double> cells;
        cells.reserve(row_len);
        while (std::getline(is, cell, ',')) cells.push_back(std::stod(cell));
        if (cells.size() != row_len)
            throw data_error(path + ": bad record length " +
                             std::to_string(cells.size()));
        ChainSample s;
        std::size_t c = 0;
        s.iteration = static_cast<std::uint64_t>(cells[c++]);
        s.tau2 = cells[c++];
        s.sigma2 = cells[c++];
        s.s.assign(cells.begin() + c, cells.begin() + c + latent_cols);
        c += latent_cols;
        s.elements.resize(out.meta.M);
        double best = kNegInf;
        for (std::size_t m = 0; m < out.meta.M; ++m) {
            auto& el = s.elements[m];
            el.theta.assign(cells.begin() + c, cells.begin() + c + out.meta.p);
            c += out.meta.p;
            el.logf = cells[c++];
            el.w = cells[c++];
            if (el.w > best) {
                best = el.w;
                s.leading = m;
            }
        }
        out.samples.push_back(std::move(s));
    }
    return out;
}

TraceWriter::TraceWriter(const std::string& path, const ChainMeta& meta, bool append)
    : out_(path, append ? std::ios::app : std::ios::out) {
    if (!out_) throw data_error("cannot open trace file for writing: " + path);
    if (append) return;
    out_ << meta_line("trace", meta) << "\n";
    out_ << "iteration,leading";
    for (std::size_t j = 1; j <= meta.p; ++j) out_ << ",theta_" << j;
    out_ << "\n";
}

void TraceWriter::write(std::uint64_t iteration, std::size_t leading,
                        std::span<const double> theta) {
    out_ << iteration << "," << leading + 1;
    for (double v : theta) out_ << "," << format_full(v);
    out_ << "\n";
}

std::vector<TraceRow> read_trace(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw data_error("cannot open trace file: " + path);
    std::string line;
    std::getline(f, line);  // meta
    std::getline(f, line);  // columns
    std::vector<TraceRow> out;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string cell;
        TraceRow row;
        std::getline(is, cell, ',');
        row.iteration = std::stoull(cell);
        std::getline(is, cell, ',');
        row.leading = std::stoull(cell) - 1;
        while (std::getline(is, cell, ',')) row.theta.push_back(std::stod(cell));
        out.push_back(std::move(row));
    }
    return out;
}

namespace {

json adapt_to_json(const AdaptState& a) {
    return json{{"batch_count", a.batch_count},
                {"in_batch", a.in_batch},
                {"accepted_in_batch", a.accepted_in_batch}};
}

AdaptState adapt_from_json(const json& j) {
    AdaptState a;
    a.batch_count = j.at("batch_count").get<std::uint64_t>();
    a.in_batch = j.at("in_batch").get<std::uint64_t>();
    a.accepted_in_batch = j.at("accepted_in_batch").get<std::uint64_t>();
    return a;
}

json checkpoint_json(const ChainMeta& meta, const GmssChain::RawState& raw) {
    json j;
    j["kind"] = "calib-checkpoint";
    j["version"] = 1;
    j["config"] = meta.config;
    j["algorithm"] = meta.algorithm;
    j["p"] = meta.p;
    j["n"] = meta.n;
    j["K"] = meta.K;
    j["M"] = meta.M;
    j["iterations"] = meta.iterations;
    j["burn_in"] = meta.burn_in;
    j["thin"] = meta.thin;
    j["iteration"] = raw.iteration;
    j["rng"] = raw.rng_state;
    j["thetas"] = raw.thetas;
    j["latent_s"] = raw.latent.s;
    j["tau2"] = raw.latent.tau2;
    j["sigma2"] = raw.latent.sigma2;
    j["steps_theta"] = raw.steps.theta;
    j["steps_s"] = raw.steps.s;
    j["steps_tau2"] = raw.steps.tau2;
    j["steps_sigma2"] = raw.steps.sigma2;
    j["burned_in"] = raw.burned_in;
    json ta = json::array(), sa = json::array();
    for (const auto& a : raw.theta_adapt) ta.push_back(adapt_to_json(a));
    for (const auto& a : raw.s_adapt) sa.push_back(adapt_to_json(a));
    j["theta_adapt"] = ta;
    j["s_adapt"] = sa;
    j["tau2_adapt"] = adapt_to_json(raw.tau2_adapt);
    j["sigma2_adapt"] = adapt_to_json(raw.sigma2_adapt);
    return j;
}

}  // namespace

void save_checkpoint(const std::string& path, const ChainMeta& meta,
                     const GmssChain::RawState& raw) {
    std::ofstream f(path);
    if (!f) throw data_error("cannot write checkpoint: " + path);
    f << checkpoint_json(meta, raw).dump(2) << "\n";
}

void save_checkpoint(const std::string& path, const ChainMeta& meta,
                     const MhChain::RawState& raw) {
    GmssChain::RawState g;
    g.iteration = raw.iteration;
    g.rng_state = raw.rng_state;
    g.thetas = {raw.theta};
    g.latent = raw.latent;
    g.steps = raw.steps;
    g.theta_adapt = raw.theta_adapt;
    g.s_adapt = raw.s_adapt;
    g.tau2_adapt = raw.tau2_adapt;
    g.sigma2_adapt = raw.sigma2_adapt;
    g.burned_in = raw.burned_in;
    save_checkpoint(path, meta, g);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw data_error("cannot open checkpoint: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw data_error(path + ": checkpoint is not valid JSON: " + e.what());
    }
    if (j.value("kind", "") != "calib-checkpoint")
        throw data_error(path + ": not a calib checkpoint");
    Checkpoint cp;
    cp.meta.config = j.at("config").get<std::string>();
    cp.meta.algorithm = j.at("algorithm").get<std::string>();
    cp.meta.p = j.at("p").get<std::size_t>();
    cp.meta.n = j.at("n").get<std::size_t>();
    cp.meta.K = j.at("K").get<std::size_t>();
    cp.meta.M = j.at("M").get<std::size_t>();
    cp.meta.iterations = j.at("iterations").get<std::uint64_t>();
    cp.meta.burn_in = j.at("burn_in").get<std::uint64_t>();
    cp.meta.thin = j.at("thin").get<std::uint64_t>();
    cp.raw.iteration = j.at("iteration").get<std::uint64_t>();
    cp.raw.rng_state = j.at("rng").get<std::string>();
    cp.raw.thetas = j.at("thetas").get<std::vector<std::vector<double>>>();
    cp.raw.latent.s = j.at("latent_s").get<std::vector<double>>();
    cp.raw.latent.tau2 = j.at("tau2").get<double>();
    cp.raw.latent.sigma2 = j.at("sigma2").get<double>();
    cp.raw.steps.theta = j.at("steps_theta").get<std::vector<double>>();
    cp.raw.steps.s = j.at("steps_s").get<std::vector<double>>();
    cp.raw.steps.tau2 = j.at("steps_tau2").get<double>();
    cp.raw.steps.sigma2 = j.at("steps_sigma2").get<double>();
    cp.raw.burned_in = j.at("burned_in").get<bool>();
    for (const auto& a : j.at("theta_adapt")) cp.raw.theta_adapt.push_back(adapt_from_json(a));
    for (const auto& a : j.at("s_adapt")) cp.raw.s_adapt.push_back(adapt_from_json(a));
    cp.raw.tau2_adapt = adapt_from_json(j.at("tau2_adapt"));
    cp.raw.sigma2_adapt = adapt_from_json(j.at("sigma2_adapt"));
    return cp;
}

MhChain::RawState to_mh_state(const GmssChain::RawState& raw) {
    MhChain::RawState m;
    m.iteration = raw.iteration;
    m.rng_state = raw.rng_state;
    if (raw.thetas.size() != 1)
        throw data_error("checkpoint holds a multiset, not a single MH state");
    m.theta = raw.thetas.front();
    m.latent = raw.latent;
    m.steps = raw.steps;
    m.theta_adapt = raw.theta_adapt;
    m.s_adapt = raw.s_adapt;
    m.tau2_adapt = raw.tau2_adapt;
    m.sigma2_adapt = raw.sigma2_adapt;
    m.burned_in = raw.burned_in;
    return m;
}

SweepWriter::SweepWriter(const std::string& path, std::size_t p,
                         const std::string& config_hash, bool append)
    : out_(path, append ? std::ios::app : std::ios::out) {
    if (!out_) throw data_error("cannot open sweep file for writing: " + path);
    if (append) return;
    out_ << "# calib sweep v1 config=" << config_hash << " p=" << p << "\n";
    out_ << "index";
    for (std::size_t j = 1; j <= p; ++j) out_ << ",u_" << j;
    out_ << ",status,loglik\n";
}

void SweepWriter::write(std::uint64_t index, std::span<const double> u, bool ok,
                        double loglik) {
    out_ << index;
    for (double v : u) out_ << "," << format_full(v);
    out_ << "," << (ok ? "ok" : "fail") << "," << format_full(loglik) << "\n";
}

std::uint64_t read_sweep(const std::string& path,
                         const std::function<void(const SweepRow&)>& fn,
                         std::string* config_hash) {
    std::ifstream f(path);
    if (!f) throw data_error("cannot open sweep file: " + path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("# calib sweep v1", 0) != 0)
        throw data_error(path + ": not a calib sweep file");
    if (config_hash) {
        auto pos = line.find("config=");
        if (pos != std::string::npos) *config_hash = line.substr(pos + 7, 16);
    }
    std::getline(f, line);  // column header
    std::uint64_t rows = 0;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string cell;
        SweepRow row;
        std::getline(is, cell, ',');
        row.index = std::stoull(cell);
        std::vector<std::string> rest;
        while (std::getline(is, cell, ',')) rest.push_back(cell);
        if (rest.size() < 2) throw data_error(path + ": truncated sweep row");
        row.ok = rest[rest.size() - 2] == "ok";
        row.loglik = row.ok ? std::stod(rest.back()) : kNegInf;
        row.u.reserve(rest.size() - 2);
        for (std::size_t i = 0; i + 2 < rest.size(); ++i)
            row.u.push_back(std::stod(rest[i]));
        fn(row);
        ++rows;
    }
    return rows;
}

std::uint64_t count_sweep_rows(const std::string& path) {
    std::ifstream f(path);
    if (!f) return 0;
    std::string line;
    std::uint64_t rows = 0;
    bool past_header = false;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!past_header) {
            past_header = true;  // column header line
            continue;
        }
        ++rows;
    }
    return rows;
}

}  // namespace calib
