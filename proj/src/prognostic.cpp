#include "calib/prognostic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace calib {

namespace {

std::uint64_t ipow(std::uint64_t base, std::size_t exp) {
    std::uint64_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) r *= base;
    return r;
}

}  // namespace

std::size_t u_q(double u, std::size_t q) {
    if (!(u > 0.0 && u <= 1.0)) throw std::invalid_argument("u_q: input outside (0,1]");
    if (q < 2) throw std::invalid_argument("u_q: q must be >= 2");
    double scaled = std::ceil(u * static_cast<double>(q));
    auto level = static_cast<std::size_t>(scaled);
    if (level < 1) level = 1;
    if (level > q) level = q;
    return level;
}

std::vector<double> design_point(std::uint64_t seed, std::uint64_t index, std::size_t p,
                                 DesignKind kind, std::size_t q) {
    std::uint64_t state = seed ^ (0x9e3779b97f4a7c15ull * (index + 1));
    std::vector<double> u(p);
    if (kind == DesignKind::iid) {
        for (std::size_t j = 0; j < p; ++j) {
            double x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
            u[j] = 1.0 - x;  // (0,1]
        }
        return u;
    }
    // oa_factorial: point `index` covers cell (index mod q^p) of the full
    // factorial, uniformly jittered inside the cell.
    const std::uint64_t cells = ipow(q, p);
    std::uint64_t cell = index % cells;
    for (std::size_t j = 0; j < p; ++j) {
        std::uint64_t level = cell % q;  // 0-based
        cell /= q;
        double jitter = 1.0 - static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
        u[j] = (static_cast<double>(level) + jitter) / static_cast<double>(q);
    }
    return u;
}

std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t p, std::size_t d0) {
    if (d0 < 1 || d0 > p) throw std::invalid_argument("enumerate_subsets: bad d0");
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> cur(d0);
    for (std::size_t i = 0; i < d0; ++i) cur[i] = i;
    for (;;) {
        out.push_back(cur);
        // next combination
        std::size_t i = d0;
        while (i > 0) {
            --i;
            if (cur[i] != i + p - d0) {
                ++cur[i];
                for (std::size_t k = i + 1; k < d0; ++k) cur[k] = cur[k - 1] + 1;
                break;
            }
            if (i == 0) return out;
        }
    }
}

ProspectMap::ProspectMap(std::size_t p, std::size_t q, std::size_t d0, double rho0,
                         double rho1)
    : p_(p), q_(q), d0_(d0), rho0_(rho0), rho1_(rho1) {
    if (d0 > p) throw std::invalid_argument("ProspectMap: d0 > p");
    if (q < 2) throw std::invalid_argument("ProspectMap: q < 2");
    if (!(rho1 >= rho0 && rho0 > 0.0))
        throw std::invalid_argument("ProspectMap: need rho1 >= rho0 > 0");
    subsets_ = enumerate_subsets(p, d0);
    cells_per_subset_ = ipow(q, d0);
}

void ProspectMap::mark(std::size_t subset_id, std::uint64_t cell_code) {
    marked_.insert(pack(subset_id, cell_code));
}

bool ProspectMap::cell_marked(std::size_t subset_id, std::uint64_t cell_code) const {
    return marked_.count(pack(subset_id, cell_code)) != 0;
}

bool ProspectMap::high_prospect_levels(std::span<const std::size_t> levels) const {
    if (marked_.empty()) return false;
    for (std::size_t b = 0; b < subsets_.size(); ++b) {
        std::uint64_t code = 0, mult = 1;
        for (std::size_t idx : subsets_[b]) {
            code += (levels[idx] - 1) * mult;
            mult *= q_;
        }
        if (marked_.count(pack(b, code))) return true;
    }
    return false;
}

bool ProspectMap::high_prospect(std::span<const double> u) const {
    std::vector<std::size_t> levels(p_);
    for (std::size_t j = 0; j < p_; ++j) levels[j] = u_q(u[j], q_);
    return high_prospect_levels(levels);
}

double ProspectMap::log_density_unit(std::span<const double> u) const {
    if (u.size() != p_) throw std::invalid_argument("log_density_unit: bad dimension");
    return (high_prospect(u) ? std::log(rho1_) : std::log(rho0_)) - logZ_;
}

void ProspectMap::finalize(const VolhighSettings& vol) {
    const double total_cells_d = std::pow(static_cast<double>(q_),
                                          static_cast<double>(p_));
    if (marked_.empty()) {
        volhigh_ = 0.0;
        volhigh_se_ = 0.0;
        volhigh_method_ = "exact";
    } else if (total_cells_d <= static_cast<double>(vol.exact_cell_cap)) {
        const std::uint64_t total = ipow(q_, p_);
        std::uint64_t high = 0;
        std::vector<std::size_t> levels(p_, 1);
        for (std::uint64_t c = 0; c < total; ++c) {
            if (high_prospect_levels(levels)) ++high;
            // odometer increment
            for (std::size_t j = 0; j < p_; ++j) {
                if (levels[j] < q_) {
                    ++levels[j];
                    break;
                }
                levels[j] = 1;
            }
        }
        volhigh_ = static_cast<double>(high) / static_cast<double>(total);
        volhigh_se_ = 0.0;
        volhigh_method_ = "exact";
    } else {
        Rng rng(vol.mc_seed);
        std::uint64_t n = std::max<std::uint64_t>(vol.mc_points, 1000000);
        std::uint64_t high = 0;
        std::vector<std::size_t> levels(p_);
        for (std::uint64_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < p_; ++j)
                levels[j] = 1 + static_cast<std::size_t>(
                                    std::min<double>(q_ - 1, std::floor(rng.uniform01() *
                                                                        static_cast<double>(q_))));
            if (high_prospect_levels(levels)) ++high;
        }
        volhigh_ = static_cast<double>(high) / static_cast<double>(n);
        volhigh_se_ = std::sqrt(volhigh_ * (1.0 - volhigh_) / static_cast<double>(n));
        volhigh_method_ = "mc";
    }
    logZ_ = std::log(rho1_ * volhigh_ + rho0_ * (1.0 - volhigh_));
}

std::vector<std::pair<std::uint32_t, std::uint64_t>> ProspectMap::sorted_cells() const {
    std::vector<std::pair<std::uint32_t, std::uint64_t>> out;
    out.reserve(marked_.size());
    for (std::uint64_t key : marked_)
        out.emplace_back(static_cast<std::uint32_t>(key / cells_per_subset_),
                         key % cells_per_subset_);
    std::sort(out.begin(), out.end());
    return out;
}

void ProspectMap::save(const std::string& path, const std::string& config_hash) const {
    std::ofstream f(path);
    if (!f) throw data_error("cannot write prospect map: " + path);
    f << "# calib prospect-map v1 config=" << config_hash << "\n";
    f << "p=" << p_ << " q=" << q_ << " d0=" << d0_ << " rho0=" << format_full(rho0_)
      << " rho1=" << format_full(rho1_) << "\n";
    f << "logZ=" << format_full(logZ_) << " volhigh=" << format_full(volhigh_)
      << " volhigh_se=" << format_full(volhigh_se_) << " method=" << volhigh_method_
      << "\n";
    auto cells = sorted_cells();
    f << "cells=" << cells.size() << "\n";
    for (auto& [b, code] : cells) f << b << " " << code << "\n";
    if (!f) throw data_error("short write on prospect map: " + path);
}

ProspectMap ProspectMap::load(const std::string& path, std::string* config_hash) {
    std::ifstream f(path);
    if (!f) throw data_error("cannot read prospect map: " + path);
    std::string header;
    std::getline(f, header);
    auto pos = header.find("config=");
    if (header.rfind("# calib prospect-map v1", 0) != 0 || pos == std::string::npos)
        throw data_error("bad prospect map header: " + path);
    if (config_hash) *config_hash = header.substr(pos + 7, 16);

    std::size_t p = 0, q = 0, d0 = 0;
    double rho0 = 0, rho1 = 0, logZ = 0, volhigh = 0, volhigh_se = 0;
    char method[16] = "exact";
    std::string line;
    std::getline(f, line);
    if (std::sscanf(line.c_str(), "p=%zu q=%zu d0=%zu rho0=%lf rho1=%lf", &p, &q, &d0,
                    &rho0, &rho1) != 5)
        throw data_error("bad prospect map parameter line: " + path);
    std::getline(f, line);
    if (std::sscanf(line.c_str(), "logZ=%lf volhigh=%lf volhigh_se=%lf method=%15s",
                    &logZ, &volhigh, &volhigh_se, method) != 4)
        throw data_error("bad prospect map normalization line: " + path);
    std::getline(f, line);
    std::size_t ncells = 0;
    if (std::sscanf(line.c_str(), "cells=%zu", &ncells) != 1)
        throw data_error("bad prospect map cell count: " + path);

    ProspectMap map(p, q, d0, rho0, rho1);
    for (std::size_t i = 0; i < ncells; ++i) {
        std::uint32_t b = 0;
        std::uint64_t code = 0;
        if (!(f >> b >> code)) throw data_error("truncated prospect map: " + path);
        map.mark(b, code);
    }
    map.logZ_ = logZ;
    map.volhigh_ = volhigh;
    map.volhigh_se_ = volhigh_se;
    map.volhigh_method_ = method;
    return map;
}

ProspectClassifier::ProspectClassifier(std::size_t p, std::size_t q, std::size_t d0,
                                       double l_min, std::size_t n_min)
    : p_(p), q_(q), d0_(d0), l_min_(l_min), n_min_(n_min) {
    if (d0 > p) throw std::invalid_argument("ProspectClassifier: d0 > p");
    subsets_ = enumerate_subsets(p, d0);
    cells_per_subset_ = ipow(q, d0);
}

void ProspectClassifier::add(std::span<const double> u, double loglik) {
    if (!(loglik > l_min_)) return;
    std::vector<std::size_t> levels(p_);
    for (std::size_t j = 0; j < p_; ++j) levels[j] = u_q(u[j], q_);
    for (std::size_t b = 0; b < subsets_.size(); ++b) {
        std::uint64_t code = 0, mult = 1;
        for (std::size_t idx : subsets_[b]) {
            code += (levels[idx] - 1) * mult;
            mult *= q_;
        }
        ++counts_[static_cast<std::uint64_t>(b) * cells_per_subset_ + code];
    }
}

ProspectMap ProspectClassifier::finish(double rho0, double rho1,
                                       const VolhighSettings& vol) const {
    ProspectMap map(p_, q_, d0_, rho0, rho1);
    for (auto& [key, count] : counts_) {
        if (count > n_min_)
            map.mark(static_cast<std::size_t>(key / cells_per_subset_),
                     key % cells_per_subset_);
    }
    map.finalize(vol);
    return map;
}

ProspectMap classify_prospects(const std::vector<DesignEval>& evals, std::size_t q,
                               std::size_t d0, double l_min, std::size_t n_min,
                               double rho0, double rho1, const VolhighSettings& vol) {
    if (evals.empty()) throw std::invalid_argument("classify_prospects: no evaluations");
    ProspectClassifier cls(evals.front().u.size(), q, d0, l_min, n_min);
    for (const auto& e : evals)
        if (e.ok) cls.add(e.u, e.loglik);
    return cls.finish(rho0, rho1, vol);
}

double threshold_top_fraction(std::vector<double> finite_logliks, double fraction) {
    if (finite_logliks.empty()) return std::numeric_limits<double>::infinity();
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("threshold_top_fraction: fraction in (0,1)");
    std::sort(finite_logliks.begin(), finite_logliks.end());
    const std::size_t n = finite_logliks.size();
    auto keep = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n)));
    keep = std::clamp<std::size_t>(keep, 1, n);
    // Strictly-greater comparison downstream, so take the value just below
    // the top `keep` entries.
    std::size_t idx = n - keep;
    return idx == 0 ? finite_logliks[0] - 1.0 : finite_logliks[idx - 1];
}

std::vector<std::vector<std::size_t>> sample_high_cells(const ProspectMap& map,
                                                        std::size_t count, Rng& rng,
                                                        std::uint64_t attempt_budget) {
    std::vector<std::vector<std::size_t>> out;
    if (map.marked_count() == 0 || count == 0) return out;
    const std::size_t p = map.p();
    const std::size_t q = map.q();
    std::unordered_set<std::uint64_t> seen;
    std::vector<std::size_t> levels(p);
    for (std::uint64_t attempt = 0; attempt < attempt_budget && out.size() < count;
         ++attempt) {
        std::uint64_t code = 0;
        for (std::size_t j = 0; j < p; ++j) {
            levels[j] = 1 + static_cast<std::size_t>(std::min<double>(
                                q - 1, std::floor(rng.uniform01() * static_cast<double>(q))));
            code = code * q + (levels[j] - 1);
        }
        if (!map.high_prospect_levels(levels)) continue;
        if (!seen.insert(code).second) continue;
        out.push_back(levels);
    }
    return out;
}

std::vector<double> draw_in_cell(std::span<const std::size_t> levels, std::size_t q,
                                 Rng& rng) {
    std::vector<double> u(levels.size());
    for (std::size_t j = 0; j < levels.size(); ++j) {
        double jitter = rng.uniform_pos();  // (0,1]
        u[j] = (static_cast<double>(levels[j] - 1) + jitter) / static_cast<double>(q);
    }
    return u;
}

}  // namespace calib
