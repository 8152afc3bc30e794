#include "calib/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "calib/common.hpp"

namespace calib {

void write_sensitivity_csv(const std::string& path, const FeatureDistribution& dist,
                           std::span<const double> deltas,
                           const std::string& config_hash) {
    std::ofstream f(path);
    if (!f) throw data_error("cannot write sensitivity grid: " + path);
    f << "# calib sensitivity v1 config=" << config_hash << "\n";
    f << "parameter,alpha,mean,q10,q90,failure_pct";
    for (double d : deltas)
        f << ",exceed_" << static_cast<int>(d * 100.0 + 0.5);
    f << "\n";
    for (const auto& row : dist.rows) {
        f << "theta" << row.target + 1 << "," << format_full(row.alpha) << ",";
        if (row.has_stats)
            f << format_full(row.mean) << "," << format_full(row.q10) << ","
              << format_full(row.q90);
        else
            f << "nan,nan,nan";
        f << "," << format_full(100.0 * row.failure);
        for (double e : row.exceed) f << "," << format_full(100.0 * e);
        f << "\n";
    }
    if (!f) throw data_error("short write on sensitivity grid: " + path);
}

void write_heatmap_csv(const std::string& path,
                       const std::vector<HeatmapRecord>& records,
                       const std::string& config_hash) {
    std::ofstream f(path);
    if (!f) throw data_error("cannot write heatmap grid: " + path);
    f << "# calib heatmap v1 config=" << config_hash << "\n";
    f << "j,j2,alpha_j,alpha_j2,relative_change\n";
    for (const auto& r : records) {
        f << r.j << "," << r.j2 << "," << format_full(r.cell.alpha_j) << ","
          << format_full(r.cell.alpha_j2) << ","
          << (r.cell.has_value ? format_full(r.cell.relative_change) : "nan") << "\n";
    }
    if (!f) throw data_error("short write on heatmap grid: " + path);
}

void write_cumhist_csv(const std::string& path, const CumulativeHistogram& hist,
                       const std::string& config_hash) {
    std::ofstream f(path);
    if (!f) throw data_error("cannot write cumulative histogram: " + path);
    f << "# calib cumhist v1 config=" << config_hash << "\n";
    f << "checkpoint,parameter,bin_lo_rel,bin_hi_rel,mass\n";
    for (std::size_t c = 0; c < hist.checkpoints.size(); ++c) {
        const auto& snap = hist.snapshots[c];
        for (std::size_t j = 0; j < snap.size(); ++j)
            for (std::size_t b = 0; b + 1 < hist.edges.size(); ++b)
                f << hist.checkpoints[c] << ",theta" << j + 1 << ","
                  << format_full(hist.edges[b]) << "," << format_full(hist.edges[b + 1])
                  << "," << format_full(snap[j][b]) << "\n";
    }
    f << "# stationary:";
    for (bool s : hist.stationary) f << " " << (s ? 1 : 0);
    f << "\n# all_stationary: " << (hist.all_stationary ? 1 : 0) << "\n";
    if (!f) throw data_error("short write on cumulative histogram: " + path);
}

void write_exceedance_csv(const std::string& sensitivity_path,
                          const std::string& out_path,
                          const std::string& config_hash) {
    std::ifstream in(sensitivity_path);
    if (!in) throw data_error("cannot read sensitivity grid: " + sensitivity_path);
    std::string line;
    std::getline(in, line);  // hash header
    std::getline(in, line);  // columns
    std::istringstream cols(line);
    std::vector<std::string> names;
    std::string tok;
    while (std::getline(cols, tok, ',')) names.push_back(tok);

    std::ofstream f(out_path);
    if (!f) throw data_error("cannot write exceedance table: " + out_path);
    f << "# calib exceedance v1 config=" << config_hash << "\n";
    f << "parameter,alpha,failure";
    for (std::size_t c = 6; c < names.size(); ++c) {
        f << ",period_plus_" << names[c].substr(names[c].rfind('_') + 1) << "pct";
    }
    f << "\n";
    char buf[32];
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::vector<std::string> cells;
        while (std::getline(is, tok, ',')) cells.push_back(tok);
        if (cells.size() != names.size())
            throw data_error(sensitivity_path + ": ragged sensitivity row");
        f << cells[0] << "," << cells[1];
        auto pct = [&](const std::string& cell) {
            double v = std::stod(cell);
            std::snprintf(buf, sizeof buf, "%.2f", v);
            return std::string(buf);
        };
        f << "," << pct(cells[5]);
        for (std::size_t c = 6; c < cells.size(); ++c) f << "," << pct(cells[c]);
        f << "\n";
    }
    if (!f) throw data_error("short write on exceedance table: " + out_path);
}

std::string file_config_hash(const std::string& path) {
    std::ifstream f(path);
    if (!f) return {};
    std::string line;
    if (!std::getline(f, line)) return {};
    auto pos = line.find("config=");
    if (pos == std::string::npos || line.empty() || line[0] != '#') return {};
    return line.substr(pos + 7, 16);
}

void copy_bytes(const std::string& from, const std::string& to) {
    std::ifstream in(from, std::ios::binary);
    if (!in) throw data_error("cannot read: " + from);
    std::ofstream out(to, std::ios::binary);
    if (!out) throw data_error("cannot write: " + to);
    out << in.rdbuf();
    if (!out) throw data_error("short copy to: " + to);
}

}  // namespace calib
