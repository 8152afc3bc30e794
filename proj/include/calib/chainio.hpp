#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "calib/gmss.hpp"

namespace calib {

struct ChainMeta {
    std::string config;  // 16 hex digits
    std::string algorithm = "gmss";
    std::size_t p = 0, n = 0, K = 0, M = 0;
    std::uint64_t iterations = 0, burn_in = 0, thin = 1;
};

/// Streaming writer of the retained-sample file: a commented header, a CSV
/// column row, then one record per retained iteration with the latent block
/// and the M per-element (theta, log f, w) blocks at full precision.
class ChainWriter {
public:
    ChainWriter(const std::string& path, const ChainMeta& meta, bool append = false);
    void write(const ChainSample& sample);
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
    ChainMeta meta_;
};

struct ChainFile {
    ChainMeta meta;
    std::vector<ChainSample> samples;
};

ChainFile read_chain(const std::string& path);

/// Per-iteration leading-element trace (`iteration,leading,theta_*`).
class TraceWriter {
public:
    TraceWriter(const std::string& path, const ChainMeta& meta, bool append = false);
    void write(std::uint64_t iteration, std::size_t leading,
               std::span<const double> theta);
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

struct TraceRow {
    std::uint64_t iteration;
    std::size_t leading;
    std::vector<double> theta;
};

std::vector<TraceRow> read_trace(const std::string& path);

/// Full chain checkpoint (state + RNG + adaptation), exact resume.
void save_checkpoint(const std::string& path, const ChainMeta& meta,
                     const GmssChain::RawState& raw);
void save_checkpoint(const std::string& path, const ChainMeta& meta,
                     const MhChain::RawState& raw);

struct Checkpoint {
    ChainMeta meta;
    GmssChain::RawState raw;  // MH states load with a single theta row
};

Checkpoint load_checkpoint(const std::string& path);

MhChain::RawState to_mh_state(const GmssChain::RawState& raw);

/// Sweep results file: `index,u_1..u_p,status,loglik` rows under a header.
class SweepWriter {
public:
    SweepWriter(const std::string& path, std::size_t p, const std::string& config_hash,
                bool append);
    void write(std::uint64_t index, std::span<const double> u, bool ok, double loglik);
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

struct SweepRow {
    std::uint64_t index;
    std::vector<double> u;
    bool ok;
    double loglik;
};

/// Stream rows to the callback; returns the number of data rows seen.
std::uint64_t read_sweep(const std::string& path,
                         const std::function<void(const SweepRow&)>& fn,
                         std::string* config_hash = nullptr);

/// Number of complete data rows already present (resume support); 0 when the
/// file does not exist.
std::uint64_t count_sweep_rows(const std::string& path);

}  // namespace calib
