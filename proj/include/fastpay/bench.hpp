#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fastpay/network.hpp"

namespace fastpay {

struct ThroughputConfig {
    std::uint32_t shards = 1;
    std::size_t transactions = 10000;
    std::size_t in_flight = 1000;
    TransportKind transport = TransportKind::Datagram;
    std::size_t faults = 1;  // committee of 3f+1; only the first authority runs
    Duration retransmit_after = 300ms;
};

struct ThroughputRow {
    std::uint32_t shards = 0;
    std::string phase;  // transfer-orders | confirmation-orders
    std::size_t in_flight = 0;
    std::size_t transactions = 0;
    double seconds = 0;
    double tx_per_sec = 0;
};

struct ThroughputResult {
    std::vector<ThroughputRow> rows;
    std::uint64_t errors = 0;            // error replies received
    std::uint64_t retransmissions = 0;
    std::size_t audit_violations = 0;    // reported by the shard processes at shutdown
};

// Forks one process per shard of a single authority, replays pre-signed
// orders then certificates with a bounded in-flight window, and times each
// phase.
ThroughputResult bench_throughput(const ThroughputConfig& config);

struct LatencyConfig {
    std::size_t authorities = 4;  // 3f+1
    std::size_t fail_count = 0;   // authorities never started
    std::size_t transfers = 30;
    std::size_t warmup = 3;
    bool wait_for_all_votes = false;
    TransportKind transport = TransportKind::Datagram;
};

struct LatencyRow {
    std::size_t authorities = 0;
    std::size_t fail_count = 0;
    std::string phase;  // certificate | confirmation
    double median_ms = 0;
    double p90_ms = 0;
    std::size_t samples = 0;
};

// Forks the committee (one single-shard process per live authority) on
// localhost and measures client-perceived latency of sequential transfers.
std::vector<LatencyRow> bench_latency(const LatencyConfig& config);

// Mean wall time of one full certificate check (sender signature plus 2f+1
// authority signatures) for a committee of `authorities`.
double certificate_check_seconds(std::size_t authorities, std::size_t iterations);

std::string throughput_csv(const std::vector<ThroughputRow>& rows, bool header = true);
std::string latency_csv(const std::vector<LatencyRow>& rows, bool header = true);
nlohmann::json throughput_json(const std::vector<ThroughputRow>& rows);
nlohmann::json latency_json(const std::vector<LatencyRow>& rows);

// Reserves `count` distinct free localhost ports (bound then released).
std::vector<std::uint16_t> free_ports(std::size_t count);

double median(std::vector<double> values);
double percentile(std::vector<double> values, double p);

}  // namespace fastpay
