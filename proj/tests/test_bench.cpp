#include <thread>

#include <gtest/gtest.h>

#include "fastpay/bench.hpp"

using namespace fastpay;

namespace {

double rate(const ThroughputResult& result, const std::string& phase)
{
    for (const auto& r : result.rows) {
        if (r.phase == phase) return r.tx_per_sec;
    }
    return 0.0;
}

double certificate_median(std::size_t authorities, std::size_t fail)
{
    LatencyConfig cfg;
    cfg.authorities = authorities;
    cfg.fail_count = fail;
    cfg.transfers = 30;
    for (const auto& r : bench_latency(cfg)) {
        if (r.phase == "certificate") return r.median_ms;
    }
    return 0.0;
}

}  // namespace

TEST(BenchStats, MedianAndPercentile)
{
    EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
    EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
    EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.9), 9.0);
}

TEST(BenchCsv, HeadersAndRows)
{
    std::vector<ThroughputRow> tp{{2, "confirmation-orders", 100, 500, 0.25, 2000.0}};
    EXPECT_EQ(throughput_csv(tp),
              "shards,phase,in_flight,transactions,seconds,tx_per_sec\n"
              "2,confirmation-orders,100,500,0.250000,2000.0\n");
    EXPECT_EQ(throughput_csv(tp, false), "2,confirmation-orders,100,500,0.250000,2000.0\n");
    std::vector<LatencyRow> lat{{10, 3, "certificate", 1.5, 2.25, 27}};
    EXPECT_EQ(latency_csv(lat),
              "authorities,fail_count,phase,median_ms,p90_ms,samples\n"
              "10,3,certificate,1.500,2.250,27\n");
    EXPECT_EQ(throughput_json(tp)[0]["tx_per_sec"], 2000.0);
    EXPECT_EQ(latency_json(lat)[0]["fail_count"], 3);
}

// Single shard settles at least 2000 confirmations/s, median of 3 runs.
TEST(BenchThroughput, SingleShardConfirmationFloor)
{
    std::vector<double> runs;
    for (int i = 0; i < 3; ++i) {
        ThroughputConfig cfg;
        cfg.transactions = 5000;
        auto result = bench_throughput(cfg);
        EXPECT_EQ(result.audit_violations, 0u);
        EXPECT_EQ(result.errors, 0u);
        ASSERT_EQ(result.rows.size(), 2u);
        runs.push_back(rate(result, "confirmation-orders"));
    }
    EXPECT_GE(median(runs), 2000.0);
}

TEST(BenchThroughput, ConfirmationsIncreaseWithShards)
{
    auto cores = std::thread::hardware_concurrency();
    if (cores < 4) GTEST_SKIP() << "needs >= 4 cores, machine has " << cores;
    double last = 0;
    for (std::uint32_t shards : {1u, 2u, 4u}) {
        ThroughputConfig cfg;
        cfg.shards = shards;
        cfg.transactions = 20000;
        double r = rate(bench_throughput(cfg), "confirmation-orders");
        EXPECT_GT(r, last) << shards << " shards";
        last = r;
    }
}

TEST(BenchLatency, SmallCommitteeUnderFiftyMs)
{
    double m = certificate_median(4, 1);
    EXPECT_GT(m, 0);
    EXPECT_LT(m, 50.0);
}

// With authorities on their own cores, latency barely depends on committee
// size. Sharing fewer cores, signature work serializes and it grows with n.
TEST(BenchLatency, CommitteeSizeRoughlyConstant)
{
    auto cores = std::thread::hardware_concurrency();
    if (cores < 10) GTEST_SKIP() << "needs a core per authority (10), machine has " << cores;
    double four = certificate_median(4, 0);
    double ten = certificate_median(10, 0);
    EXPECT_LE(ten / four, 1.5);
    EXPECT_LE(four / ten, 1.5);
}
