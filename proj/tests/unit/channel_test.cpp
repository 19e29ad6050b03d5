#include "fedloc/channel.hpp"
#include "fedloc/hmodel.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fedloc;
using namespace fedloc::channel;

namespace {

ChannelConfig unit_channel(double uses, double gain_times_power_down, double gain_times_power_up) {
    ChannelConfig c;
    c.downlink_uses = uses;
    c.uplink_uses = uses;
    c.downlink_power = 1.0;
    c.uplink_power = 1.0;
    c.downlink_gains = {gain_times_power_down};
    c.uplink_gains = {gain_times_power_up};
    return c;
}

}  // namespace

TEST(Downlink, OneBit) { EXPECT_DOUBLE_EQ(downlink_bits(unit_channel(1, 1, 1), 1, 0), 1.0); }

TEST(Downlink, MinimumOverClients) {
    auto c = unit_channel(1, 1, 1);
    c.downlink_gains = {7.0, 1.0};  // capacities log2(8) = 3 and 1
    EXPECT_DOUBLE_EQ(downlink_bits(c, 2, 0), 1.0);

    auto d = unit_channel(100, 1, 1);
    d.downlink_gains = {3.0, 15.0};
    EXPECT_DOUBLE_EQ(downlink_bits(d, 2, 0), 200.0);
}

TEST(Uplink, HandValues) {
    EXPECT_DOUBLE_EQ(uplink_bits_per_client(unit_channel(1, 1, 1), 0, 1, 0), 1.0);
    const auto c = unit_channel(100, 1, 1.5);
    EXPECT_DOUBLE_EQ(uplink_bits_per_client(c, 0, 2, 0), 100.0);
    EXPECT_NEAR(uplink_bits_per_client(c, 3, 4, 0), 25.0 * std::log2(7.0), 1e-12);
    EXPECT_NEAR(uplink_bits_per_client(c, 3, 4, 0), 70.18, 5e-3);
}

TEST(Uplink, StrictlyDecreasingInClientCount) {
    for (double gp : {0.01, 1.5, 10.0, 1000.0}) {
        const auto c = unit_channel(1e6, 1, gp);
        double previous = uplink_bits_per_client(c, 0, 1, 0);
        for (std::size_t clients = 2; clients <= 128; ++clients) {
            const double cur = uplink_bits_per_client(c, 0, clients, 0);
            EXPECT_LT(cur, previous) << "gain*power " << gp << " C=" << clients;
            previous = cur;
        }
    }
}

TEST(Uplink, ClientOutOfRangeIsConfigError) {
    EXPECT_THROW((void)uplink_bits_per_client(unit_channel(1, 1, 1), 2, 2, 0), ConfigError);
}

TEST(Payload, BitsPerModel) {
    EXPECT_EQ(model_payload_bits(10, 32), 320u);
    EXPECT_EQ(model_payload_bits(133258, 1), 133258u);
    const auto net = build_model(HMlpConfig{}, 1);
    EXPECT_EQ(model_payload_bits(net.trainable_count(), 32), 133258u * 32u);
}

TEST(Feasibility, LinearUplinkAndConstantDownlink) {
    ChannelConfig c;  // unit fading
    std::vector<std::size_t> counts;
    for (std::size_t k = 1; k <= 128; ++k) {
        counts.push_back(k);
    }
    const auto rows = feasibility_report(c, 133258, counts);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].total_uplink_bits, rows[i].clients * 133258u * 32u);
        EXPECT_EQ(rows[i].downlink_bits, rows.front().downlink_bits);
        if (i > 0) {
            EXPECT_LT(rows[i].per_client_uplink_bits, rows[i - 1].per_client_uplink_bits);
        }
    }
    EXPECT_EQ(rows[9].total_uplink_bits, 2 * rows[4].total_uplink_bits);
    const auto csv = feasibility_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "C,payload_bits,per_client_uplink_bits,total_uplink_bits,downlink_bits,uplink_feasible,downlink_feasible");
}

TEST(Fading, RayleighIsSeededAndPositive) {
    ChannelConfig c;
    c.fading = Fading::rayleigh;
    c.seed = 17;
    const double a = downlink_bits(c, 5, 3);
    EXPECT_EQ(a, downlink_bits(c, 5, 3));
    EXPECT_NE(a, downlink_bits(c, 5, 4));
    double mean = 0.0;
    for (std::size_t r = 0; r < 4000; ++r) {
        const double g = uplink_gain(c, 0, r);
        EXPECT_GE(g, 0.0);
        mean += g;
    }
    EXPECT_NEAR(mean / 4000.0, 1.0, 0.08);
}

TEST(ChannelConfig, Validation) {
    ChannelConfig c;
    c.uplink_gains = {-1.0};
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.downlink_power = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW((void)parse_fading("nakagami"), UsageError);
}
