#include "deskrl/datasvc.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace deskrl;
using namespace deskrl::datasvc;

namespace {

ExperienceBatch batch(const std::string& producer, int64_t seq, const std::string& tag = "") {
    ExperienceBatch b;
    b.producer_id = producer;
    b.sequence_number = seq;
    b.data = Value(tag.empty() ? producer + "#" + std::to_string(seq) : tag);
    return b;
}

TEST(BufferShard, UniformEvictsOldestFirst) {
    BufferShard shard(ShardMode::Uniform, 2);
    shard.insert(batch("p", 1, "a"));
    shard.insert(batch("p", 2, "b"));
    shard.insert(batch("p", 3, "c"));
    EXPECT_EQ(shard.size(), 2u);
    EXPECT_EQ(shard.eviction_count(), 1u);
    EXPECT_EQ(shard.contents()[0].data.as_str(), "b");
    EXPECT_EQ(shard.contents()[1].data.as_str(), "c");
}

TEST(BufferShard, FifoPopOrder) {
    BufferShard shard(ShardMode::Fifo, 16);
    shard.insert(batch("p", 1, "a"));
    shard.insert(batch("p", 2, "b"));
    auto got = shard.try_sample_fifo(2);
    ASSERT_TRUE(got.has_value());
    EXPECT_EQ((*got)[0].data.as_str(), "a");
    EXPECT_EQ((*got)[1].data.as_str(), "b");
    EXPECT_EQ(shard.size(), 0u);
    EXPECT_FALSE(shard.try_sample_fifo(1).has_value());
}

TEST(BufferShard, IngestCounting) {
    BufferShard shard(ShardMode::Uniform, 64);
    for (int p = 0; p < 128; ++p)
        for (int i = 0; i < 100; ++i) shard.insert(batch("prod-" + std::to_string(p), i));
    EXPECT_EQ(shard.ingest_count(), 12800u);
}

TEST(BufferShard, SequenceMustIncrease) {
    BufferShard shard(ShardMode::Fifo, 8);
    shard.insert(batch("p", 5));
    EXPECT_THROW(shard.insert(batch("p", 5)), IntegrityError);
    EXPECT_THROW(shard.insert(batch("p", 4)), IntegrityError);
    EXPECT_NO_THROW(shard.insert(batch("p", 6)));
    EXPECT_NO_THROW(shard.insert(batch("q", 1)));  // independent per producer
}

TEST(BufferShard, ShutdownRejectsInserts) {
    BufferShard shard(ShardMode::Fifo, 8);
    shard.shutdown();
    try {
        shard.insert(batch("p", 1));
        FAIL() << "expected rejection";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "rejected");
    }
}

TEST(BufferShard, UniformSingleElement) {
    BufferShard shard(ShardMode::Uniform, 4);
    shard.insert(batch("p", 1, "only"));
    auto got = shard.sample_uniform(5, 99);
    ASSERT_EQ(got.size(), 5u);
    for (const auto& b : got) EXPECT_EQ(b.data.as_str(), "only");
}

TEST(BufferShard, SeededSamplingReproducible) {
    BufferShard shard(ShardMode::Uniform, 32);
    for (int i = 0; i < 20; ++i) shard.insert(batch("p", i));
    auto a = shard.sample_uniform(10, 1234);
    auto b = shard.sample_uniform(10, 1234);
    EXPECT_EQ(a, b);
    auto c = shard.sample_uniform(10, 1235);
    EXPECT_NE(a, c);
}

TEST(BufferShard, UniformFrequenciesWithin3Sigma) {
    BufferShard shard(ShardMode::Uniform, 16);
    for (int i = 0; i < 10; ++i) shard.insert(batch("p", i, std::string(1, char('a' + i))));
    auto draws = shard.sample_uniform(10000, 271828);
    std::map<std::string, int> freq;
    for (const auto& b : draws) freq[b.data.as_str()]++;
    // Binomial oracle: mean 1000, sigma = sqrt(10000 * 0.1 * 0.9) = 30
    for (const auto& [k, n] : freq) {
        EXPECT_GE(n, 1000 - 90) << k;
        EXPECT_LE(n, 1000 + 90) << k;
    }
    EXPECT_EQ(shard.size(), 10u);  // contents unchanged
}

TEST(Router, SingleShardAlwaysZero) {
    Router r(RoutePolicy::RoundRobin, 1);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(r.route("p"), 0u);
}

TEST(Router, RoundRobinCycles) {
    Router r(RoutePolicy::RoundRobin, 3);
    std::vector<size_t> got;
    for (int i = 0; i < 9; ++i) got.push_back(r.route("p"));
    EXPECT_EQ(got, (std::vector<size_t>{0, 1, 2, 0, 1, 2, 0, 1, 2}));
}

TEST(Router, HashBalanced128Producers) {
    Router r(RoutePolicy::Hash, 3);
    std::vector<int> load(3, 0);
    for (int i = 0; i < 128; ++i) load[r.route(std::to_string(i))]++;
    int lo = *std::min_element(load.begin(), load.end());
    int hi = *std::max_element(load.begin(), load.end());
    EXPECT_LE(hi, 2 * lo);
    // Hash routing is sticky per producer.
    Router r2(RoutePolicy::Hash, 3);
    EXPECT_EQ(r2.route("42"), r2.route("42"));
}

TEST(Snapshot, ChecksumRoundTrip) {
    auto s = make_snapshot(1, {0.5, -1.25, 3.0});
    auto rt = snapshot_from_value(snapshot_to_value(s));
    EXPECT_EQ(rt.version, 1);
    EXPECT_EQ(rt.flat_params, s.flat_params);
    EXPECT_EQ(rt.checksum, s.checksum);
    EXPECT_EQ(params_checksum(rt.flat_params), rt.checksum);
}

TEST(ParameterChannel, ReorderKeepsHighestVersion) {
    PubServer raw(0);
    ParameterClient client({"127.0.0.1", raw.port()});
    while (raw.subscriber_count(kParamsTopic) == 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(1));

    auto publish_raw = [&](const ParameterSnapshot& s) {
        raw.publish(kParamsTopic, Frame{MsgKind::Params, "", serialize(snapshot_to_value(s))});
    };
    publish_raw(make_snapshot(3, {3.0}));
    publish_raw(make_snapshot(2, {2.0}));  // reordered delivery

    auto got = client.wait_for_version(3, 5000);
    ASSERT_TRUE(got.has_value());
    std::this_thread::sleep_for(std::chrono::milliseconds(100));  // let v2 arrive too
    auto latest = client.fetch_latest();
    ASSERT_TRUE(latest.has_value());
    EXPECT_EQ(latest->version, 3);
    EXPECT_EQ(latest->flat_params, (std::vector<double>{3.0}));
    client.close();
    raw.close();
}

TEST(ParameterChannel, CorruptChecksumDiscarded) {
    PubServer raw(0);
    ParameterClient client({"127.0.0.1", raw.port()});
    while (raw.subscriber_count(kParamsTopic) == 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(1));

    raw.publish(kParamsTopic,
                Frame{MsgKind::Params, "", serialize(snapshot_to_value(make_snapshot(3, {3.0})))});
    ASSERT_TRUE(client.wait_for_version(3, 5000).has_value());

    auto corrupt = make_snapshot(4, {4.0});
    corrupt.checksum ^= 0xdeadbeef;
    raw.publish(kParamsTopic, Frame{MsgKind::Params, "", serialize(snapshot_to_value(corrupt))});
    while (client.discarded_corrupt() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    auto latest = client.fetch_latest();
    ASSERT_TRUE(latest.has_value());
    EXPECT_EQ(latest->version, 3);  // previous good snapshot retained
    client.close();
    raw.close();
}

TEST(ParameterChannel, NotReadyBeforeFirstSnapshot) {
    PubServer raw(0);
    ParameterClient client({"127.0.0.1", raw.port()});
    EXPECT_FALSE(client.fetch_latest().has_value());
    client.close();
    raw.close();
}

TEST(ParameterChannel, SlowSubscriberStillReachesFinalVersion) {
    ParameterServer server(0, 1);  // single-slot buffer forces drops
    ParameterClient client({"127.0.0.1", server.port()});
    while (server.subscriber_count() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    std::vector<double> big(32 * 1024, 1.0);
    for (int v = 1; v <= 100; ++v) server.publish(make_snapshot(v, big));

    auto got = client.wait_for_version(100, 10000);
    ASSERT_TRUE(got.has_value());
    EXPECT_EQ(got->version, 100);
    // Versions observed by the client never decreased (monotone fetch).
    EXPECT_EQ(client.version(), 100);
    client.close();
    server.close();
}

TEST(ParameterChannel, PublisherVersionMustIncrease) {
    ParameterServer server(0);
    server.publish(make_snapshot(1, {1.0}));
    EXPECT_THROW(server.publish(make_snapshot(1, {1.0})), ContractError);
    server.close();
}

TEST(ShardService, InsertAndFifoSampleOverWire) {
    ShardService service(0, ShardMode::Fifo, 64);
    ShardClient client({{"127.0.0.1", service.port()}});

    for (int i = 0; i < 6; ++i) client.insert(0, batch("actor-0", i));
    while (service.ingest_count() < 6) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    auto reply = client.sample_fifo(0, 4, 2000);
    EXPECT_EQ(reply.status, "ok");
    ASSERT_EQ(reply.batches.size(), 4u);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(reply.batches[i].sequence_number, i);
    EXPECT_EQ(service.size(), 2u);
    client.close();
    service.close();
}

TEST(ShardService, FifoTimeoutWhenUnderfilled) {
    ShardService service(0, ShardMode::Fifo, 64);
    ShardClient client({{"127.0.0.1", service.port()}});
    auto reply = client.sample_fifo(0, 3, 300);
    EXPECT_EQ(reply.status, "timeout");
    EXPECT_TRUE(reply.batches.empty());
    client.close();
    service.close();
}

TEST(ShardService, FifoRequestSatisfiedByLateInserts) {
    ShardService service(0, ShardMode::Fifo, 64);
    ShardClient client({{"127.0.0.1", service.port()}});

    std::thread inserter([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(150));
        for (int i = 0; i < 3; ++i) client.insert(0, batch("late", i));
    });
    auto reply = client.sample_fifo(0, 3, 3000);
    inserter.join();
    EXPECT_EQ(reply.status, "ok");
    EXPECT_EQ(reply.batches.size(), 3u);
    client.close();
    service.close();
}

TEST(ShardService, UniformSeededOverWire) {
    ShardService service(0, ShardMode::Uniform, 64);
    ShardClient client({{"127.0.0.1", service.port()}});
    for (int i = 0; i < 10; ++i) client.insert(0, batch("p", i));
    while (service.ingest_count() < 10) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    auto a = client.sample_uniform(0, 5, 777, 2000);
    auto b = client.sample_uniform(0, 5, 777, 2000);
    EXPECT_EQ(a.status, "ok");
    EXPECT_EQ(a.batches, b.batches);
    EXPECT_EQ(service.size(), 10u);  // contents unchanged
    client.close();
    service.close();
}

TEST(ShardService, ConservationAcrossShards) {
    const int kShards = 3, kProducers = 8, kEach = 50;
    std::vector<std::unique_ptr<ShardService>> services;
    std::vector<Endpoint> endpoints;
    for (int s = 0; s < kShards; ++s) {
        services.push_back(std::make_unique<ShardService>(0, ShardMode::Fifo, 4096));
        endpoints.push_back({"127.0.0.1", services.back()->port()});
    }

    std::vector<std::thread> producers;
    for (int p = 0; p < kProducers; ++p) {
        producers.emplace_back([&, p] {
            ShardClient client(endpoints);
            Router router(RoutePolicy::RoundRobin, kShards);
            std::string id = "producer-" + std::to_string(p);
            for (int i = 0; i < kEach; ++i) client.insert(router.route(id), batch(id, i));
            client.close();
        });
    }
    for (auto& t : producers) t.join();

    uint64_t total = 0;
    int64_t deadline = now_ms() + 5000;
    while (now_ms() < deadline) {
        total = 0;
        for (const auto& s : services) total += s->ingest_count();
        if (total == uint64_t(kProducers) * kEach) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    EXPECT_EQ(total, uint64_t(kProducers) * kEach);
    for (auto& s : services) s->close();
}

}  // namespace
