#include "deskrl/channel.hpp"

#include <gtest/gtest.h>

#include <future>
#include <map>
#include <thread>

using namespace deskrl;

namespace {

Frame data_frame(const std::string& topic, uint64_t tag) {
    Bytes payload;
    put_u64le(payload, tag);
    return Frame{MsgKind::Data, topic, payload};
}

uint64_t frame_tag(const Frame& f) { return get_u64le({f.payload.data(), f.payload.size()}); }

uint16_t grab_free_port() {
    net::Listener probe(0);
    uint16_t p = probe.port();
    probe.close();
    return p;
}

TEST(PushPull, SinglePusherFifo) {
    PullServer server(0);
    PushClient pusher({"127.0.0.1", server.port()});
    for (uint64_t i = 1; i <= 100; ++i) pusher.push(data_frame("seq", i));

    for (uint64_t i = 1; i <= 100; ++i) {
        auto f = server.pull(2000);
        ASSERT_TRUE(f.has_value());
        EXPECT_EQ(frame_tag(*f), i);
    }
    pusher.close();
    server.close();
}

TEST(PushPull, FourPushersConserveAndOrder) {
    PullServer server(0);
    const int kPushers = 4, kEach = 250;

    std::vector<std::thread> threads;
    for (int p = 0; p < kPushers; ++p) {
        threads.emplace_back([&, p] {
            PushClient pusher({"127.0.0.1", server.port()});
            for (int i = 0; i < kEach; ++i)
                pusher.push(data_frame("p" + std::to_string(p), static_cast<uint64_t>(i)));
        });
    }

    std::map<std::string, uint64_t> next_expected;
    int total = 0;
    while (total < kPushers * kEach) {
        auto f = server.pull(5000);
        ASSERT_TRUE(f.has_value()) << "received only " << total;
        // Counting oracle: per-pusher subsequence must be 0,1,2,...
        EXPECT_EQ(frame_tag(*f), next_expected[f->topic]++);
        total++;
    }
    EXPECT_EQ(total, kPushers * kEach);
    // Nothing extra arrives.
    EXPECT_FALSE(server.pull(100).has_value());
    for (auto& t : threads) t.join();
    server.close();
}

TEST(PushPull, UnboundPortRefused) {
    uint16_t port = grab_free_port();
    PushClient pusher({"127.0.0.1", port});
    try {
        pusher.push(data_frame("x", 1));
        FAIL() << "expected transport error";
    } catch (const TransportError& e) {
        EXPECT_GT(e.retry_after_ms, 0);
    }
}

TEST(PushPull, ConservationUnderInterleavingProperty) {
    for (int pushers : {2, 8}) {
        PullServer server(0, 64);
        std::vector<std::thread> threads;
        const int each = 100;
        for (int p = 0; p < pushers; ++p) {
            threads.emplace_back([&, p] {
                PushClient pusher({"127.0.0.1", server.port()});
                for (int i = 0; i < each; ++i)
                    pusher.push(data_frame(std::to_string(p), static_cast<uint64_t>(i)));
            });
        }
        int got = 0;
        while (got < pushers * each) {
            auto f = server.pull(5000);
            ASSERT_TRUE(f.has_value());
            got++;
        }
        EXPECT_EQ(got, pushers * each);
        for (auto& t : threads) t.join();
        server.close();
    }
}

TEST(PubSub, LateJoinerMissesEarlierFrames) {
    PubServer server(0);
    EXPECT_EQ(server.publish("params", data_frame("params", 1)), 0u);  // no subscribers: ok

    SubClient sub({"127.0.0.1", server.port()}, "params");
    while (server.subscriber_count("params") == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    EXPECT_EQ(server.publish("params", data_frame("params", 2)), 1u);
    auto f = sub.recv(2000);
    ASSERT_TRUE(f.has_value());
    EXPECT_EQ(frame_tag(*f), 2u);  // v1 was never replayed
    EXPECT_FALSE(sub.recv(100).has_value());
    sub.close();
    server.close();
}

TEST(PubSub, FanOutThreeSubscribers) {
    PubServer server(0);
    std::vector<std::unique_ptr<SubClient>> subs;
    for (int i = 0; i < 3; ++i)
        subs.push_back(std::make_unique<SubClient>(Endpoint{"127.0.0.1", server.port()}, "t"));
    while (server.subscriber_count("t") < 3) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    EXPECT_EQ(server.publish("t", data_frame("t", 42)), 3u);
    for (auto& s : subs) {
        auto f = s->recv(2000);
        ASSERT_TRUE(f.has_value());
        EXPECT_EQ(frame_tag(*f), 42u);
    }
    for (auto& s : subs) s->close();
    server.close();
}

TEST(PubSub, TopicFiltering) {
    PubServer server(0);
    SubClient sub_a({"127.0.0.1", server.port()}, "a");
    SubClient sub_all({"127.0.0.1", server.port()}, "");
    while (server.subscriber_count() < 2) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    server.publish("a", data_frame("", 1));
    server.publish("b", data_frame("", 2));

    auto fa = sub_a.recv(2000);
    ASSERT_TRUE(fa.has_value());
    EXPECT_EQ(frame_tag(*fa), 1u);
    EXPECT_FALSE(sub_a.recv(100).has_value());  // "b" filtered out

    auto f1 = sub_all.recv(2000);
    auto f2 = sub_all.recv(2000);
    ASSERT_TRUE(f1 && f2);  // empty subscription sees everything
    EXPECT_EQ(frame_tag(*f1), 1u);
    EXPECT_EQ(frame_tag(*f2), 2u);
    sub_a.close();
    sub_all.close();
    server.close();
}

TEST(PubSub, StalledSubscriberDropsOldestWithAccounting) {
    const size_t kBuffer = 10;
    const int kPublished = 1000;
    PubServer server(0, kBuffer);
    // Tiny inbox and a reader that never drains it: TCP backpressure stalls
    // the server-side writer, so the per-subscriber buffer must overflow.
    SubClient sub({"127.0.0.1", server.port()}, "big", 2);
    while (server.subscriber_count("big") == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    Frame big{MsgKind::Data, "big", Bytes(64 * 1024, 0x7E)};
    for (int i = 0; i < kPublished; ++i) server.publish("big", big);

    auto stats = server.stats();
    ASSERT_EQ(stats.size(), 1u);
    EXPECT_EQ(stats[0].enqueued, static_cast<uint64_t>(kPublished));
    EXPECT_GT(stats[0].dropped, 0u);
    // delivered (sent or still buffered) + dropped account for every publish
    EXPECT_EQ(stats[0].sent + stats[0].buffered + stats[0].dropped,
              static_cast<uint64_t>(kPublished));
    sub.close();
    server.close();
}

// Received sequence is a subsequence of the published sequence.
TEST(PubSub, PerSubscriberOrderingProperty) {
    PubServer server(0, 8);
    SubClient sub({"127.0.0.1", server.port()}, "s", 4);
    while (server.subscriber_count("s") == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    const int kPublished = 500;
    std::thread consumer_gap([&] { std::this_thread::sleep_for(std::chrono::milliseconds(50)); });
    for (int i = 0; i < kPublished; ++i) server.publish("s", data_frame("s", uint64_t(i)));
    consumer_gap.join();

    uint64_t last = 0;
    bool first = true;
    int seen = 0;
    while (auto f = sub.recv(200)) {
        uint64_t tag = frame_tag(*f);
        if (!first) EXPECT_GT(tag, last);  // strictly increasing => subsequence
        last = tag;
        first = false;
        seen++;
    }
    EXPECT_GT(seen, 0);
    EXPECT_LE(seen, kPublished);
    sub.close();
    server.close();
}

}  // namespace
