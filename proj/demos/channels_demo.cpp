// Minimal tour of the messaging layer: a pull service, two pushers, and a
// parameter broadcast with a late subscriber.
#include <cstdio>
#include <thread>

#include "deskrl/channel.hpp"
#include "deskrl/datasvc.hpp"

using namespace deskrl;

int main() {
    PullServer sink(0);
    std::thread pusher_a([&] {
        PushClient p({"127.0.0.1", sink.port()});
        for (int i = 0; i < 3; ++i) p.push(Frame{MsgKind::Data, "a", {uint8_t(i)}});
    });
    std::thread pusher_b([&] {
        PushClient p({"127.0.0.1", sink.port()});
        for (int i = 0; i < 3; ++i) p.push(Frame{MsgKind::Data, "b", {uint8_t(i)}});
    });
    for (int i = 0; i < 6; ++i) {
        auto f = sink.pull(2000);
        if (f) std::printf("pulled topic=%s seq=%d\n", f->topic.c_str(), int(f->payload[0]));
    }
    pusher_a.join();
    pusher_b.join();

    datasvc::ParameterServer ps(0);
    ps.publish(datasvc::make_snapshot(1, {0.5, 1.5}));  // published before anyone subscribes
    datasvc::ParameterClient client({"127.0.0.1", ps.port()});
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    ps.publish(datasvc::make_snapshot(2, {2.5, 3.5}));
    auto snap = client.wait_for_version(2, 2000);
    if (snap)
        std::printf("subscriber caught version %lld (missed v1: no replay)\n",
                    static_cast<long long>(snap->version));
    client.close();
    ps.close();
    sink.close();
    return 0;
}
