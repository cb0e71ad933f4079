// Shared plumbing: error types, little-endian byte IO, FNV-1a hashing,
// a deterministic RNG, and a bounded blocking queue.
#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deskrl {

using Bytes = std::vector<uint8_t>;

// All library errors carry a short machine-parseable code ("codec",
// "transport", ...) plus a human-readable message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& msg)
        : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

struct SizeError : Error {
    explicit SizeError(const std::string& m) : Error("size", m) {}
};
struct ProtocolError : Error {
    explicit ProtocolError(const std::string& m) : Error("protocol", m) {}
};
struct VersionError : Error {
    explicit VersionError(const std::string& m) : Error("version", m) {}
};
// Recoverable: the caller may buffer more bytes and retry.
struct IncompleteError : Error {
    explicit IncompleteError(const std::string& m) : Error("incomplete", m) {}
};
struct CodecError : Error {
    explicit CodecError(const std::string& m) : Error("codec", m) {}
};
struct DepthError : Error {
    explicit DepthError(const std::string& m) : Error("depth", m) {}
};
struct TransportError : Error {
    TransportError(const std::string& m, int retry_after_ms = 0)
        : Error("transport", m), retry_after_ms(retry_after_ms) {}
    int retry_after_ms;
};
struct BrokenPipelineError : Error {
    explicit BrokenPipelineError(const std::string& m) : Error("broken-pipeline", m) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("numeric", m) {}
};
struct ContractError : Error {
    explicit ContractError(const std::string& m) : Error("contract", m) {}
};
struct IntegrityError : Error {
    explicit IntegrityError(const std::string& m) : Error("integrity", m) {}
};
struct NotFoundError : Error {
    explicit NotFoundError(const std::string& m) : Error("not-found", m) {}
};
struct NameConflictError : Error {
    explicit NameConflictError(const std::string& m) : Error("name-conflict", m) {}
};
struct ParseError : Error {
    explicit ParseError(const std::string& m) : Error("parse", m) {}
};
struct AllocationError : Error {
    explicit AllocationError(const std::string& m) : Error("port-exhausted", m) {}
};
struct ReferenceError : Error {
    explicit ReferenceError(const std::string& m) : Error("unknown-nodepool", m) {}
};
struct MappingError : Error {
    explicit MappingError(const std::string& m) : Error("mapping", m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};

// ---- little-endian byte IO -------------------------------------------------

inline void put_u16le(Bytes& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32le(Bytes& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_u64le(Bytes& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

inline uint16_t get_u16le(std::span<const uint8_t> in) {
    return static_cast<uint16_t>(in[0] | (uint16_t(in[1]) << 8));
}

inline uint32_t get_u32le(std::span<const uint8_t> in) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(in[i]) << (8 * i);
    return v;
}

inline uint64_t get_u64le(std::span<const uint8_t> in) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(in[i]) << (8 * i);
    return v;
}

inline void put_f64le(Bytes& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64le(out, bits);
}

inline double get_f64le(std::span<const uint8_t> in) {
    uint64_t bits = get_u64le(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

// ---- hashing ----------------------------------------------------------------

// FNV-1a, 64-bit. Used for parameter-snapshot checksums and shard routing.
inline uint64_t fnv1a64(std::span<const uint8_t> data) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : data) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

// ---- deterministic RNG -------------------------------------------------------

// splitmix64; decorrelates sequential seeds before they reach the engine.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// mt19937_64 (seed pre-mixed with splitmix64) with explicit uniform/normal
// transforms so that seeded draws are bit-identical across builds
// (std::*_distribution is implementation-defined, the engine itself is
// standardized). Normal variates come from Box-Muller; the spare is cached,
// so a seed always yields the same sequence.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(mix_seed(seed)) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) via rejection sampling.
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---- bounded blocking queue ---------------------------------------------------

template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(size_t capacity) : capacity_(capacity ? capacity : 1) {}

    // Blocks while full. Returns false if the queue was closed.
    bool push(T item) {
        std::unique_lock lk(mu_);
        not_full_.wait(lk, [&] { return items_.size() < capacity_ || closed_; });
        if (closed_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    bool try_push(T item) {
        std::lock_guard lk(mu_);
        if (closed_ || items_.size() >= capacity_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    // Blocks until an item arrives, the timeout elapses, or the queue is
    // closed and drained. timeout_ms < 0 means wait forever.
    std::optional<T> pop(long timeout_ms = -1) {
        std::unique_lock lk(mu_);
        auto ready = [&] { return !items_.empty() || closed_; };
        if (timeout_ms < 0) {
            not_empty_.wait(lk, ready);
        } else if (!not_empty_.wait_for(lk, std::chrono::milliseconds(timeout_ms), ready)) {
            return std::nullopt;
        }
        if (items_.empty()) return std::nullopt;  // closed and drained
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lk(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    bool closed() const {
        std::lock_guard lk(mu_);
        return closed_;
    }

    size_t size() const {
        std::lock_guard lk(mu_);
        return items_.size();
    }

private:
    mutable std::mutex mu_;
    std::condition_variable not_empty_, not_full_;
    std::deque<T> items_;
    size_t capacity_;
    bool closed_ = false;
};

// ---- misc -----------------------------------------------------------------------

inline int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

inline double now_sec() {
    return std::chrono::duration_cast<std::chrono::duration<double>>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

inline int64_t unix_time_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

inline std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

}  // namespace deskrl
