// Self-describing binary value tree. Every variant encodes as
// tag byte + u32 little-endian body length + body.
#pragma once

#include <cstring>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "deskrl/common.hpp"

namespace deskrl {

enum class Tag : uint8_t {
    Null = 0x01,
    Bool = 0x02,
    Int64 = 0x03,
    Float64 = 0x04,
    Bytes = 0x05,
    Utf8 = 0x06,
    List = 0x07,
    Map = 0x08,
    F64Array = 0x09,
    F32Array = 0x0A,
};

constexpr int kMaxValueDepth = 64;

class Value {
public:
    using List = std::vector<Value>;
    using Map = std::map<std::string, Value>;

    Value() : v_(std::monostate{}) {}
    Value(bool b) : v_(b) {}
    Value(int64_t i) : v_(i) {}
    Value(int i) : v_(static_cast<int64_t>(i)) {}
    Value(uint64_t u) : v_(static_cast<int64_t>(u)) {}
    Value(double d) : v_(d) {}
    Value(const char* s) : v_(std::string(s)) {}
    Value(std::string s) : v_(std::move(s)) {}
    Value(List l) : v_(std::move(l)) {}
    Value(Map m) : v_(std::move(m)) {}
    Value(std::vector<double> a) : v_(std::move(a)) {}
    Value(std::vector<float> a) : v_(std::move(a)) {}

    static Value bytes(Bytes b) {
        Value v;
        v.v_ = std::move(b);
        return v;
    }

    Tag tag() const { return static_cast<Tag>(v_.index() + 1); }

    bool is_null() const { return tag() == Tag::Null; }

    bool as_bool() const { return get<bool>("bool"); }
    int64_t as_int() const { return get<int64_t>("int64"); }
    double as_double() const { return get<double>("float64"); }
    const Bytes& as_bytes() const { return get<Bytes>("bytes"); }
    const std::string& as_str() const { return get<std::string>("utf8"); }
    const List& as_list() const { return get<List>("list"); }
    const Map& as_map() const { return get<Map>("map"); }
    const std::vector<double>& as_f64array() const { return get<std::vector<double>>("f64array"); }
    const std::vector<float>& as_f32array() const { return get<std::vector<float>>("f32array"); }

    // Map field access with a readable error when absent.
    const Value& at(const std::string& key) const {
        const auto& m = as_map();
        auto it = m.find(key);
        if (it == m.end()) throw CodecError("missing map key '" + key + "'");
        return it->second;
    }

    bool has(const std::string& key) const {
        return tag() == Tag::Map && as_map().count(key) > 0;
    }

    bool operator==(const Value& other) const = default;

private:
    template <typename T>
    const T& get(const char* want) const {
        if (auto* p = std::get_if<T>(&v_)) return *p;
        throw CodecError(std::string("value is not ") + want);
    }

    std::variant<std::monostate, bool, int64_t, double, Bytes, std::string, List, Map,
                 std::vector<double>, std::vector<float>>
        v_;

    friend void serialize_into(const Value& v, Bytes& out, int depth);
};

namespace detail {

inline void put_header(Bytes& out, Tag tag, uint64_t len) {
    if (len > UINT32_MAX) throw SizeError("value body exceeds u32 length");
    out.push_back(static_cast<uint8_t>(tag));
    put_u32le(out, static_cast<uint32_t>(len));
}

}  // namespace detail

inline void serialize_into(const Value& v, Bytes& out, int depth) {
    if (depth > kMaxValueDepth) throw DepthError("value tree deeper than 64");
    switch (v.tag()) {
        case Tag::Null:
            detail::put_header(out, Tag::Null, 0);
            break;
        case Tag::Bool:
            detail::put_header(out, Tag::Bool, 1);
            out.push_back(v.as_bool() ? 1 : 0);
            break;
        case Tag::Int64:
            detail::put_header(out, Tag::Int64, 8);
            put_u64le(out, static_cast<uint64_t>(v.as_int()));
            break;
        case Tag::Float64:
            detail::put_header(out, Tag::Float64, 8);
            put_f64le(out, v.as_double());
            break;
        case Tag::Bytes: {
            const auto& b = v.as_bytes();
            detail::put_header(out, Tag::Bytes, b.size());
            out.insert(out.end(), b.begin(), b.end());
            break;
        }
        case Tag::Utf8: {
            const auto& s = v.as_str();
            detail::put_header(out, Tag::Utf8, s.size());
            out.insert(out.end(), s.begin(), s.end());
            break;
        }
        case Tag::List: {
            Bytes body;
            for (const auto& e : v.as_list()) serialize_into(e, body, depth + 1);
            detail::put_header(out, Tag::List, body.size());
            out.insert(out.end(), body.begin(), body.end());
            break;
        }
        case Tag::Map: {
            Bytes body;
            for (const auto& [k, e] : v.as_map()) {
                serialize_into(Value(k), body, depth + 1);
                serialize_into(e, body, depth + 1);
            }
            detail::put_header(out, Tag::Map, body.size());
            out.insert(out.end(), body.begin(), body.end());
            break;
        }
        case Tag::F64Array: {
            const auto& a = v.as_f64array();
            detail::put_header(out, Tag::F64Array, a.size() * 8);
            size_t at = out.size();
            out.resize(at + a.size() * 8);
            std::memcpy(out.data() + at, a.data(), a.size() * 8);
            break;
        }
        case Tag::F32Array: {
            const auto& a = v.as_f32array();
            detail::put_header(out, Tag::F32Array, a.size() * 4);
            size_t at = out.size();
            out.resize(at + a.size() * 4);
            std::memcpy(out.data() + at, a.data(), a.size() * 4);
            break;
        }
    }
}

inline Bytes serialize(const Value& v) {
    Bytes out;
    serialize_into(v, out, 1);
    return out;
}

namespace detail {

struct Cursor {
    std::span<const uint8_t> data;
    size_t pos = 0;

    size_t remaining() const { return data.size() - pos; }

    std::span<const uint8_t> take(size_t n) {
        if (remaining() < n) throw CodecError("declared length exceeds remaining bytes");
        auto s = data.subspan(pos, n);
        pos += n;
        return s;
    }
};

inline Value parse_value(Cursor& cur, int depth) {
    if (depth > kMaxValueDepth) throw DepthError("value tree deeper than 64");
    if (cur.remaining() < 5) throw CodecError("truncated value header");
    uint8_t tag = cur.data[cur.pos];
    cur.pos += 1;
    uint32_t len = get_u32le(cur.take(4));
    switch (static_cast<Tag>(tag)) {
        case Tag::Null:
            if (len != 0) throw CodecError("null with nonzero length");
            return Value();
        case Tag::Bool: {
            if (len != 1) throw CodecError("bool body must be 1 byte");
            uint8_t b = cur.take(1)[0];
            if (b > 1) throw CodecError("bool body must be 0 or 1");
            return Value(b == 1);
        }
        case Tag::Int64:
            if (len != 8) throw CodecError("int64 body must be 8 bytes");
            return Value(static_cast<int64_t>(get_u64le(cur.take(8))));
        case Tag::Float64:
            if (len != 8) throw CodecError("float64 body must be 8 bytes");
            return Value(get_f64le(cur.take(8)));
        case Tag::Bytes: {
            auto s = cur.take(len);
            return Value::bytes(Bytes(s.begin(), s.end()));
        }
        case Tag::Utf8: {
            auto s = cur.take(len);
            return Value(std::string(s.begin(), s.end()));
        }
        case Tag::List: {
            Cursor body{cur.take(len), 0};
            Value::List items;
            while (body.remaining() > 0) items.push_back(parse_value(body, depth + 1));
            return Value(std::move(items));
        }
        case Tag::Map: {
            Cursor body{cur.take(len), 0};
            Value::Map m;
            while (body.remaining() > 0) {
                Value key = parse_value(body, depth + 1);
                if (key.tag() != Tag::Utf8) throw CodecError("map key must be utf8");
                Value val = parse_value(body, depth + 1);
                if (!m.emplace(key.as_str(), std::move(val)).second)
                    throw CodecError("duplicate map key '" + key.as_str() + "'");
            }
            return Value(std::move(m));
        }
        case Tag::F64Array: {
            if (len % 8 != 0) throw CodecError("f64array body not a multiple of 8");
            auto s = cur.take(len);
            std::vector<double> a(len / 8);
            std::memcpy(a.data(), s.data(), len);
            return Value(std::move(a));
        }
        case Tag::F32Array: {
            if (len % 4 != 0) throw CodecError("f32array body not a multiple of 4");
            auto s = cur.take(len);
            std::vector<float> a(len / 4);
            std::memcpy(a.data(), s.data(), len);
            return Value(std::move(a));
        }
        default:
            throw CodecError("unknown tag 0x" + std::to_string(tag));
    }
}

}  // namespace detail

// Strict top-level decode: the buffer must hold exactly one value.
inline Value deserialize(std::span<const uint8_t> bytes) {
    detail::Cursor cur{bytes, 0};
    Value v = detail::parse_value(cur, 1);
    if (cur.remaining() != 0) throw CodecError("trailing bytes after value");
    return v;
}

inline Value deserialize(const Bytes& bytes) {
    return deserialize(std::span<const uint8_t>(bytes.data(), bytes.size()));
}

}  // namespace deskrl
