// Wire-level envelope: magic "SRL", version byte, message kind, topic
// (u16-prefixed), payload (u32-prefixed). Little-endian throughout.
#pragma once

#include <optional>
#include <string>
#include <utility>

#include "deskrl/common.hpp"

namespace deskrl {

enum class MsgKind : uint8_t {
    Data = 0x01,
    Params = 0x02,
    Control = 0x03,
};

constexpr uint8_t kFrameMagic[3] = {0x53, 0x52, 0x4C};
constexpr uint8_t kFrameVersion = 0x01;
constexpr size_t kFrameHeaderBytes = 3 + 1 + 1 + 2;  // magic + version + kind + topic length
constexpr uint64_t kMaxFramePayload = 256ull * 1024 * 1024;

struct Frame {
    MsgKind kind = MsgKind::Data;
    std::string topic;
    Bytes payload;

    bool operator==(const Frame&) const = default;
};

inline Bytes encode_frame(const Frame& f) {
    if (f.topic.size() > UINT16_MAX) throw SizeError("topic longer than 65535 bytes");
    if (f.payload.size() > kMaxFramePayload)
        throw SizeError("payload exceeds 256 MB frame limit");
    Bytes out;
    out.reserve(kFrameHeaderBytes + f.topic.size() + 4 + f.payload.size());
    out.insert(out.end(), std::begin(kFrameMagic), std::end(kFrameMagic));
    out.push_back(kFrameVersion);
    out.push_back(static_cast<uint8_t>(f.kind));
    put_u16le(out, static_cast<uint16_t>(f.topic.size()));
    out.insert(out.end(), f.topic.begin(), f.topic.end());
    put_u32le(out, static_cast<uint32_t>(f.payload.size()));
    out.insert(out.end(), f.payload.begin(), f.payload.end());
    return out;
}

inline Bytes encode_frame(MsgKind kind, std::string topic, Bytes payload) {
    return encode_frame(Frame{kind, std::move(topic), std::move(payload)});
}

// Parses one frame from the front of `bytes`. Returns the frame and the
// number of bytes consumed, or nullopt when the buffer is a valid but
// incomplete prefix. Malformed input throws.
inline std::optional<std::pair<Frame, size_t>> try_parse_frame(std::span<const uint8_t> bytes) {
    if (bytes.size() >= 1 && bytes[0] != kFrameMagic[0]) throw ProtocolError("bad magic");
    if (bytes.size() >= 2 && bytes[1] != kFrameMagic[1]) throw ProtocolError("bad magic");
    if (bytes.size() >= 3 && bytes[2] != kFrameMagic[2]) throw ProtocolError("bad magic");
    if (bytes.size() >= 4 && bytes[3] != kFrameVersion)
        throw VersionError("unsupported version 0x" + std::to_string(bytes[3]));
    if (bytes.size() < kFrameHeaderBytes) return std::nullopt;

    uint8_t kind = bytes[4];
    if (kind < 0x01 || kind > 0x03) throw ProtocolError("unknown msg kind 0x" + std::to_string(kind));
    uint16_t topic_len = get_u16le(bytes.subspan(5, 2));
    size_t need = kFrameHeaderBytes + topic_len + 4;
    if (bytes.size() < need) return std::nullopt;
    uint32_t payload_len = get_u32le(bytes.subspan(kFrameHeaderBytes + topic_len, 4));
    if (payload_len > kMaxFramePayload) throw SizeError("payload exceeds 256 MB frame limit");
    size_t total = need + payload_len;
    if (bytes.size() < total) return std::nullopt;

    Frame f;
    f.kind = static_cast<MsgKind>(kind);
    f.topic.assign(bytes.begin() + kFrameHeaderBytes, bytes.begin() + kFrameHeaderBytes + topic_len);
    f.payload.assign(bytes.begin() + need, bytes.begin() + total);
    return std::make_pair(std::move(f), total);
}

// Strict decode: the buffer must hold exactly one complete frame.
inline Frame decode_frame(std::span<const uint8_t> bytes) {
    auto parsed = try_parse_frame(bytes);
    if (!parsed) throw IncompleteError("frame truncated");
    if (parsed->second != bytes.size()) throw ProtocolError("trailing bytes after frame");
    return std::move(parsed->first);
}

inline Frame decode_frame(const Bytes& bytes) {
    return decode_frame(std::span<const uint8_t>(bytes.data(), bytes.size()));
}

}  // namespace deskrl
