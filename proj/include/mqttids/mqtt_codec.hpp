#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mqttids::mqtt {

// MQTT 3.1.1 control packets, port-1883 wire layout. QoS 2 handshake
// packets decode fine; the traffic simulator only ever emits QoS 0/1.

constexpr std::uint32_t kMaxRemainingLength = 268435455;  // 0xFFFFFF7F varint max

enum class PacketType : std::uint8_t {
    Connect = 1,
    Connack = 2,
    Publish = 3,
    Puback = 4,
    Pubrec = 5,
    Pubrel = 6,
    Pubcomp = 7,
    Subscribe = 8,
    Suback = 9,
    Unsubscribe = 10,
    Unsuback = 11,
    Pingreq = 12,
    Pingresp = 13,
    Disconnect = 14,
};

struct Connect {
    std::string client_id;
    std::uint16_t keep_alive = 60;
    bool clean_session = true;
    bool operator==(const Connect&) const = default;
};

struct Connack {
    std::uint8_t return_code = 0;
    bool session_present = false;
    bool operator==(const Connack&) const = default;
};

struct Publish {
    std::string topic;                         // no wildcards allowed
    std::uint8_t qos = 0;                      // 0..2
    bool retain = false;
    bool dup = false;
    std::optional<std::uint16_t> packet_id;    // present iff qos > 0
    std::string payload;                       // raw bytes
    bool operator==(const Publish&) const = default;
};

struct Puback {
    std::uint16_t packet_id = 0;
    bool operator==(const Puback&) const = default;
};
struct Pubrec {
    std::uint16_t packet_id = 0;
    bool operator==(const Pubrec&) const = default;
};
struct Pubrel {
    std::uint16_t packet_id = 0;
    bool operator==(const Pubrel&) const = default;
};
struct Pubcomp {
    std::uint16_t packet_id = 0;
    bool operator==(const Pubcomp&) const = default;
};

struct Subscribe {
    std::uint16_t packet_id = 0;
    std::vector<std::pair<std::string, std::uint8_t>> filters;  // (filter, requested qos)
    bool operator==(const Subscribe&) const = default;
};

struct Suback {
    std::uint16_t packet_id = 0;
    std::vector<std::uint8_t> granted;  // 0..2 or 0x80 = failure
    bool operator==(const Suback&) const = default;
};

struct Unsubscribe {
    std::uint16_t packet_id = 0;
    std::vector<std::string> filters;
    bool operator==(const Unsubscribe&) const = default;
};

struct Unsuback {
    std::uint16_t packet_id = 0;
    bool operator==(const Unsuback&) const = default;
};

struct Pingreq {
    bool operator==(const Pingreq&) const = default;
};
struct Pingresp {
    bool operator==(const Pingresp&) const = default;
};
struct Disconnect {
    bool operator==(const Disconnect&) const = default;
};

using MqttPacket = std::variant<Connect, Connack, Publish, Puback, Pubrec, Pubrel,
                                Pubcomp, Subscribe, Suback, Unsubscribe, Unsuback,
                                Pingreq, Pingresp, Disconnect>;

PacketType packet_type(const MqttPacket& p);

// Base-128 varint with continuation bit, 1..4 bytes.
// Returns (value, bytes consumed). Throws MalformedLength.
std::pair<std::uint32_t, std::size_t> decode_remaining_length(const std::uint8_t* data,
                                                              std::size_t size);
void encode_remaining_length(std::uint32_t value, std::vector<std::uint8_t>& out);

// Throws MalformedLength / UnknownPacketType / TruncatedPacket /
// InvalidUtf8 / MalformedPacket on bad input; never crashes.
std::pair<MqttPacket, std::size_t> parse_packet(const std::uint8_t* data, std::size_t size);
std::pair<MqttPacket, std::size_t> parse_packet(const std::vector<std::uint8_t>& bytes);

// Throws OversizedPacket if remaining length would exceed the varint maximum.
std::vector<std::uint8_t> encode_packet(const MqttPacket& packet);

// MQTT wildcard matching: '#' matches all remaining levels (only final level),
// '+' matches exactly one level. Throws InvalidFilter on misplaced wildcards.
bool topic_matches(const std::string& filter, const std::string& topic);

bool is_valid_utf8(const std::string& s);

}  // namespace mqttids::mqtt
