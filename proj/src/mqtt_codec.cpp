#include "mqttids/mqtt_codec.hpp"

#include <cstring>

#include "mqttids/errors.hpp"

namespace mqttids::mqtt {

namespace {

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t remaining() const { return size_ - pos_; }

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
        pos_ += 2;
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    // Length-prefixed UTF-8 string.
    std::string utf8_string() {
        std::uint16_t len = u16();
        std::string s = bytes(len);
        if (!is_valid_utf8(s)) throw InvalidUtf8("string is not valid UTF-8");
        return s;
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw TruncatedPacket("packet body truncated");
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    if (s.size() > 0xFFFF) throw OversizedPacket("string exceeds 65535 bytes");
    put_u16(out, static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

bool has_wildcard(const std::string& topic) {
    return topic.find_first_of("#+") != std::string::npos;
}

std::vector<std::string> split_levels(const std::string& s) {
    std::vector<std::string> levels;
    std::size_t start = 0;
    while (true) {
        std::size_t slash = s.find('/', start);
        if (slash == std::string::npos) {
            levels.push_back(s.substr(start));
            return levels;
        }
        levels.push_back(s.substr(start, slash - start));
        start = slash + 1;
    }
}

void validate_filter(const std::string& filter) {
    if (filter.empty()) throw InvalidFilter("empty filter");
    auto levels = split_levels(filter);
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const std::string& lv = levels[i];
        if (lv.find('#') != std::string::npos) {
            if (lv != "#" || i + 1 != levels.size())
                throw InvalidFilter("'#' must stand alone in the final level: " + filter);
        }
        if (lv.find('+') != std::string::npos && lv != "+")
            throw InvalidFilter("'+' must occupy a whole level: " + filter);
    }
}

}  // namespace

bool is_valid_utf8(const std::string& s) {
    const auto* p = reinterpret_cast<const unsigned char*>(s.data());
    std::size_t n = s.size();
    std::size_t i = 0;
    while (i < n) {
        unsigned char c = p[i];
        if (c < 0x80) {
            ++i;
        } else if ((c & 0xE0) == 0xC0) {
            if (i + 1 >= n || (p[i + 1] & 0xC0) != 0x80) return false;
            if (c < 0xC2) return false;  // overlong
            i += 2;
        } else if ((c & 0xF0) == 0xE0) {
            if (i + 2 >= n || (p[i + 1] & 0xC0) != 0x80 || (p[i + 2] & 0xC0) != 0x80)
                return false;
            unsigned cp = (c & 0x0Fu) << 12 | (p[i + 1] & 0x3Fu) << 6 | (p[i + 2] & 0x3Fu);
            if (cp < 0x800) return false;                    // overlong
            if (cp >= 0xD800 && cp <= 0xDFFF) return false;  // surrogate
            i += 3;
        } else if ((c & 0xF8) == 0xF0) {
            if (i + 3 >= n || (p[i + 1] & 0xC0) != 0x80 || (p[i + 2] & 0xC0) != 0x80 ||
                (p[i + 3] & 0xC0) != 0x80)
                return false;
            unsigned cp = (c & 0x07u) << 18 | (p[i + 1] & 0x3Fu) << 12 |
                          (p[i + 2] & 0x3Fu) << 6 | (p[i + 3] & 0x3Fu);
            if (cp < 0x10000 || cp > 0x10FFFF) return false;
            i += 4;
        } else {
            return false;
        }
    }
    return true;
}

PacketType packet_type(const MqttPacket& p) {
    return static_cast<PacketType>(p.index() + 1);
}

std::pair<std::uint32_t, std::size_t> decode_remaining_length(const std::uint8_t* data,
                                                              std::size_t size) {
    std::uint32_t value = 0;
    std::uint32_t multiplier = 1;
    for (std::size_t i = 0; i < 4; ++i) {
        if (i >= size) throw MalformedLength("truncated remaining-length varint");
        std::uint8_t byte = data[i];
        value += (byte & 0x7Fu) * multiplier;
        if ((byte & 0x80u) == 0) return {value, i + 1};
        multiplier *= 128;
    }
    throw MalformedLength("remaining-length varint longer than 4 bytes");
}

void encode_remaining_length(std::uint32_t value, std::vector<std::uint8_t>& out) {
    if (value > kMaxRemainingLength) throw OversizedPacket("remaining length too large");
    do {
        std::uint8_t byte = value % 128;
        value /= 128;
        if (value > 0) byte |= 0x80;
        out.push_back(byte);
    } while (value > 0);
}

std::pair<MqttPacket, std::size_t> parse_packet(const std::uint8_t* data, std::size_t size) {
    if (size < 1) throw TruncatedPacket("empty input");
    std::uint8_t first = data[0];
    std::uint8_t type = first >> 4;
    std::uint8_t flags = first & 0x0F;
    if (type < 1 || type > 14) throw UnknownPacketType("packet type " + std::to_string(type));

    auto [rem_len, varint_len] = decode_remaining_length(data + 1, size - 1);
    std::size_t total = 1 + varint_len + rem_len;
    if (size < total) throw TruncatedPacket("declared length exceeds input");
    Reader r(data + 1 + varint_len, rem_len);

    auto require_flags = [&](std::uint8_t expected) {
        if (flags != expected) throw MalformedPacket("reserved flag bits set");
    };
    auto require_empty_body = [&] {
        if (rem_len != 0) throw MalformedPacket("unexpected payload");
    };
    auto finish = [&](MqttPacket p) -> std::pair<MqttPacket, std::size_t> {
        if (r.remaining() != 0) throw MalformedPacket("trailing bytes in packet body");
        return {std::move(p), total};
    };

    switch (static_cast<PacketType>(type)) {
        case PacketType::Connect: {
            require_flags(0);
            std::string proto = r.utf8_string();
            std::uint8_t level = r.u8();
            if (proto != "MQTT" || level != 4)
                throw MalformedPacket("not an MQTT 3.1.1 CONNECT");
            std::uint8_t connect_flags = r.u8();
            // will / username / password payloads are not modeled
            if (connect_flags & 0b11111101u)
                throw MalformedPacket("unsupported CONNECT flags");
            Connect c;
            c.clean_session = (connect_flags & 0x02) != 0;
            c.keep_alive = r.u16();
            c.client_id = r.utf8_string();
            return finish(std::move(c));
        }
        case PacketType::Connack: {
            require_flags(0);
            std::uint8_t ack_flags = r.u8();
            if (ack_flags & 0xFE) throw MalformedPacket("bad CONNACK ack flags");
            Connack c;
            c.session_present = (ack_flags & 1) != 0;
            c.return_code = r.u8();
            return finish(std::move(c));
        }
        case PacketType::Publish: {
            Publish p;
            p.dup = (flags & 0x08) != 0;
            p.qos = (flags >> 1) & 0x03;
            p.retain = (flags & 0x01) != 0;
            if (p.qos > 2) throw MalformedPacket("PUBLISH qos 3 is forbidden");
            p.topic = r.utf8_string();
            if (p.topic.empty()) throw MalformedPacket("empty PUBLISH topic");
            if (has_wildcard(p.topic))
                throw MalformedPacket("wildcard in PUBLISH topic");
            if (p.qos > 0) p.packet_id = r.u16();
            p.payload = r.bytes(r.remaining());
            return finish(std::move(p));
        }
        case PacketType::Puback: {
            require_flags(0);
            return finish(Puback{r.u16()});
        }
        case PacketType::Pubrec: {
            require_flags(0);
            return finish(Pubrec{r.u16()});
        }
        case PacketType::Pubrel: {
            require_flags(0x02);
            return finish(Pubrel{r.u16()});
        }
        case PacketType::Pubcomp: {
            require_flags(0);
            return finish(Pubcomp{r.u16()});
        }
        case PacketType::Subscribe: {
            require_flags(0x02);
            Subscribe s;
            s.packet_id = r.u16();
            while (r.remaining() > 0) {
                std::string filter = r.utf8_string();
                std::uint8_t qos = r.u8();
                if (qos > 2) throw MalformedPacket("SUBSCRIBE requested qos > 2");
                s.filters.emplace_back(std::move(filter), qos);
            }
            if (s.filters.empty()) throw MalformedPacket("SUBSCRIBE without filters");
            return finish(std::move(s));
        }
        case PacketType::Suback: {
            require_flags(0);
            Suback s;
            s.packet_id = r.u16();
            while (r.remaining() > 0) {
                std::uint8_t code = r.u8();
                if (code > 2 && code != 0x80) throw MalformedPacket("bad SUBACK return code");
                s.granted.push_back(code);
            }
            if (s.granted.empty()) throw MalformedPacket("SUBACK without return codes");
            return finish(std::move(s));
        }
        case PacketType::Unsubscribe: {
            require_flags(0x02);
            Unsubscribe u;
            u.packet_id = r.u16();
            while (r.remaining() > 0) u.filters.push_back(r.utf8_string());
            if (u.filters.empty()) throw MalformedPacket("UNSUBSCRIBE without filters");
            return finish(std::move(u));
        }
        case PacketType::Unsuback: {
            require_flags(0);
            return finish(Unsuback{r.u16()});
        }
        case PacketType::Pingreq: {
            require_flags(0);
            require_empty_body();
            return finish(Pingreq{});
        }
        case PacketType::Pingresp: {
            require_flags(0);
            require_empty_body();
            return finish(Pingresp{});
        }
        case PacketType::Disconnect: {
            require_flags(0);
            require_empty_body();
            return finish(Disconnect{});
        }
    }
    throw UnknownPacketType("unreachable");
}

std::pair<MqttPacket, std::size_t> parse_packet(const std::vector<std::uint8_t>& bytes) {
    return parse_packet(bytes.data(), bytes.size());
}

namespace {

struct EncodeVisitor {
    std::uint8_t first_byte = 0;
    std::vector<std::uint8_t> body;

    void operator()(const Connect& c) {
        first_byte = 0x10;
        put_string(body, "MQTT");
        body.push_back(4);
        body.push_back(c.clean_session ? 0x02 : 0x00);
        put_u16(body, c.keep_alive);
        put_string(body, c.client_id);
    }
    void operator()(const Connack& c) {
        first_byte = 0x20;
        body.push_back(c.session_present ? 1 : 0);
        body.push_back(c.return_code);
    }
    void operator()(const Publish& p) {
        if (p.qos > 2) throw MalformedPacket("PUBLISH qos > 2");
        if (has_wildcard(p.topic)) throw MalformedPacket("wildcard in PUBLISH topic");
        if ((p.qos > 0) != p.packet_id.has_value())
            throw MalformedPacket("packet_id must be present iff qos > 0");
        first_byte = static_cast<std::uint8_t>(
            0x30 | (p.dup ? 0x08 : 0) | (p.qos << 1) | (p.retain ? 0x01 : 0));
        put_string(body, p.topic);
        if (p.packet_id) put_u16(body, *p.packet_id);
        body.insert(body.end(), p.payload.begin(), p.payload.end());
    }
    void operator()(const Puback& p) {
        first_byte = 0x40;
        put_u16(body, p.packet_id);
    }
    void operator()(const Pubrec& p) {
        first_byte = 0x50;
        put_u16(body, p.packet_id);
    }
    void operator()(const Pubrel& p) {
        first_byte = 0x62;
        put_u16(body, p.packet_id);
    }
    void operator()(const Pubcomp& p) {
        first_byte = 0x70;
        put_u16(body, p.packet_id);
    }
    void operator()(const Subscribe& s) {
        first_byte = 0x82;
        put_u16(body, s.packet_id);
        for (const auto& [filter, qos] : s.filters) {
            put_string(body, filter);
            body.push_back(qos);
        }
    }
    void operator()(const Suback& s) {
        first_byte = 0x90;
        put_u16(body, s.packet_id);
        body.insert(body.end(), s.granted.begin(), s.granted.end());
    }
    void operator()(const Unsubscribe& u) {
        first_byte = 0xA2;
        put_u16(body, u.packet_id);
        for (const auto& f : u.filters) put_string(body, f);
    }
    void operator()(const Unsuback& u) {
        first_byte = 0xB0;
        put_u16(body, u.packet_id);
    }
    void operator()(const Pingreq&) { first_byte = 0xC0; }
    void operator()(const Pingresp&) { first_byte = 0xD0; }
    void operator()(const Disconnect&) { first_byte = 0xE0; }
};

}  // namespace

std::vector<std::uint8_t> encode_packet(const MqttPacket& packet) {
    EncodeVisitor v;
    std::visit(v, packet);
    if (v.body.size() > kMaxRemainingLength)
        throw OversizedPacket("remaining length exceeds 268435455");
    std::vector<std::uint8_t> out;
    out.reserve(v.body.size() + 5);
    out.push_back(v.first_byte);
    encode_remaining_length(static_cast<std::uint32_t>(v.body.size()), out);
    out.insert(out.end(), v.body.begin(), v.body.end());
    return out;
}

bool topic_matches(const std::string& filter, const std::string& topic) {
    validate_filter(filter);
    auto flv = split_levels(filter);
    auto tlv = split_levels(topic);
    std::size_t i = 0;
    for (; i < flv.size(); ++i) {
        if (flv[i] == "#") return true;  // matches the remaining levels, including none
        if (i >= tlv.size()) return false;
        if (flv[i] != "+" && flv[i] != tlv[i]) return false;
    }
    return i == tlv.size();
}

}  // namespace mqttids::mqtt
