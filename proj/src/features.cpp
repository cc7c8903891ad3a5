#include "mqttids/features.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "mqttids/errors.hpp"
#include "mqttids/util.hpp"

namespace mqttids::data {

FeatureSchema default_schema() {
    FeatureSchema s;
    s.names = {"tcp_len",       "inter_arrival_delta", "direction",
               "mqtt_packet_type", "qos",              "retain_flag",
               "topic_length",  "topic_depth",         "payload_length",
               "payload_numeric_value", "msg_code"};
    s.kinds.assign(s.names.size(), FeatureKind::Numeric);
    s.kinds.back() = FeatureKind::Categorical;
    return s;
}

namespace {

std::size_t topic_depth(const std::string& topic) {
    if (topic.empty()) return 0;
    std::size_t depth = 1;
    for (char c : topic)
        if (c == '/') ++depth;
    return depth;
}

double parse_numeric_payload(const std::string& payload) {
    if (payload.empty()) return 0.0;
    char* end = nullptr;
    double v = std::strtod(payload.c_str(), &end);
    if (end != payload.c_str() + payload.size()) return 0.0;
    return v;
}

std::string format_seconds(std::int64_t us) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%06lld",
                  static_cast<long long>(us / 1000000),
                  static_cast<long long>(us % 1000000));
    return buf;
}

struct PacketFeatures {
    int type = 0;
    int qos = 0;
    int retain = 0;
    std::string topic;
    std::size_t payload_length = 0;
    double payload_value = 0;
    std::string msg;
};

PacketFeatures packet_features(const mqtt::MqttPacket& p) {
    PacketFeatures f;
    f.type = static_cast<int>(mqtt::packet_type(p));
    if (const auto* pub = std::get_if<mqtt::Publish>(&p)) {
        f.qos = pub->qos;
        f.retain = pub->retain ? 1 : 0;
        f.topic = pub->topic;
        f.payload_length = pub->payload.size();
        f.payload_value = parse_numeric_payload(pub->payload);
        f.msg = pub->payload;
    } else if (const auto* sub = std::get_if<mqtt::Subscribe>(&p)) {
        if (!sub->filters.empty()) {
            f.qos = sub->filters.front().second;
            f.topic = sub->filters.front().first;
        }
    } else if (const auto* unsub = std::get_if<mqtt::Unsubscribe>(&p)) {
        if (!unsub->filters.empty()) f.topic = unsub->filters.front();
    }
    return f;
}

}  // namespace

std::vector<FeatureRow> extract_features(const std::vector<sim::FrameRecord>& records,
                                         const FeatureSchema& schema) {
    if (schema != default_schema())
        throw SchemaMismatch("feature extraction implements the default 11-feature schema");

    std::vector<FeatureRow> out;
    out.reserve(records.size());
    std::int64_t prev_us = 0;
    bool first = true;
    for (const auto& rec : records) {
        PacketFeatures pf;
        if (rec.packet) pf = packet_features(*rec.packet);

        std::int64_t delta_us = first ? 0 : rec.timestamp_us - prev_us;
        prev_us = rec.timestamp_us;
        first = false;

        FeatureRow row;
        row.cells = {
            std::to_string(rec.tcp_len),
            format_seconds(delta_us),
            rec.src == "broker" ? "1" : "0",
            std::to_string(pf.type),
            std::to_string(pf.qos),
            std::to_string(pf.retain),
            std::to_string(pf.topic.size()),
            std::to_string(topic_depth(pf.topic)),
            std::to_string(pf.payload_length),
            format_double(pf.payload_value),
            pf.msg,
        };
        row.label = sim::label_name(rec.label);
        out.push_back(std::move(row));
    }
    return out;
}

std::size_t export_frames(const std::vector<sim::FrameRecord>& records,
                          const FeatureSchema& schema,
                          const std::filesystem::path& path) {
    auto rows = extract_features(records, schema);
    std::ostringstream out;
    for (std::size_t i = 0; i < schema.names.size(); ++i) {
        if (i) out << ',';
        out << csv_escape(schema.names[i]);
    }
    out << ",label\n";
    for (const auto& row : rows) {
        for (const auto& cell : row.cells) out << csv_escape(cell) << ',';
        out << row.label << '\n';
    }
    atomic_write_file(path, out.str());
    return rows.size();
}

}  // namespace mqttids::data
