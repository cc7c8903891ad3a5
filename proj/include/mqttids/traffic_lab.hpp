#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mqttids/mqtt_codec.hpp"

namespace mqttids::sim {

enum class Label : std::uint8_t { Normal = 0, Dos = 1, Intrusion = 2, Mitm = 3 };

const char* label_name(Label l);
std::optional<Label> label_from_name(const std::string& name);

struct NoAttack {};

struct DosAttack {
    double msg_rate_hz = 0;              // attacker publishes per second
    double new_connections_rate_hz = 0;  // attacker connects per second
};

struct MitmAttack {
    std::size_t target_sensor = 0;
    double tamper = 30.0;  // constant offset applied to intercepted readings
};

struct IntrusionAttack {
    std::string attacker_id = "intruder";
};

using AttackSpec = std::variant<NoAttack, DosAttack, MitmAttack, IntrusionAttack>;

struct ScenarioConfig {
    std::uint64_t seed = 1;
    double duration_s = 10;
    std::size_t sensors = 1;
    double publish_rate_hz = 1;          // per sensor
    AttackSpec attack = NoAttack{};
    double window_start_s = 0;
    double window_end_s = 10;
    double tcp_noise_rate_hz = 0;        // synthetic non-MQTT keep-alive rows
};

// One captured frame. TCP keep-alive noise rows carry no MQTT packet.
struct FrameRecord {
    std::int64_t timestamp_us = 0;
    std::string src;
    std::string dst;
    std::size_t tcp_len = 0;
    std::optional<mqtt::MqttPacket> packet;
    Label label = Label::Normal;
};

// Deterministic function of the config: same seed, same byte-identical frames.
// Throws InvalidScenario when the config violates its invariants.
std::vector<FrameRecord> run_scenario(const ScenarioConfig& config);

// Scenario file: key=value lines, '#' comments. Keys: seed, duration_s,
// sensors, publish_rate_hz, attack.kind, attack.msg_rate_hz,
// attack.target_sensor, attack.window_s ("start,end").
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

// The three desk-scale scenarios whose attack ratios follow the shape of the
// captured dataset: DoS ~48%, MitM ~3.5%, Intrusion ~2.3% attack frames.
struct NamedScenario {
    std::string name;  // "dos", "mitm", "intrusion"
    ScenarioConfig config;
};
std::vector<NamedScenario> paper_shape_scenarios(std::uint64_t seed = 7);

}  // namespace mqttids::sim
