#include "mqttids/traffic_lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "mqttids/errors.hpp"

namespace mqttids::sim {

namespace {

constexpr std::size_t kLinkOverheadBytes = 66;  // eth + ip + tcp headers
constexpr double kKeepAliveSeconds = 60.0;
constexpr double kAttackEndMarginS = 0.005;  // replies stay inside the window

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double exp_gap(std::mt19937_64& rng, double rate_hz) {
    double u = uniform01(rng);
    return -std::log1p(-u) / rate_hz;
}

double gaussian(std::mt19937_64& rng) {
    double u1 = std::max(uniform01(rng), 1e-12);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::string format_reading(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", value);
    return buf;
}

std::int64_t to_us(double seconds) {
    return static_cast<std::int64_t>(std::llround(seconds * 1e6));
}

struct Emitter {
    std::vector<FrameRecord> frames;

    void mqtt_frame(double t, std::string src, std::string dst,
                    mqtt::MqttPacket packet, Label label) {
        FrameRecord f;
        f.timestamp_us = to_us(t);
        f.src = std::move(src);
        f.dst = std::move(dst);
        f.tcp_len = mqtt::encode_packet(packet).size() + kLinkOverheadBytes;
        f.packet = std::move(packet);
        f.label = label;
        frames.push_back(std::move(f));
    }

    void tcp_noise_frame(double t, std::string src, std::string dst) {
        FrameRecord f;
        f.timestamp_us = to_us(t);
        f.src = std::move(src);
        f.dst = std::move(dst);
        f.tcp_len = kLinkOverheadBytes;
        f.label = Label::Normal;
        frames.push_back(std::move(f));
    }
};

void validate(const ScenarioConfig& c) {
    if (c.sensors < 1) throw InvalidScenario("sensors must be >= 1");
    if (c.duration_s <= 0) throw InvalidScenario("duration must be positive");
    if (c.publish_rate_hz <= 0) throw InvalidScenario("publish_rate must be positive");
    if (!(c.window_start_s >= 0 && c.window_start_s < c.window_end_s &&
          c.window_end_s <= c.duration_s))
        throw InvalidScenario("attack window must satisfy 0 <= start < end <= duration");
    if (const auto* dos = std::get_if<DosAttack>(&c.attack)) {
        if (dos->msg_rate_hz <= c.publish_rate_hz ||
            dos->new_connections_rate_hz <= c.publish_rate_hz)
            throw InvalidScenario("DoS rates must exceed the benign publish rate");
    }
    if (const auto* mitm = std::get_if<MitmAttack>(&c.attack)) {
        if (mitm->target_sensor >= c.sensors)
            throw InvalidScenario("MitM target sensor out of range");
    }
}

}  // namespace

const char* label_name(Label l) {
    switch (l) {
        case Label::Normal: return "normal";
        case Label::Dos: return "dos";
        case Label::Intrusion: return "intrusion";
        case Label::Mitm: return "mitm";
    }
    return "normal";
}

std::optional<Label> label_from_name(const std::string& name) {
    if (name == "normal") return Label::Normal;
    if (name == "dos") return Label::Dos;
    if (name == "intrusion") return Label::Intrusion;
    if (name == "mitm") return Label::Mitm;
    return std::nullopt;
}

std::vector<FrameRecord> run_scenario(const ScenarioConfig& config) {
    validate(config);
    Emitter em;

    const std::string broker = "broker";
    const std::string monitor = "monitor";
    auto sensor_name = [](std::size_t i) { return "sensor" + std::to_string(i); };

    // Connection preamble: the monitor subscribes to the whole plant namespace
    // at QoS 1, so broker-forwarded benign copies keep QoS 1.
    em.mqtt_frame(0.0010, monitor, broker, mqtt::Connect{"monitor", 60, true}, Label::Normal);
    em.mqtt_frame(0.00125, broker, monitor, mqtt::Connack{0, false}, Label::Normal);
    em.mqtt_frame(0.0015, monitor, broker,
                  mqtt::Subscribe{1, {{"factory/#", 1}}}, Label::Normal);
    em.mqtt_frame(0.00175, broker, monitor, mqtt::Suback{1, {1}}, Label::Normal);
    for (std::size_t i = 0; i < config.sensors; ++i) {
        double t = 0.002 + 0.0005 * static_cast<double>(i);
        em.mqtt_frame(t, sensor_name(i), broker,
                      mqtt::Connect{sensor_name(i), 60, true}, Label::Normal);
        em.mqtt_frame(t + 0.00025, broker, sensor_name(i), mqtt::Connack{0, false},
                      Label::Normal);
    }

    const auto* mitm = std::get_if<MitmAttack>(&config.attack);
    const auto* intrusion = std::get_if<IntrusionAttack>(&config.attack);
    const auto* dos = std::get_if<DosAttack>(&config.attack);
    const double w_start = config.window_start_s;
    const double w_end = config.window_end_s - kAttackEndMarginS;

    std::string intruder = intrusion ? intrusion->attacker_id : "";
    if (intrusion) {
        em.mqtt_frame(w_start, intruder, broker, mqtt::Connect{intruder, 60, true},
                      Label::Intrusion);
        em.mqtt_frame(w_start + 0.00025, broker, intruder, mqtt::Connack{0, false},
                      Label::Intrusion);
        em.mqtt_frame(w_start + 0.0005, intruder, broker,
                      mqtt::Subscribe{1, {{"#", 0}}}, Label::Intrusion);
        em.mqtt_frame(w_start + 0.00075, broker, intruder, mqtt::Suback{1, {0}},
                      Label::Intrusion);
    }

    // Sensor readings with exponential inter-arrival jitter.
    std::uint16_t fwd_packet_id = 0;
    for (std::size_t i = 0; i < config.sensors; ++i) {
        std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ull + 0x1000 + i);
        double base = 20.0 + 1.5 * static_cast<double>(i);
        std::string topic = "factory/" + sensor_name(i) + "/temp";
        std::uint16_t packet_id = 0;
        double t = 0.01 + exp_gap(rng, config.publish_rate_hz);
        while (t < config.duration_s - 0.01) {
            double reading = base + 1.5 * gaussian(rng);
            bool tampered = mitm && mitm->target_sensor == i && t >= w_start && t < w_end;
            if (tampered) reading += mitm->tamper;
            packet_id = static_cast<std::uint16_t>(packet_id == 0xFFFF ? 1 : packet_id + 1);
            Label pub_label = tampered ? Label::Mitm : Label::Normal;

            mqtt::Publish pub;
            pub.topic = topic;
            pub.qos = 1;
            pub.packet_id = packet_id;
            pub.payload = format_reading(reading);
            em.mqtt_frame(t, sensor_name(i), broker, pub, pub_label);
            em.mqtt_frame(t + 0.00025, broker, sensor_name(i), mqtt::Puback{packet_id},
                          Label::Normal);

            // Broker-forwarded copy to the monitor; a tampered reading keeps
            // its mitm label on both sides of the interception.
            fwd_packet_id = static_cast<std::uint16_t>(
                fwd_packet_id == 0xFFFF ? 1 : fwd_packet_id + 1);
            mqtt::Publish fwd = pub;
            fwd.packet_id = fwd_packet_id;
            em.mqtt_frame(t + 0.0005, broker, monitor, fwd, pub_label);
            em.mqtt_frame(t + 0.00075, monitor, broker, mqtt::Puback{fwd_packet_id},
                          Label::Normal);

            // The wildcard subscriber receives everything at its granted QoS 0.
            if (intrusion && t >= w_start + 0.001 && t < w_end) {
                mqtt::Publish spy = pub;
                spy.qos = 0;
                spy.packet_id.reset();
                em.mqtt_frame(t + 0.001, broker, intruder, spy, Label::Intrusion);
            }

            t += exp_gap(rng, config.publish_rate_hz);
        }
    }

    // Keep-alive pings for every benign client.
    {
        std::vector<std::string> clients;
        clients.push_back(monitor);
        for (std::size_t i = 0; i < config.sensors; ++i) clients.push_back(sensor_name(i));
        for (std::size_t ci = 0; ci < clients.size(); ++ci) {
            for (double t = kKeepAliveSeconds + 0.001 * static_cast<double>(ci);
                 t < config.duration_s; t += kKeepAliveSeconds) {
                em.mqtt_frame(t, clients[ci], broker, mqtt::Pingreq{}, Label::Normal);
                em.mqtt_frame(t + 0.00025, broker, clients[ci], mqtt::Pingresp{},
                              Label::Normal);
            }
        }
    }

    if (dos) {
        // Connection storm, deterministic spacing.
        std::size_t n = 0;
        for (double t = w_start; t < w_end; t += 1.0 / dos->new_connections_rate_hz, ++n) {
            std::string cid = "malaria-" + std::to_string(n);
            em.mqtt_frame(t, cid, broker, mqtt::Connect{cid, 60, true}, Label::Dos);
            em.mqtt_frame(t + 0.00025, broker, cid, mqtt::Connack{0, false}, Label::Dos);
        }
        // Message flood at QoS 0, fixed payload.
        mqtt::Publish flood;
        flood.topic = "malaria/load";
        flood.qos = 0;
        flood.payload = "deadbeefdeadbeef";
        for (double t = w_start + 0.0001; t < w_end; t += 1.0 / dos->msg_rate_hz)
            em.mqtt_frame(t, "attacker", broker, flood, Label::Dos);
    }

    if (config.tcp_noise_rate_hz > 0) {
        std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ull + 0xBEEF);
        std::size_t k = 0;
        double t = exp_gap(rng, config.tcp_noise_rate_hz);
        while (t < config.duration_s) {
            em.tcp_noise_frame(t, sensor_name(k % config.sensors), broker);
            ++k;
            t += exp_gap(rng, config.tcp_noise_rate_hz);
        }
    }

    // Merge the independent streams into one monotone capture.
    std::stable_sort(em.frames.begin(), em.frames.end(),
                     [](const FrameRecord& a, const FrameRecord& b) {
                         return a.timestamp_us < b.timestamp_us;
                     });
    return em.frames;
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open scenario config " + path.string());

    ScenarioConfig cfg;
    std::string attack_kind = "none";
    double msg_rate = 0;
    std::size_t target_sensor = 0;
    bool window_given = false;

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw InvalidScenario("bad scenario line " + std::to_string(lineno));
            continue;
        }
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "duration_s") cfg.duration_s = std::stod(value);
            else if (key == "sensors") cfg.sensors = std::stoul(value);
            else if (key == "publish_rate_hz") cfg.publish_rate_hz = std::stod(value);
            else if (key == "attack.kind") attack_kind = value;
            else if (key == "attack.msg_rate_hz") msg_rate = std::stod(value);
            else if (key == "attack.target_sensor") target_sensor = std::stoul(value);
            else if (key == "attack.window_s") {
                auto comma = value.find(',');
                if (comma == std::string::npos)
                    throw InvalidScenario("attack.window_s wants \"start,end\"");
                cfg.window_start_s = std::stod(value.substr(0, comma));
                cfg.window_end_s = std::stod(value.substr(comma + 1));
                window_given = true;
            } else {
                throw InvalidScenario("unknown scenario key: " + key);
            }
        } catch (const std::invalid_argument&) {
            throw InvalidScenario("bad value for " + key + " at line " +
                                  std::to_string(lineno));
        } catch (const std::out_of_range&) {
            throw InvalidScenario("value out of range for " + key);
        }
    }

    if (!window_given) {
        cfg.window_start_s = 0;
        cfg.window_end_s = cfg.duration_s;
    }
    if (attack_kind == "none") {
        cfg.attack = NoAttack{};
    } else if (attack_kind == "dos") {
        DosAttack a;
        a.msg_rate_hz = msg_rate;
        a.new_connections_rate_hz = std::max(1.0, msg_rate / 20.0);
        cfg.attack = a;
    } else if (attack_kind == "mitm") {
        cfg.attack = MitmAttack{target_sensor, 30.0};
    } else if (attack_kind == "intrusion") {
        cfg.attack = IntrusionAttack{};
    } else {
        throw InvalidScenario("unknown attack.kind: " + attack_kind);
    }
    return cfg;
}

std::vector<NamedScenario> paper_shape_scenarios(std::uint64_t seed) {
    std::vector<NamedScenario> out;

    ScenarioConfig dos;
    dos.seed = seed;
    dos.duration_s = 570;
    dos.sensors = 5;
    dos.publish_rate_hz = 3;
    dos.attack = DosAttack{59.0, 3.5};
    dos.window_start_s = 60;
    dos.window_end_s = 540;
    dos.tcp_noise_rate_hz = 0.5;
    out.push_back({"dos", dos});

    ScenarioConfig mitm;
    mitm.seed = seed + 1;
    mitm.duration_s = 1240;
    mitm.sensors = 5;
    mitm.publish_rate_hz = 3;
    mitm.attack = MitmAttack{0, 30.0};
    mitm.window_start_s = 60;
    mitm.window_end_s = 510;
    mitm.tcp_noise_rate_hz = 0.5;
    out.push_back({"mitm", mitm});

    ScenarioConfig intr;
    intr.seed = seed + 2;
    intr.duration_s = 950;
    intr.sensors = 5;
    intr.publish_rate_hz = 3;
    intr.attack = IntrusionAttack{};
    intr.window_start_s = 60;
    intr.window_end_s = 147;
    intr.tcp_noise_rate_hz = 0.5;
    out.push_back({"intrusion", intr});

    return out;
}

}  // namespace mqttids::sim
