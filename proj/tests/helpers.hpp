#pragma once

// Shared test fixtures: random-instance generators and independently coded
// reference implementations used as oracles by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mqttids/frame_table.hpp"
#include "mqttids/gbdt.hpp"
#include "mqttids/metrics.hpp"
#include "mqttids/mqtt_codec.hpp"

namespace testing_helpers {

// --------------------------------------------------------------------------
// Random MQTT packets covering every type.

inline std::string random_topic(std::mt19937_64& rng, bool allow_wildcards) {
    static const char* const words[] = {"factory", "sensors", "temp", "door",
                                        "line1",   "a",       "b",    "state"};
    std::size_t levels = 1 + rng() % 4;
    std::string out;
    for (std::size_t i = 0; i < levels; ++i) {
        if (i) out += '/';
        if (allow_wildcards && i + 1 == levels && rng() % 5 == 0) {
            out += (rng() % 2) ? "#" : "+";
        } else if (allow_wildcards && rng() % 7 == 0) {
            out += '+';
        } else {
            out += words[rng() % 8];
        }
    }
    return out;
}

inline mqttids::mqtt::MqttPacket random_packet(std::mt19937_64& rng) {
    using namespace mqttids::mqtt;
    auto pid = [&] { return static_cast<std::uint16_t>(1 + rng() % 65535); };
    switch (rng() % 14) {
        case 0: {
            Connect c;
            c.client_id = "client-" + std::to_string(rng() % 1000);
            c.keep_alive = static_cast<std::uint16_t>(rng() % 600);
            c.clean_session = rng() % 2 == 0;
            return c;
        }
        case 1: {
            Connack c;
            c.return_code = static_cast<std::uint8_t>(rng() % 6);
            c.session_present = rng() % 2 == 0;
            return c;
        }
        case 2: {
            Publish p;
            p.topic = random_topic(rng, false);
            p.qos = static_cast<std::uint8_t>(rng() % 3);
            p.retain = rng() % 2 == 0;
            p.dup = p.qos > 0 && rng() % 4 == 0;
            if (p.qos > 0) p.packet_id = pid();
            std::size_t len = rng() % 64;
            for (std::size_t i = 0; i < len; ++i)
                p.payload += static_cast<char>(rng() % 256);
            return p;
        }
        case 3: return Puback{pid()};
        case 4: return Pubrec{pid()};
        case 5: return Pubrel{pid()};
        case 6: return Pubcomp{pid()};
        case 7: {
            Subscribe s;
            s.packet_id = pid();
            std::size_t nf = 1 + rng() % 3;
            for (std::size_t i = 0; i < nf; ++i)
                s.filters.emplace_back(random_topic(rng, true),
                                       static_cast<std::uint8_t>(rng() % 3));
            return s;
        }
        case 8: {
            Suback s;
            s.packet_id = pid();
            std::size_t ng = 1 + rng() % 3;
            for (std::size_t i = 0; i < ng; ++i)
                s.granted.push_back(rng() % 5 == 0 ? 0x80
                                                   : static_cast<std::uint8_t>(rng() % 3));
            return s;
        }
        case 9: {
            Unsubscribe u;
            u.packet_id = pid();
            std::size_t nf = 1 + rng() % 3;
            for (std::size_t i = 0; i < nf; ++i) u.filters.push_back(random_topic(rng, true));
            return u;
        }
        case 10: return Unsuback{pid()};
        case 11: return Pingreq{};
        case 12: return Pingresp{};
        default: return Disconnect{};
    }
}

// --------------------------------------------------------------------------
// Brute-force metric references, written directly from the formulas.

inline std::size_t ref_argmax(const std::vector<double>& row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

struct RefBatch {
    std::vector<std::vector<double>> probs;
    std::vector<std::vector<double>> truth;
};

inline RefBatch to_ref(const mqttids::metrics::PredictionBatch& b) {
    RefBatch r;
    for (std::size_t i = 0; i < b.n; ++i) {
        std::vector<double> p(b.k), t(b.k);
        for (std::size_t j = 0; j < b.k; ++j) {
            p[j] = b.prob(i, j);
            t[j] = b.truth(i, j);
        }
        r.probs.push_back(p);
        r.truth.push_back(t);
    }
    return r;
}

inline double ref_mlogloss(const RefBatch& b) {
    double total = 0;
    for (std::size_t i = 0; i < b.probs.size(); ++i)
        for (std::size_t j = 0; j < b.probs[i].size(); ++j)
            if (b.truth[i][j] > 0.5) {
                double p = b.probs[i][j];
                if (p < 1e-15) p = 1e-15;
                if (p > 1.0 - 1e-15) p = 1.0 - 1e-15;
                total += -std::log(p) * b.truth[i][j];
            }
    return b.probs.empty() ? 0.0 : total / static_cast<double>(b.probs.size());
}

inline double ref_merror(const RefBatch& b) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < b.probs.size(); ++i)
        if (ref_argmax(b.probs[i]) != ref_argmax(b.truth[i])) ++wrong;
    return b.probs.empty() ? 0.0
                           : static_cast<double>(wrong) /
                                 static_cast<double>(b.probs.size());
}

inline double ref_accuracy(const RefBatch& b) { return 1.0 - ref_merror(b); }

inline double ref_fbeta(const RefBatch& b, double beta, bool macro) {
    if (b.probs.empty()) return 0.0;
    std::size_t k = b.probs[0].size();
    std::vector<double> tp(k, 0), fp(k, 0), fn(k, 0);
    for (std::size_t i = 0; i < b.probs.size(); ++i) {
        std::size_t pred = ref_argmax(b.probs[i]);
        std::size_t act = ref_argmax(b.truth[i]);
        if (pred == act) {
            tp[pred] += 1;
        } else {
            fp[pred] += 1;
            fn[act] += 1;
        }
    }
    double b2 = beta * beta;
    auto f_of = [&](double tpv, double fpv, double fnv) {
        double precision = tpv + fpv > 0 ? tpv / (tpv + fpv) : 0.0;
        double recall = tpv + fnv > 0 ? tpv / (tpv + fnv) : 0.0;
        double denom = b2 * precision + recall;
        return denom > 0 ? (1 + b2) * precision * recall / denom : 0.0;
    };
    if (macro) {
        double sum = 0;
        for (std::size_t c = 0; c < k; ++c) sum += f_of(tp[c], fp[c], fn[c]);
        return sum / static_cast<double>(k);
    }
    double stp = 0, sfp = 0, sfn = 0;
    for (std::size_t c = 0; c < k; ++c) {
        stp += tp[c];
        sfp += fp[c];
        sfn += fn[c];
    }
    return f_of(stp, sfp, sfn);
}

inline mqttids::metrics::PredictionBatch random_batch(std::mt19937_64& rng,
                                                      std::size_t max_n = 64,
                                                      std::size_t k = 4) {
    mqttids::metrics::PredictionBatch batch;
    batch.n = 1 + rng() % max_n;
    batch.k = k;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < batch.n; ++i) {
        std::vector<double> p(k);
        double sum = 0;
        for (auto& v : p) {
            v = unit(rng) + 1e-6;
            sum += v;
        }
        for (auto& v : p) batch.probs.push_back(v / sum);
        std::size_t truth = rng() % k;
        for (std::size_t j = 0; j < k; ++j)
            batch.truth_onehot.push_back(j == truth ? 1.0 : 0.0);
    }
    return batch;
}

// --------------------------------------------------------------------------
// Exact-split reference GBDT (no histograms): enumerates every distinct
// feature value as a threshold. Only valid for subsample = colsample = 1.

struct RefNode {
    int feature = -1;
    double threshold = 0;
    int left = -1;
    int right = -1;
    double weight = 0;
};
struct RefTree {
    std::vector<RefNode> nodes;

    double predict(const std::vector<double>& row) const {
        int id = 0;
        while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
            const RefNode& n = nodes[static_cast<std::size_t>(id)];
            id = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(id)].weight;
    }
};

namespace detail {

inline void ref_softmax(const double* margins, double* probs, std::size_t k) {
    double m = margins[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, margins[j]);
    double sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
        probs[j] = std::exp(margins[j] - m);
        sum += probs[j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[j] /= sum;
}

struct RefBuilder {
    const std::vector<std::vector<double>>& rows;
    const std::vector<double>& grad;
    const std::vector<double>& hess;
    const mqttids::gbdt::GbdtParams& params;
    RefTree tree;

    int build(const std::vector<std::size_t>& idx, std::size_t depth, double g_total,
              double h_total) {
        int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        double parent_score = g_total * g_total / (h_total + params.lambda);
        double best_gain = 0, best_threshold = 0;
        int best_feature = -1;

        std::size_t n_features = rows.empty() ? 0 : rows[0].size();
        if (depth < params.max_depth && idx.size() >= 2) {
            for (std::size_t f = 0; f < n_features; ++f) {
                // per-distinct-value sums, accumulated in row order
                std::map<double, std::pair<double, double>> groups;
                for (auto r : idx) groups.try_emplace(rows[r][f], 0.0, 0.0);
                for (auto r : idx) {
                    auto& gh = groups[rows[r][f]];
                    gh.first += grad[r];
                    gh.second += hess[r];
                }
                double gl = 0, hl = 0;
                for (const auto& [value, gh] : groups) {
                    gl += gh.first;
                    hl += gh.second;
                    double gr = g_total - gl, hr = h_total - hl;
                    if (hl < params.min_child_weight || hr < params.min_child_weight)
                        continue;
                    double gain = 0.5 * (gl * gl / (hl + params.lambda) +
                                         gr * gr / (hr + params.lambda) - parent_score) -
                                  params.gamma;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feature = static_cast<int>(f);
                        best_threshold = value;
                    }
                }
            }
        }

        if (best_feature < 0) {
            tree.nodes[static_cast<std::size_t>(node_id)].weight =
                -g_total / (h_total + params.lambda);
            return node_id;
        }

        std::vector<std::size_t> left_idx, right_idx;
        double gl = 0, hl = 0;
        for (auto r : idx) {
            if (rows[r][static_cast<std::size_t>(best_feature)] <= best_threshold) {
                left_idx.push_back(r);
                gl += grad[r];
                hl += hess[r];
            } else {
                right_idx.push_back(r);
            }
        }
        double gr = 0, hr = 0;
        for (auto r : right_idx) {
            gr += grad[r];
            hr += hess[r];
        }

        int left_id = build(left_idx, depth + 1, gl, hl);
        int right_id = build(right_idx, depth + 1, gr, hr);
        RefNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = left_id;
        node.right = right_id;
        return node_id;
    }
};

}  // namespace detail

inline std::vector<std::vector<RefTree>> train_exact_reference(
    const mqttids::data::FrameTable& table, const mqttids::gbdt::GbdtParams& params) {
    const std::size_t n = table.n_rows();
    const std::size_t k = std::max<std::size_t>(table.label_names.size(), 2);
    std::vector<double> margins(n * k, 0.0), grad(n), hess(n), probs(k);

    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;

    std::vector<std::vector<RefTree>> rounds;
    for (std::size_t round = 0; round < params.n_rounds; ++round) {
        rounds.emplace_back();
        for (std::size_t cls = 0; cls < k; ++cls) {
            for (std::size_t r = 0; r < n; ++r) {
                detail::ref_softmax(&margins[r * k], probs.data(), k);
                double y = static_cast<std::size_t>(table.labels[r]) == cls ? 1.0 : 0.0;
                grad[r] = probs[cls] - y;
                hess[r] = probs[cls] * (1.0 - probs[cls]);
            }
            double g_total = 0, h_total = 0;
            for (auto r : all) {
                g_total += grad[r];
                h_total += hess[r];
            }
            detail::RefBuilder builder{table.rows, grad, hess, params, {}};
            builder.build(all, 0, g_total, h_total);
            RefTree tree = std::move(builder.tree);
            for (std::size_t r = 0; r < n; ++r)
                margins[r * k + cls] += params.eta * tree.predict(table.rows[r]);
            rounds.back().push_back(std::move(tree));
        }
    }
    return rounds;
}

inline bool trees_match(const mqttids::gbdt::Tree& got, const RefTree& want) {
    if (got.nodes.size() != want.nodes.size()) return false;
    for (std::size_t i = 0; i < got.nodes.size(); ++i) {
        const auto& g = got.nodes[i];
        const auto& w = want.nodes[i];
        if (g.feature != w.feature || g.left != w.left || g.right != w.right) return false;
        if (g.feature >= 0 && g.threshold != w.threshold) return false;
        if (g.feature < 0 && std::abs(g.weight - w.weight) > 1e-12) return false;
    }
    return true;
}

// --------------------------------------------------------------------------
// Small synthetic tables.

inline mqttids::data::FrameTable make_table(
    const std::vector<std::string>& feature_names,
    const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
    const std::vector<std::string>& label_names) {
    mqttids::data::FrameTable t;
    t.schema.names = feature_names;
    t.schema.kinds.assign(feature_names.size(), mqttids::data::FeatureKind::Numeric);
    t.rows = rows;
    t.labels = labels;
    t.label_names = label_names;
    return t;
}

inline mqttids::data::FrameTable random_table(std::mt19937_64& rng, std::size_t n,
                                              std::size_t f, std::size_t k,
                                              std::size_t distinct_values) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < f; ++i) names.push_back("f" + std::to_string(i));
    std::vector<std::string> label_names;
    for (std::size_t i = 0; i < k; ++i) label_names.push_back("c" + std::to_string(i));

    std::vector<std::vector<double>> rows(n, std::vector<double>(f));
    std::vector<int> labels(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < f; ++c)
            rows[r][c] = static_cast<double>(rng() % distinct_values) * 0.37 - 1.1;
        // labels correlated with the first feature so trees have signal
        labels[r] = static_cast<int>(
            (static_cast<std::size_t>((rows[r][0] + 1.1) / 0.37 + 0.5) + rng() % 2) % k);
    }
    return make_table(names, rows, labels, label_names);
}

}  // namespace testing_helpers
