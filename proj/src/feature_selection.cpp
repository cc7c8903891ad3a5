#include "mqttids/feature_selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mqttids/errors.hpp"
#include "mqttids/gbdt.hpp"
#include "mqttids/metrics.hpp"
#include "mqttids/util.hpp"

namespace mqttids::fsel {

double mutual_information(const std::vector<int>& x, const std::vector<int>& y) {
    if (x.size() != y.size()) throw LengthMismatch("columns differ in length");
    if (x.empty()) return 0.0;
    const double n = static_cast<double>(x.size());

    std::map<int, std::size_t> px, py;
    std::map<std::pair<int, int>, std::size_t> pxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        px[x[i]]++;
        py[y[i]]++;
        pxy[{x[i], y[i]}]++;
    }

    // Summing the sorted terms makes I(x, y) == I(y, x) bit-exact.
    std::vector<double> terms;
    terms.reserve(pxy.size());
    for (const auto& [key, count] : pxy) {
        double p_ab = static_cast<double>(count) / n;
        double p_a = static_cast<double>(px.at(key.first)) / n;
        double p_b = static_cast<double>(py.at(key.second)) / n;
        terms.push_back(p_ab * std::log(p_ab / (p_a * p_b)));
    }
    std::sort(terms.begin(), terms.end());
    double sum = 0;
    for (double t : terms) sum += t;
    return std::max(sum, 0.0);
}

std::vector<int> discretize(const std::vector<double>& column, std::size_t bins) {
    if (bins < 2) throw Error("bins must be >= 2");
    std::vector<int> out(column.size(), 0);
    if (column.empty()) return out;
    double lo = column[0], hi = column[0];
    for (double v : column) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) return out;  // constant column, single bin 0
    double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i < column.size(); ++i) {
        auto b = static_cast<int>(std::floor((column[i] - lo) / width));
        out[i] = std::clamp(b, 0, static_cast<int>(bins) - 1);
    }
    return out;
}

namespace {

std::vector<std::vector<int>> discretize_table(const data::FrameTable& table,
                                               std::size_t bins) {
    std::size_t f = table.n_features();
    std::vector<std::vector<int>> cols(f);
    for (std::size_t c = 0; c < f; ++c) {
        std::vector<double> col(table.n_rows());
        for (std::size_t r = 0; r < table.n_rows(); ++r) col[r] = table.rows[r][c];
        cols[c] = discretize(col, bins);
    }
    return cols;
}

}  // namespace

SelectionResult mrmr_select(const data::FrameTable& table, std::size_t k, std::size_t bins) {
    std::size_t f = table.n_features();
    if (k < 1 || k > f) throw KOutOfRange("k must lie in 1.." + std::to_string(f));

    auto cols = discretize_table(table, bins);
    std::vector<double> relevance(f);
    for (std::size_t c = 0; c < f; ++c)
        relevance[c] = mutual_information(cols[c], table.labels);

    // pairwise redundancies on demand
    std::vector<std::vector<double>> redundancy(f, std::vector<double>(f, -1.0));
    auto red = [&](std::size_t a, std::size_t b) {
        if (redundancy[a][b] < 0) {
            double v = mutual_information(cols[a], cols[b]);
            redundancy[a][b] = redundancy[b][a] = v;
        }
        return redundancy[a][b];
    };

    SelectionResult result;
    std::vector<std::size_t> selected_idx;
    std::vector<bool> taken(f, false);
    while (selected_idx.size() < k) {
        std::size_t best = f;
        double best_score = 0;
        for (std::size_t c = 0; c < f; ++c) {
            if (taken[c]) continue;
            double score = relevance[c];
            if (!selected_idx.empty()) {
                double mean_red = 0;
                for (auto s : selected_idx) mean_red += red(c, s);
                score -= mean_red / static_cast<double>(selected_idx.size());
            }
            if (best == f || score > best_score) {
                best = c;
                best_score = score;
            }
        }
        taken[best] = true;
        selected_idx.push_back(best);
        result.selected.push_back(table.schema.names[best]);
        result.scores.push_back(best_score);
    }
    return result;
}

SelectionResult wrapper_evaluate(const data::FrameTable& table,
                                 const std::vector<std::vector<std::string>>& subsets,
                                 std::size_t folds) {
    if (subsets.empty()) throw EmptySubset("no subsets to evaluate");
    for (const auto& s : subsets)
        if (s.empty()) throw EmptySubset("empty feature subset");

    auto fold_of = gbdt::stratified_folds(table.labels, folds);

    std::vector<double> accuracies;
    for (const auto& subset : subsets) {
        data::FrameTable restricted = data::select_columns(table, subset);
        double sum_acc = 0;
        for (std::size_t f = 0; f < folds; ++f) {
            data::FrameTable train_part, valid_part;
            train_part.schema = valid_part.schema = restricted.schema;
            train_part.label_names = valid_part.label_names = restricted.label_names;
            for (std::size_t r = 0; r < restricted.n_rows(); ++r) {
                auto& part = fold_of[r] == f ? valid_part : train_part;
                part.rows.push_back(restricted.rows[r]);
                part.labels.push_back(restricted.labels[r]);
            }
            gbdt::GbdtParams params;  // shallow wrapper model
            params.max_depth = 3;
            params.n_rounds = 20;
            gbdt::Booster booster = gbdt::train(train_part, nullptr, params);

            auto probs = booster.predict_proba(valid_part.rows);
            std::size_t correct = 0;
            for (std::size_t r = 0; r < valid_part.n_rows(); ++r) {
                auto pred = metrics::argmax_row(&probs[r * booster.n_classes],
                                                booster.n_classes);
                if (pred == static_cast<std::size_t>(valid_part.labels[r])) ++correct;
            }
            sum_acc += valid_part.n_rows()
                           ? static_cast<double>(correct) /
                                 static_cast<double>(valid_part.n_rows())
                           : 0.0;
        }
        accuracies.push_back(sum_acc / static_cast<double>(folds));
    }

    std::vector<std::size_t> order(subsets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (accuracies[a] != accuracies[b]) return accuracies[a] > accuracies[b];
        return subsets[a].size() < subsets[b].size();
    });

    SelectionResult result;
    for (auto i : order) {
        result.subsets.push_back(subsets[i]);
        result.wrapper_cv_accuracy.push_back(accuracies[i]);
    }
    result.selected = result.subsets.front();
    return result;
}

std::string fim_report_csv(const data::FrameTable& table, const SelectionResult& result,
                           std::size_t bins) {
    auto cols = discretize_table(table, bins);
    std::ostringstream out;
    out << "feature,relevance_nats,selected,greedy_step_score\n";
    for (std::size_t c = 0; c < table.n_features(); ++c) {
        const std::string& name = table.schema.names[c];
        double relevance = mutual_information(cols[c], table.labels);
        auto it = std::find(result.selected.begin(), result.selected.end(), name);
        bool selected = it != result.selected.end();
        out << csv_escape(name) << ',' << format_double(relevance) << ','
            << (selected ? 1 : 0) << ',';
        if (selected) {
            auto step = static_cast<std::size_t>(it - result.selected.begin());
            if (step < result.scores.size()) out << format_double(result.scores[step]);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace mqttids::fsel
