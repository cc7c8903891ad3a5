#include "mqttids/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "mqttids/errors.hpp"
#include "mqttids/metrics.hpp"
#include "mqttids/util.hpp"

namespace mqttids::gbdt {

namespace {

constexpr double kClipEps = 1e-15;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Ascending cut values per feature. With <= n_bins distinct values every
// value gets its own bin, which is what makes the exact-split reference
// trainer reproduce the histogram trainer bit for bit.
std::vector<double> compute_cuts(const std::vector<std::vector<double>>& rows,
                                 std::size_t col, std::size_t n_bins,
                                 const std::string& name) {
    std::vector<double> values;
    values.reserve(rows.size());
    for (const auto& r : rows)
        if (std::isfinite(r[col])) values.push_back(r[col]);
    if (values.empty()) throw DegenerateData("feature " + name + " has no finite values");
    std::sort(values.begin(), values.end());

    std::vector<double> distinct;
    for (double v : values)
        if (distinct.empty() || v != distinct.back()) distinct.push_back(v);

    if (distinct.size() <= n_bins) return distinct;

    // equal-frequency cuts
    std::vector<double> cuts;
    std::size_t n = values.size();
    for (std::size_t j = 1; j < n_bins; ++j) {
        double v = values[n * j / n_bins];
        if (cuts.empty() || v != cuts.back()) cuts.push_back(v);
    }
    if (cuts.empty() || cuts.back() != distinct.back()) cuts.push_back(distinct.back());
    return cuts;
}

// bin(v) = index of the first cut >= v; larger values take the overflow bin.
inline int bin_of(const std::vector<double>& cuts, double v) {
    return static_cast<int>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
}

struct GradHess {
    double g = 0;
    double h = 0;
};

struct TreeBuilder {
    const std::vector<std::vector<std::uint16_t>>& bins;  // [row][feature]
    const std::vector<std::vector<double>>& cuts;
    const std::vector<double>& grad;
    const std::vector<double>& hess;
    const GbdtParams& params;
    const std::vector<std::size_t>& features;  // colsampled, ascending

    Tree tree;

    int build(std::vector<std::size_t>& rows, std::size_t depth) {
        double g_total = 0, h_total = 0;
        for (auto r : rows) {
            g_total += grad[r];
            h_total += hess[r];
        }
        return build_node(rows, depth, g_total, h_total);
    }

    int build_node(std::vector<std::size_t>& rows, std::size_t depth, double g_total,
                   double h_total) {
        int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        double parent_score = g_total * g_total / (h_total + params.lambda);
        double best_gain = 0;
        int best_feature = -1, best_bin = -1;

        if (depth < params.max_depth && rows.size() >= 2) {
            for (std::size_t f : features) {
                std::size_t nb = cuts[f].size() + 1;
                std::vector<GradHess> hist(nb);
                for (auto r : rows) {
                    auto b = bins[r][f];
                    hist[b].g += grad[r];
                    hist[b].h += hess[r];
                }
                double gl = 0, hl = 0;
                for (std::size_t b = 0; b + 1 < nb; ++b) {
                    gl += hist[b].g;
                    hl += hist[b].h;
                    double gr = g_total - gl, hr = h_total - hl;
                    if (hl < params.min_child_weight || hr < params.min_child_weight)
                        continue;
                    double gain = 0.5 * (gl * gl / (hl + params.lambda) +
                                         gr * gr / (hr + params.lambda) - parent_score) -
                                  params.gamma;
                    if (gain > best_gain) {
                        best_gain = gain;
                        best_feature = static_cast<int>(f);
                        best_bin = static_cast<int>(b);
                    }
                }
            }
        }

        if (best_feature < 0) {
            tree.nodes[static_cast<std::size_t>(node_id)].weight =
                -g_total / (h_total + params.lambda);
            return node_id;
        }

        std::vector<std::size_t> left_rows, right_rows;
        double gl = 0, hl = 0;
        for (auto r : rows) {
            if (bins[r][static_cast<std::size_t>(best_feature)] <= best_bin) {
                left_rows.push_back(r);
                gl += grad[r];
                hl += hess[r];
            } else {
                right_rows.push_back(r);
            }
        }
        rows.clear();
        rows.shrink_to_fit();

        double gr = 0, hr = 0;
        {
            // recompute right side from its own rows to keep sums exact
            gr = 0;
            hr = 0;
            for (auto r : right_rows) {
                gr += grad[r];
                hr += hess[r];
            }
        }

        int left_id = build_node(left_rows, depth + 1, gl, hl);
        int right_id = build_node(right_rows, depth + 1, gr, hr);

        TreeNode& node = tree.nodes[static_cast<std::size_t>(node_id)];
        node.feature = best_feature;
        node.split_bin = best_bin;
        node.threshold = cuts[static_cast<std::size_t>(best_feature)]
                             [static_cast<std::size_t>(best_bin)];
        node.left = left_id;
        node.right = right_id;
        return node_id;
    }
};

int tree_leaf_for_bins(const Tree& tree, const std::vector<std::uint16_t>& row_bins) {
    int id = 0;
    while (!tree.nodes[static_cast<std::size_t>(id)].is_leaf()) {
        const TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
        id = row_bins[static_cast<std::size_t>(n.feature)] <= n.split_bin ? n.left : n.right;
    }
    return id;
}

void softmax_row(const double* margins, double* probs, std::size_t k) {
    double m = margins[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, margins[j]);
    double sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
        probs[j] = std::exp(margins[j] - m);
        sum += probs[j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[j] /= sum;
}

struct EvalState {
    std::size_t n = 0, k = 0;
    std::vector<double> margins;  // n*k
    const std::vector<int>* labels = nullptr;

    void metrics(double& mll, double& err) const {
        double loss = 0;
        std::size_t wrong = 0;
        std::vector<double> probs(k);
        for (std::size_t i = 0; i < n; ++i) {
            softmax_row(&margins[i * k], probs.data(), k);
            auto y = static_cast<std::size_t>((*labels)[i]);
            loss -= std::log(std::clamp(probs[y], kClipEps, 1.0 - kClipEps));
            std::size_t pred = metrics::argmax_row(probs.data(), k);
            if (pred != y) ++wrong;
        }
        mll = n ? loss / static_cast<double>(n) : 0;
        err = n ? static_cast<double>(wrong) / static_cast<double>(n) : 0;
    }
};

}  // namespace

void GbdtParams::validate() const {
    if (!(eta > 0 && eta <= 1)) throw Error("eta must lie in (0, 1]");
    if (!(subsample > 0 && subsample <= 1)) throw Error("subsample must lie in (0, 1]");
    if (!(colsample_bytree > 0 && colsample_bytree <= 1))
        throw Error("colsample_bytree must lie in (0, 1]");
    if (max_depth < 1) throw Error("max_depth must be >= 1");
    if (n_bins < 2) throw Error("n_bins must be >= 2");
}

double Tree::predict(const std::vector<double>& row) const {
    int id = 0;
    while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
        const TreeNode& n = nodes[static_cast<std::size_t>(id)];
        id = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(id)].weight;
}

Booster train(const data::FrameTable& train_table, const data::FrameTable* eval_table,
              const GbdtParams& params) {
    params.validate();
    const std::size_t n = train_table.n_rows();
    const std::size_t n_features = train_table.n_features();
    const std::size_t k = std::max<std::size_t>(train_table.label_names.size(), 2);
    if (n == 0) throw DegenerateData("empty training table");
    for (int label : train_table.labels)
        if (label < 0 || static_cast<std::size_t>(label) >= k)
            throw DegenerateData("label out of range");

    Booster booster;
    booster.params = params;
    booster.n_classes = k;
    booster.n_features = n_features;
    booster.feature_names = train_table.schema.names;
    booster.label_names = train_table.label_names;

    booster.bin_edges.resize(n_features);
    for (std::size_t f = 0; f < n_features; ++f)
        booster.bin_edges[f] =
            compute_cuts(train_table.rows, f, params.n_bins, train_table.schema.names[f]);

    // pre-binned train matrix
    std::vector<std::vector<std::uint16_t>> bins(n, std::vector<std::uint16_t>(n_features));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t f = 0; f < n_features; ++f)
            bins[r][f] = static_cast<std::uint16_t>(
                bin_of(booster.bin_edges[f], train_table.rows[r][f]));

    EvalState train_state{n, k, std::vector<double>(n * k, 0.0), &train_table.labels};
    EvalState eval_state;
    if (eval_table) {
        if (eval_table->n_features() != n_features)
            throw SchemaMismatch("eval table feature count differs from train");
        eval_state.n = eval_table->n_rows();
        eval_state.k = k;
        eval_state.margins.assign(eval_state.n * k, 0.0);
        eval_state.labels = &eval_table->labels;
    }

    std::mt19937_64 rng(params.seed);
    std::vector<double> grad(n), hess(n), probs(k);

    std::vector<std::size_t> all_rows(n), all_features(n_features);
    for (std::size_t i = 0; i < n; ++i) all_rows[i] = i;
    for (std::size_t f = 0; f < n_features; ++f) all_features[f] = f;

    for (std::size_t round = 0; round < params.n_rounds; ++round) {
        // per-round row subsample, without replacement
        std::vector<std::size_t> sample_rows;
        if (params.subsample < 1.0) {
            auto take = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::floor(
                       params.subsample * static_cast<double>(n) + 1e-9)));
            std::vector<std::size_t> pool = all_rows;
            for (std::size_t i = 0; i < take; ++i) {
                std::size_t j = i + rng() % (pool.size() - i);
                std::swap(pool[i], pool[j]);
            }
            pool.resize(take);
            std::sort(pool.begin(), pool.end());
            sample_rows = std::move(pool);
        } else {
            sample_rows = all_rows;
        }

        booster.trees.emplace_back();
        for (std::size_t cls = 0; cls < k; ++cls) {
            for (std::size_t r = 0; r < n; ++r) {
                softmax_row(&train_state.margins[r * k], probs.data(), k);
                double y = static_cast<std::size_t>(train_table.labels[r]) == cls ? 1.0 : 0.0;
                grad[r] = probs[cls] - y;
                hess[r] = probs[cls] * (1.0 - probs[cls]);
            }

            std::vector<std::size_t> tree_features;
            if (params.colsample_bytree < 1.0) {
                auto take = std::max<std::size_t>(
                    1, static_cast<std::size_t>(std::floor(
                           params.colsample_bytree * static_cast<double>(n_features) + 1e-9)));
                std::vector<std::size_t> pool = all_features;
                for (std::size_t i = 0; i < take; ++i) {
                    std::size_t j = i + rng() % (pool.size() - i);
                    std::swap(pool[i], pool[j]);
                }
                pool.resize(take);
                std::sort(pool.begin(), pool.end());
                tree_features = std::move(pool);
            } else {
                tree_features = all_features;
            }

            TreeBuilder builder{bins, booster.bin_edges, grad, hess, params, tree_features, {}};
            std::vector<std::size_t> rows = sample_rows;
            builder.build(rows, 0);
            Tree tree = std::move(builder.tree);

            for (std::size_t r = 0; r < n; ++r) {
                int leaf = tree_leaf_for_bins(tree, bins[r]);
                train_state.margins[r * k + cls] +=
                    params.eta * tree.nodes[static_cast<std::size_t>(leaf)].weight;
            }
            if (eval_table)
                for (std::size_t r = 0; r < eval_state.n; ++r)
                    eval_state.margins[r * k + cls] +=
                        params.eta * tree.predict(eval_table->rows[r]);

            booster.trees.back().push_back(std::move(tree));
        }

        RoundMetrics rm;
        train_state.metrics(rm.train_mlogloss, rm.train_merror);
        if (eval_table) eval_state.metrics(rm.eval_mlogloss, rm.eval_merror);
        booster.history.push_back(rm);
    }
    return booster;
}

std::vector<double> Booster::predict_margins(const std::vector<std::vector<double>>& rows) const {
    for (const auto& row : rows)
        if (row.size() != n_features)
            throw SchemaMismatch("prediction row arity != " + std::to_string(n_features));
    std::vector<double> margins(rows.size() * n_classes, 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (const auto& round : trees)
            for (std::size_t cls = 0; cls < n_classes; ++cls)
                margins[i * n_classes + cls] += params.eta * round[cls].predict(rows[i]);
    return margins;
}

std::vector<double> Booster::predict_proba(const std::vector<std::vector<double>>& rows) const {
    auto margins = predict_margins(rows);
    std::vector<double> probs(margins.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        softmax_row(&margins[i * n_classes], &probs[i * n_classes], n_classes);
    return probs;
}

std::string Booster::history_csv() const {
    std::ostringstream out;
    out << "round,train_mlogloss,train_merror,eval_mlogloss,eval_merror\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        out << i << ',' << format_double(history[i].train_mlogloss) << ','
            << format_double(history[i].train_merror) << ','
            << format_double(history[i].eval_mlogloss) << ','
            << format_double(history[i].eval_merror) << '\n';
    return out.str();
}

std::string Booster::serialize() const {
    std::ostringstream out;
    out << "mqttids-gbdt version 1\n";
    out << "params eta " << fmt(params.eta) << " gamma " << fmt(params.gamma) << " lambda "
        << fmt(params.lambda) << " min_child_weight " << fmt(params.min_child_weight)
        << " subsample " << fmt(params.subsample) << " colsample_bytree "
        << fmt(params.colsample_bytree) << " max_depth " << params.max_depth << " n_rounds "
        << params.n_rounds << " n_bins " << params.n_bins << " seed " << params.seed << "\n";
    out << "classes " << n_classes;
    for (const auto& name : label_names) out << ' ' << name;
    out << "\nfeatures " << n_features;
    for (const auto& name : feature_names) out << ' ' << name;
    out << "\n";
    for (std::size_t f = 0; f < bin_edges.size(); ++f) {
        out << "bin_edges " << f << ' ' << bin_edges[f].size();
        for (double v : bin_edges[f]) out << ' ' << fmt(v);
        out << "\n";
    }
    out << "rounds " << trees.size() << "\n";
    for (const auto& round : trees) {
        for (const auto& tree : round) {
            out << "tree " << tree.nodes.size() << "\n";
            for (const auto& n : tree.nodes)
                out << n.feature << ' ' << n.split_bin << ' ' << fmt(n.threshold) << ' '
                    << n.left << ' ' << n.right << ' ' << fmt(n.weight) << "\n";
        }
    }
    out << "history " << history.size() << "\n";
    for (const auto& h : history)
        out << fmt(h.train_mlogloss) << ' ' << fmt(h.train_merror) << ' '
            << fmt(h.eval_mlogloss) << ' ' << fmt(h.eval_merror) << "\n";
    return out.str();
}

void Booster::save(const std::filesystem::path& path) const {
    atomic_write_file(path, serialize());
}

Booster Booster::deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string word;
    Booster b;
    in >> word;
    if (word != "mqttids-gbdt") throw SchemaMismatch("not a gbdt model file");
    int version;
    in >> word >> version;
    if (word != "version" || version != 1) throw SchemaMismatch("unsupported model version");
    in >> word >> word >> b.params.eta >> word >> b.params.gamma >> word >> b.params.lambda >>
        word >> b.params.min_child_weight >> word >> b.params.subsample >> word >>
        b.params.colsample_bytree >> word >> b.params.max_depth >> word >> b.params.n_rounds >>
        word >> b.params.n_bins >> word >> b.params.seed;
    in >> word >> b.n_classes;
    b.label_names.resize(b.n_classes);
    for (auto& name : b.label_names) in >> name;
    in >> word >> b.n_features;
    b.feature_names.resize(b.n_features);
    for (auto& name : b.feature_names) in >> name;
    b.bin_edges.resize(b.n_features);
    for (std::size_t f = 0; f < b.n_features; ++f) {
        std::size_t idx, count;
        in >> word >> idx >> count;
        b.bin_edges[f].resize(count);
        for (auto& v : b.bin_edges[f]) in >> v;
    }
    std::size_t rounds;
    in >> word >> rounds;
    b.trees.resize(rounds);
    for (auto& round : b.trees) {
        round.resize(b.n_classes);
        for (auto& tree : round) {
            std::size_t n_nodes;
            in >> word >> n_nodes;
            tree.nodes.resize(n_nodes);
            for (auto& node : tree.nodes)
                in >> node.feature >> node.split_bin >> node.threshold >> node.left >>
                    node.right >> node.weight;
        }
    }
    std::size_t hist;
    in >> word >> hist;
    b.history.resize(hist);
    for (auto& h : b.history)
        in >> h.train_mlogloss >> h.train_merror >> h.eval_mlogloss >> h.eval_merror;
    if (!in) throw SchemaMismatch("truncated gbdt model file");
    return b;
}

Booster Booster::load(const std::filesystem::path& path) {
    return deserialize(read_file(path));
}

std::size_t GridSpec::combinations() const {
    return max_depth.size() * eta.size() * min_child_weight.size() * gamma.size() *
           subsample.size() * colsample_bytree.size();
}

GridSpec GridSpec::paper_grid() {
    GridSpec g;
    g.max_depth = {1, 5, 10, 20, 25};
    g.eta = {0.4, 0.6, 0.8};
    g.min_child_weight = {1, 5, 10};
    g.gamma = {0.5, 1, 1.5, 2, 5};
    g.subsample = {0.6, 0.8, 1.0};
    g.colsample_bytree = {0.6, 0.8, 1.0};
    return g;
}

std::vector<std::size_t> stratified_folds(const std::vector<int>& labels, std::size_t folds) {
    std::vector<std::size_t> fold_of(labels.size());
    std::map<int, std::size_t> next;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& counter = next[labels[i]];
        fold_of[i] = counter % folds;
        ++counter;
    }
    return fold_of;
}

GridResult grid_search(const data::FrameTable& table, const GridSpec& grid,
                       std::size_t folds, std::uint64_t seed) {
    if (grid.combinations() == 0) throw Error("grid has an empty parameter list");
    auto fold_of = stratified_folds(table.labels, folds);

    std::vector<data::FrameTable> train_parts(folds), valid_parts(folds);
    for (std::size_t f = 0; f < folds; ++f) {
        train_parts[f].schema = valid_parts[f].schema = table.schema;
        train_parts[f].label_names = valid_parts[f].label_names = table.label_names;
    }
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        for (std::size_t f = 0; f < folds; ++f) {
            auto& part = fold_of[r] == f ? valid_parts[f] : train_parts[f];
            part.rows.push_back(table.rows[r]);
            part.labels.push_back(table.labels[r]);
        }
    }

    std::ostringstream report;
    report << "max_depth,eta,min_child_weight,gamma,subsample,colsample_bytree,"
              "mean_val_mlogloss,mean_val_merror\n";

    GridResult result;
    bool have_best = false;
    for (std::size_t d : grid.max_depth)
        for (double e : grid.eta)
            for (double mcw : grid.min_child_weight)
                for (double ga : grid.gamma)
                    for (double ss : grid.subsample)
                        for (double cs : grid.colsample_bytree) {
                            GbdtParams p;
                            p.max_depth = d;
                            p.eta = e;
                            p.min_child_weight = mcw;
                            p.gamma = ga;
                            p.subsample = ss;
                            p.colsample_bytree = cs;
                            p.n_rounds = grid.n_rounds;
                            p.n_bins = grid.n_bins;
                            p.seed = seed;

                            double sum_mll = 0, sum_err = 0;
                            for (std::size_t f = 0; f < folds; ++f) {
                                Booster b = train(train_parts[f], &valid_parts[f], p);
                                sum_mll += b.history.back().eval_mlogloss;
                                sum_err += b.history.back().eval_merror;
                            }
                            double mll = sum_mll / static_cast<double>(folds);
                            double err = sum_err / static_cast<double>(folds);
                            report << d << ',' << format_double(e) << ','
                                   << format_double(mcw) << ',' << format_double(ga) << ','
                                   << format_double(ss) << ',' << format_double(cs) << ','
                                   << format_double(mll) << ',' << format_double(err) << '\n';
                            bool better =
                                !have_best || mll < result.best_mlogloss ||
                                (mll == result.best_mlogloss && err < result.best_merror);
                            if (better) {
                                have_best = true;
                                result.best = p;
                                result.best_mlogloss = mll;
                                result.best_merror = err;
                            }
                        }
    result.report_csv = report.str();
    return result;
}

}  // namespace mqttids::gbdt
