#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mqttids/frame_table.hpp"

namespace mqttids::gbdt {

struct GbdtParams {
    double eta = 0.3;
    double gamma = 0.0;
    double lambda = 1.0;  // leaf L2
    double min_child_weight = 1.0;
    double subsample = 1.0;
    double colsample_bytree = 1.0;
    std::size_t max_depth = 6;
    std::size_t n_rounds = 200;
    std::size_t n_bins = 256;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const GbdtParams&) const = default;
};

struct TreeNode {
    int feature = -1;  // -1 = leaf
    int split_bin = 0;
    double threshold = 0;  // raw value; go left iff x <= threshold
    int left = -1;
    int right = -1;
    double weight = 0;  // leaf margin contribution (before eta)

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // preorder, root first
    double predict(const std::vector<double>& row) const;
};

struct RoundMetrics {
    double train_mlogloss = 0;
    double train_merror = 0;
    double eval_mlogloss = 0;
    double eval_merror = 0;
};

struct Booster {
    GbdtParams params;
    std::size_t n_classes = 0;
    std::size_t n_features = 0;
    std::vector<std::string> feature_names;
    std::vector<std::string> label_names;
    std::vector<std::vector<double>> bin_edges;  // per feature, ascending cut values
    std::vector<std::vector<Tree>> trees;        // [round][class]
    std::vector<RoundMetrics> history;

    // Softmax over accumulated margins; rows sum to 1.
    std::vector<double> predict_proba(const std::vector<std::vector<double>>& rows) const;
    std::vector<double> predict_margins(const std::vector<std::vector<double>>& rows) const;

    std::string history_csv() const;
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;
    static Booster deserialize(const std::string& text);
    static Booster load(const std::filesystem::path& path);
};

// Histogram-based multiclass boosting with a softmax objective. Per round and
// class: g = p - y, h = p (1 - p); split gain
// 0.5 [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] - gamma, leaf weight -G/(H+l).
Booster train(const data::FrameTable& train_table, const data::FrameTable* eval_table,
              const GbdtParams& params);

// Per-parameter value lists, iterated in this nesting order (outer to inner).
struct GridSpec {
    std::vector<std::size_t> max_depth;
    std::vector<double> eta;
    std::vector<double> min_child_weight;
    std::vector<double> gamma;
    std::vector<double> subsample;
    std::vector<double> colsample_bytree;
    std::size_t n_rounds = 20;
    std::size_t n_bins = 256;

    std::size_t combinations() const;
    // The search space reported in the source study.
    static GridSpec paper_grid();
};

struct GridResult {
    GbdtParams best;
    double best_mlogloss = 0;
    double best_merror = 0;
    std::string report_csv;  // one row per combination, grid order
};

// Exhaustive search with stratified k-fold CV; best = argmin mean validation
// mlogloss, ties broken by lower merror, then grid order.
GridResult grid_search(const data::FrameTable& table, const GridSpec& grid,
                       std::size_t folds = 3, std::uint64_t seed = 0);

// Deterministic stratified fold ids (round-robin within each class).
std::vector<std::size_t> stratified_folds(const std::vector<int>& labels, std::size_t folds);

}  // namespace mqttids::gbdt
