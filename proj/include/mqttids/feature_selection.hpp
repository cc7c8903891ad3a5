#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mqttids/frame_table.hpp"

namespace mqttids::fsel {

// Empirical mutual information in nats over two discrete columns.
// Terms with zero joint probability contribute nothing.
double mutual_information(const std::vector<int>& x, const std::vector<int>& y);

// Equal-width binning over [min, max]; the top bin is right-closed.
// Constant columns collapse to bin 0.
std::vector<int> discretize(const std::vector<double>& column, std::size_t bins);

struct SelectionResult {
    std::vector<std::string> selected;          // in pick order
    std::vector<double> scores;                 // greedy mRMR score per step
    std::vector<double> wrapper_cv_accuracy;    // per evaluated subset
    std::vector<std::vector<std::string>> subsets;  // wrapper subsets, ranked
};

// Greedy minimum-redundancy-maximum-relevance over discretized columns:
// first pick = argmax I(f; label); then argmax of
// I(f; label) - mean_{s in S} I(f; s). Ties go to schema order.
SelectionResult mrmr_select(const data::FrameTable& table, std::size_t k,
                            std::size_t bins = 10);

// Cross-validated categorical accuracy of a shallow GBDT per feature subset;
// subsets come back ranked by mean accuracy, ties to the smaller subset.
SelectionResult wrapper_evaluate(const data::FrameTable& table,
                                 const std::vector<std::vector<std::string>>& subsets,
                                 std::size_t folds = 3);

// FIM report: feature, relevance_nats, selected(0/1), greedy_step_score.
std::string fim_report_csv(const data::FrameTable& table, const SelectionResult& result,
                           std::size_t bins = 10);

}  // namespace mqttids::fsel
