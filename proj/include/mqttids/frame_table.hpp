#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mqttids/features.hpp"

namespace mqttids::data {

// Canonical multiclass label order, fixed across the whole toolkit.
const std::vector<std::string>& canonical_label_names();
constexpr std::size_t kNumClasses = 4;
constexpr std::size_t kTimesteps = 4;

// Lexicographic label encoding: unique values sorted, codes 0..U-1.
std::pair<std::vector<int>, std::map<std::string, int>> label_encode(
    const std::vector<std::string>& values);

struct FrameTable {
    FeatureSchema schema;
    std::vector<std::vector<double>> rows;  // N x F
    std::vector<int> labels;                // index into label_names
    std::vector<std::string> label_names;   // canonical order subset
    // value -> code maps for categorical features, keyed by feature index
    std::map<std::size_t, std::map<std::string, int>> encoders;

    std::size_t n_rows() const { return rows.size(); }
    std::size_t n_features() const { return schema.size(); }
    std::size_t count_label(int label) const;
};

// Loads a traffic_lab CSV; categorical columns are label-encoded
// lexicographically, label names mapped to the canonical order.
FrameTable load_frame_csv(const std::filesystem::path& path,
                          const FeatureSchema& schema = default_schema());

enum class BalanceStrategy { Upsample, Downsample };

// Equalizes class counts. Upsample resamples minorities with replacement to
// the majority count; downsample subsamples majorities without replacement.
FrameTable balance_classes(const FrameTable& table, BalanceStrategy strategy,
                           std::uint64_t seed);

// Concatenates per-attack tables into one K=4 table with canonical label
// names; categorical encoders are re-fit over the union of observed values.
FrameTable merge_multiclass(const std::vector<FrameTable>& tables);

struct ScalerParams {
    std::vector<double> col_min;
    std::vector<double> col_max;
};

// Min-max to [0,1] per column; constant columns map to 0. Stored parameters
// extend affinely outside the fitted range (no clipping).
std::pair<FrameTable, ScalerParams> scale_fit_transform(const FrameTable& table);
FrameTable scale_apply(const FrameTable& table, const ScalerParams& params);

struct WindowedTensor {
    std::size_t n = 0;  // windows
    std::size_t t = kTimesteps;
    std::size_t f = 0;  // features
    std::size_t k = kNumClasses;
    std::vector<double> data;          // n*t*f row-major
    std::vector<double> labels_onehot; // n*k

    double at(std::size_t w, std::size_t step, std::size_t feat) const {
        return data[(w * t + step) * f + feat];
    }
};

// Sliding windows with stride 1; window label = label of the final row.
WindowedTensor make_windows(const FrameTable& table, std::size_t timesteps = kTimesteps);

// Deterministic shuffled split; train gets floor(N * (1 - test_fraction)).
std::pair<FrameTable, FrameTable> split(const FrameTable& table, double test_fraction,
                                        std::uint64_t seed);
std::pair<WindowedTensor, WindowedTensor> split(const WindowedTensor& tensor,
                                                double test_fraction, std::uint64_t seed);

// Versioned sidecar carrying everything needed to reapply the pipeline
// transforms at detection time.
struct PipelineSidecar {
    int version = 1;
    FeatureSchema schema;
    std::vector<std::string> label_names;
    std::map<std::size_t, std::map<std::string, int>> encoders;
    ScalerParams scaler;
    std::vector<std::string> selected_features;  // empty = all

    std::string to_json() const;
    static PipelineSidecar from_json(const std::string& text);
};

// Keeps only the named feature columns, in the given order.
FrameTable select_columns(const FrameTable& table, const std::vector<std::string>& names);

// Dataset file round trip: encoded + scaled numeric CSV with integer labels.
void save_dataset_csv(const FrameTable& table, const std::filesystem::path& path);
FrameTable load_dataset_csv(const std::filesystem::path& path);

}  // namespace mqttids::data
