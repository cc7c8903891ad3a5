#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mqttids/traffic_lab.hpp"

namespace mqttids::data {

enum class FeatureKind { Numeric, Categorical };

struct FeatureSchema {
    std::vector<std::string> names;
    std::vector<FeatureKind> kinds;

    std::size_t size() const { return names.size(); }
    bool operator==(const FeatureSchema&) const = default;
};

// The 11 per-frame features used throughout the pipeline. The categorical
// msg_code column carries the raw payload text in CSV form and is
// label-encoded when a CSV is loaded into a FrameTable.
FeatureSchema default_schema();

// One CSV cell per feature, in schema order, plus the label name.
struct FeatureRow {
    std::vector<std::string> cells;
    std::string label;
};

std::vector<FeatureRow> extract_features(const std::vector<sim::FrameRecord>& records,
                                         const FeatureSchema& schema);

// Writes header (schema names + "label") and one row per frame.
// Returns the number of data rows written.
std::size_t export_frames(const std::vector<sim::FrameRecord>& records,
                          const FeatureSchema& schema,
                          const std::filesystem::path& path);

}  // namespace mqttids::data
