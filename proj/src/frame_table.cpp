#include "mqttids/frame_table.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mqttids/errors.hpp"
#include "mqttids/util.hpp"

namespace mqttids::data {

const std::vector<std::string>& canonical_label_names() {
    static const std::vector<std::string> names = {"normal", "dos", "intrusion", "mitm"};
    return names;
}

std::size_t FrameTable::count_label(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::pair<std::vector<int>, std::map<std::string, int>> label_encode(
    const std::vector<std::string>& values) {
    std::map<std::string, int> mapping;  // ordered map gives lexicographic keys
    for (const auto& v : values) mapping.emplace(v, 0);
    int code = 0;
    for (auto& [key, val] : mapping) val = code++;
    std::vector<int> codes;
    codes.reserve(values.size());
    for (const auto& v : values) codes.push_back(mapping.at(v));
    return {std::move(codes), std::move(mapping)};
}

namespace {

int canonical_index(const std::string& name) {
    const auto& canon = canonical_label_names();
    for (std::size_t i = 0; i < canon.size(); ++i)
        if (canon[i] == name) return static_cast<int>(i);
    throw SchemaMismatch("unknown class label: " + name);
}

std::vector<std::string> observed_label_names(const std::set<std::string>& observed) {
    std::vector<std::string> names;
    for (const auto& c : canonical_label_names())
        if (observed.count(c)) names.push_back(c);
    return names;
}

double parse_cell(const std::string& cell, const std::string& col) {
    try {
        std::size_t pos = 0;
        double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw SchemaMismatch("non-numeric value '" + cell + "' in column " + col);
    }
}

std::string format_cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

FrameTable load_frame_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
    auto rows = csv_read(path);
    if (rows.empty()) throw SchemaMismatch("empty CSV: " + path.string());

    const auto& header = rows.front();
    if (header.size() != schema.size() + 1 || header.back() != "label")
        throw SchemaMismatch("CSV header does not match schema: " + path.string());
    for (std::size_t i = 0; i < schema.size(); ++i)
        if (header[i] != schema.names[i])
            throw SchemaMismatch("CSV column " + header[i] + " != " + schema.names[i]);

    std::size_t n = rows.size() - 1;
    FrameTable table;
    table.schema = schema;
    table.rows.assign(n, std::vector<double>(schema.size(), 0.0));

    std::set<std::string> observed;
    std::vector<std::string> raw_labels(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& cells = rows[r + 1];
        if (cells.size() != schema.size() + 1)
            throw SchemaMismatch("row " + std::to_string(r + 1) + " has wrong arity");
        raw_labels[r] = cells.back();
        observed.insert(cells.back());
    }
    table.label_names = observed_label_names(observed);
    table.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        auto it = std::find(table.label_names.begin(), table.label_names.end(), raw_labels[r]);
        table.labels[r] = static_cast<int>(it - table.label_names.begin());
    }

    for (std::size_t c = 0; c < schema.size(); ++c) {
        if (schema.kinds[c] == FeatureKind::Categorical) {
            std::vector<std::string> raw(n);
            for (std::size_t r = 0; r < n; ++r) raw[r] = rows[r + 1][c];
            auto [codes, mapping] = label_encode(raw);
            for (std::size_t r = 0; r < n; ++r) table.rows[r][c] = codes[r];
            table.encoders[c] = std::move(mapping);
        } else {
            for (std::size_t r = 0; r < n; ++r)
                table.rows[r][c] = parse_cell(rows[r + 1][c], schema.names[c]);
        }
    }
    return table;
}

FrameTable balance_classes(const FrameTable& table, BalanceStrategy strategy,
                           std::uint64_t seed) {
    std::size_t k = table.label_names.size();
    if (k < 2) throw EmptyClass("balancing needs at least 2 classes");

    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t r = 0; r < table.n_rows(); ++r)
        by_class[static_cast<std::size_t>(table.labels[r])].push_back(r);
    for (std::size_t c = 0; c < k; ++c)
        if (by_class[c].empty())
            throw EmptyClass("class " + table.label_names[c] + " has no rows");

    std::size_t target = 0;
    if (strategy == BalanceStrategy::Upsample) {
        for (const auto& v : by_class) target = std::max(target, v.size());
    } else {
        target = table.n_rows();
        for (const auto& v : by_class) target = std::min(target, v.size());
    }

    std::mt19937_64 rng(seed);
    // Multiplicity per original row; output keeps the original row order so
    // windowing downstream still sees a time-ordered stream.
    std::vector<std::size_t> multiplicity(table.n_rows(), 0);
    for (std::size_t c = 0; c < k; ++c) {
        auto& idx = by_class[c];
        if (idx.size() == target) {
            for (auto r : idx) multiplicity[r] = 1;
        } else if (strategy == BalanceStrategy::Upsample) {
            for (auto r : idx) multiplicity[r] = 1;
            for (std::size_t extra = idx.size(); extra < target; ++extra)
                multiplicity[idx[rng() % idx.size()]]++;
        } else {
            // partial Fisher-Yates: first `target` entries are the sample
            for (std::size_t i = 0; i < target; ++i) {
                std::size_t j = i + rng() % (idx.size() - i);
                std::swap(idx[i], idx[j]);
            }
            for (std::size_t i = 0; i < target; ++i) multiplicity[idx[i]] = 1;
        }
    }

    FrameTable out;
    out.schema = table.schema;
    out.label_names = table.label_names;
    out.encoders = table.encoders;
    out.rows.reserve(target * k);
    out.labels.reserve(target * k);
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        for (std::size_t m = 0; m < multiplicity[r]; ++m) {
            out.rows.push_back(table.rows[r]);
            out.labels.push_back(table.labels[r]);
        }
    }
    return out;
}

FrameTable merge_multiclass(const std::vector<FrameTable>& tables) {
    if (tables.empty()) throw SchemaMismatch("no tables to merge");
    const FeatureSchema& schema = tables.front().schema;
    for (const auto& t : tables)
        if (t.schema != schema) throw SchemaMismatch("feature schemas differ across tables");

    FrameTable out;
    out.schema = schema;

    std::set<std::string> observed;
    for (const auto& t : tables)
        for (const auto& name : t.label_names) observed.insert(name);
    out.label_names = observed_label_names(observed);

    // Re-fit categorical encoders over the union of raw values.
    std::map<std::size_t, std::map<std::string, int>> unions;
    for (const auto& t : tables)
        for (const auto& [col, enc] : t.encoders)
            for (const auto& [value, code] : enc) unions[col].emplace(value, 0);
    for (auto& [col, enc] : unions) {
        int code = 0;
        for (auto& [value, c] : enc) c = code++;
    }
    out.encoders = unions;

    for (const auto& t : tables) {
        // old code -> raw value, per categorical column
        std::map<std::size_t, std::vector<std::string>> inverse;
        for (const auto& [col, enc] : t.encoders) {
            auto& inv = inverse[col];
            inv.resize(enc.size());
            for (const auto& [value, code] : enc) inv[static_cast<std::size_t>(code)] = value;
        }
        for (std::size_t r = 0; r < t.n_rows(); ++r) {
            std::vector<double> row = t.rows[r];
            for (const auto& [col, inv] : inverse) {
                auto old_code = static_cast<std::size_t>(row[col]);
                row[col] = unions.at(col).at(inv.at(old_code));
            }
            out.rows.push_back(std::move(row));
            const std::string& name = t.label_names[static_cast<std::size_t>(t.labels[r])];
            auto it = std::find(out.label_names.begin(), out.label_names.end(), name);
            out.labels.push_back(static_cast<int>(it - out.label_names.begin()));
        }
    }
    return out;
}

std::pair<FrameTable, ScalerParams> scale_fit_transform(const FrameTable& table) {
    std::size_t f = table.n_features();
    ScalerParams params;
    params.col_min.assign(f, 0.0);
    params.col_max.assign(f, 0.0);
    if (!table.rows.empty()) {
        for (std::size_t c = 0; c < f; ++c) {
            double lo = table.rows[0][c], hi = table.rows[0][c];
            for (const auto& row : table.rows) {
                lo = std::min(lo, row[c]);
                hi = std::max(hi, row[c]);
            }
            params.col_min[c] = lo;
            params.col_max[c] = hi;
        }
    }
    return {scale_apply(table, params), params};
}

FrameTable scale_apply(const FrameTable& table, const ScalerParams& params) {
    if (params.col_min.size() != table.n_features())
        throw SchemaMismatch("scaler parameter arity does not match table");
    FrameTable out = table;
    for (auto& row : out.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            double range = params.col_max[c] - params.col_min[c];
            row[c] = range == 0.0 ? 0.0 : (row[c] - params.col_min[c]) / range;
        }
    }
    return out;
}

WindowedTensor make_windows(const FrameTable& table, std::size_t timesteps) {
    std::size_t n = table.n_rows();
    if (n < timesteps)
        throw TooFewRows("need at least " + std::to_string(timesteps) + " rows");
    std::size_t f = table.n_features();

    WindowedTensor out;
    out.n = n - timesteps + 1;
    out.t = timesteps;
    out.f = f;
    out.k = kNumClasses;
    out.data.resize(out.n * timesteps * f);
    out.labels_onehot.assign(out.n * kNumClasses, 0.0);

    for (std::size_t w = 0; w < out.n; ++w) {
        for (std::size_t s = 0; s < timesteps; ++s)
            std::copy(table.rows[w + s].begin(), table.rows[w + s].end(),
                      out.data.begin() + static_cast<std::ptrdiff_t>((w * timesteps + s) * f));
        int local = table.labels[w + timesteps - 1];
        int global = canonical_index(table.label_names[static_cast<std::size_t>(local)]);
        out.labels_onehot[w * kNumClasses + static_cast<std::size_t>(global)] = 1.0;
    }
    return out;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    return idx;
}

void check_fraction(double f) {
    if (!(f > 0.0 && f < 1.0)) throw Error("test_fraction must lie in (0, 1)");
}

}  // namespace

std::pair<FrameTable, FrameTable> split(const FrameTable& table, double test_fraction,
                                        std::uint64_t seed) {
    check_fraction(test_fraction);
    auto idx = shuffled_indices(table.n_rows(), seed);
    auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(table.n_rows()) * (1.0 - test_fraction)));

    auto take = [&](std::size_t begin, std::size_t end) {
        FrameTable part;
        part.schema = table.schema;
        part.label_names = table.label_names;
        part.encoders = table.encoders;
        for (std::size_t i = begin; i < end; ++i) {
            part.rows.push_back(table.rows[idx[i]]);
            part.labels.push_back(table.labels[idx[i]]);
        }
        return part;
    };
    return {take(0, n_train), take(n_train, table.n_rows())};
}

std::pair<WindowedTensor, WindowedTensor> split(const WindowedTensor& tensor,
                                                double test_fraction, std::uint64_t seed) {
    check_fraction(test_fraction);
    auto idx = shuffled_indices(tensor.n, seed);
    auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(tensor.n) * (1.0 - test_fraction)));

    auto take = [&](std::size_t begin, std::size_t end) {
        WindowedTensor part;
        part.n = end - begin;
        part.t = tensor.t;
        part.f = tensor.f;
        part.k = tensor.k;
        part.data.resize(part.n * part.t * part.f);
        part.labels_onehot.resize(part.n * part.k);
        for (std::size_t i = begin; i < end; ++i) {
            std::size_t w = idx[i], o = i - begin;
            std::copy_n(tensor.data.begin() + static_cast<std::ptrdiff_t>(w * tensor.t * tensor.f),
                        tensor.t * tensor.f,
                        part.data.begin() + static_cast<std::ptrdiff_t>(o * tensor.t * tensor.f));
            std::copy_n(tensor.labels_onehot.begin() + static_cast<std::ptrdiff_t>(w * tensor.k),
                        tensor.k,
                        part.labels_onehot.begin() + static_cast<std::ptrdiff_t>(o * tensor.k));
        }
        return part;
    };
    return {take(0, n_train), take(n_train, tensor.n)};
}

FrameTable select_columns(const FrameTable& table, const std::vector<std::string>& names) {
    std::vector<std::size_t> cols;
    for (const auto& name : names) {
        auto it = std::find(table.schema.names.begin(), table.schema.names.end(), name);
        if (it == table.schema.names.end())
            throw SchemaMismatch("unknown feature: " + name);
        cols.push_back(static_cast<std::size_t>(it - table.schema.names.begin()));
    }

    FrameTable out;
    out.label_names = table.label_names;
    out.labels = table.labels;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        out.schema.names.push_back(table.schema.names[cols[j]]);
        out.schema.kinds.push_back(table.schema.kinds[cols[j]]);
        auto enc = table.encoders.find(cols[j]);
        if (enc != table.encoders.end()) out.encoders[j] = enc->second;
    }
    out.rows.reserve(table.n_rows());
    for (const auto& row : table.rows) {
        std::vector<double> selected(cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j) selected[j] = row[cols[j]];
        out.rows.push_back(std::move(selected));
    }
    return out;
}

void save_dataset_csv(const FrameTable& table, const std::filesystem::path& path) {
    std::ostringstream out;
    for (const auto& name : table.schema.names) out << csv_escape(name) << ',';
    out << "label\n";
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        for (double v : table.rows[r]) out << format_cell(v) << ',';
        out << table.label_names[static_cast<std::size_t>(table.labels[r])] << '\n';
    }
    atomic_write_file(path, out.str());
}

FrameTable load_dataset_csv(const std::filesystem::path& path) {
    auto rows = csv_read(path);
    if (rows.empty()) throw SchemaMismatch("empty dataset CSV: " + path.string());
    const auto& header = rows.front();
    if (header.empty() || header.back() != "label")
        throw SchemaMismatch("dataset CSV missing label column");

    FrameTable table;
    for (std::size_t c = 0; c + 1 < header.size(); ++c) {
        table.schema.names.push_back(header[c]);
        table.schema.kinds.push_back(FeatureKind::Numeric);  // values already encoded
    }

    std::size_t n = rows.size() - 1;
    std::set<std::string> observed;
    for (std::size_t r = 0; r < n; ++r) {
        if (rows[r + 1].size() != header.size())
            throw SchemaMismatch("dataset row " + std::to_string(r + 1) + " has wrong arity");
        observed.insert(rows[r + 1].back());
    }
    table.label_names = observed_label_names(observed);

    table.rows.assign(n, std::vector<double>(table.schema.size(), 0.0));
    table.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < table.schema.size(); ++c)
            table.rows[r][c] = parse_cell(rows[r + 1][c], table.schema.names[c]);
        auto it = std::find(table.label_names.begin(), table.label_names.end(),
                            rows[r + 1].back());
        table.labels[r] = static_cast<int>(it - table.label_names.begin());
    }
    return table;
}

std::string PipelineSidecar::to_json() const {
    nlohmann::json j;
    j["version"] = version;
    j["schema"]["names"] = schema.names;
    std::vector<std::string> kinds;
    for (auto k : schema.kinds)
        kinds.push_back(k == FeatureKind::Categorical ? "categorical" : "numeric");
    j["schema"]["kinds"] = kinds;
    j["label_names"] = label_names;
    nlohmann::json enc = nlohmann::json::object();
    for (const auto& [col, mapping] : encoders)
        enc[std::to_string(col)] = mapping;
    j["encoders"] = enc;
    j["scaler"]["min"] = scaler.col_min;
    j["scaler"]["max"] = scaler.col_max;
    j["selected_features"] = selected_features;
    return j.dump(2) + "\n";
}

PipelineSidecar PipelineSidecar::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    PipelineSidecar s;
    s.version = j.at("version").get<int>();
    if (s.version != 1) throw SchemaMismatch("unsupported sidecar version");
    s.schema.names = j.at("schema").at("names").get<std::vector<std::string>>();
    for (const auto& k : j.at("schema").at("kinds").get<std::vector<std::string>>())
        s.schema.kinds.push_back(k == "categorical" ? FeatureKind::Categorical
                                                    : FeatureKind::Numeric);
    s.label_names = j.at("label_names").get<std::vector<std::string>>();
    for (const auto& [key, mapping] : j.at("encoders").items())
        s.encoders[std::stoul(key)] = mapping.get<std::map<std::string, int>>();
    s.scaler.col_min = j.at("scaler").at("min").get<std::vector<double>>();
    s.scaler.col_max = j.at("scaler").at("max").get<std::vector<double>>();
    s.selected_features = j.at("selected_features").get<std::vector<std::string>>();
    return s;
}

}  // namespace mqttids::data
