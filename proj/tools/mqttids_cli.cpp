#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "mqttids/errors.hpp"
#include "mqttids/feature_selection.hpp"
#include "mqttids/features.hpp"
#include "mqttids/frame_table.hpp"
#include "mqttids/gbdt.hpp"
#include "mqttids/metrics.hpp"
#include "mqttids/rnn.hpp"
#include "mqttids/traffic_lab.hpp"
#include "mqttids/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mqttids;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadArgs = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitSchema = 5;

int guarded(const char* command, const std::function<int()>& body) {
    try {
        return body();
    } catch (const SchemaMismatch& e) {
        std::cerr << command << ": schema mismatch: " << e.what() << '\n';
        return kExitSchema;
    } catch (const NonFiniteLoss& e) {
        std::cerr << command << ": training diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const IoFailure& e) {
        std::cerr << command << ": I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << command << ": " << e.what() << '\n';
        return kExitBadArgs;
    }
}

void write_manifest(const fs::path& dir, json manifest) {
    json outputs = json::object();
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
        outputs[entry.path().filename().string()] = file_hash_hex(entry.path());
    }
    manifest["outputs"] = outputs;
    atomic_write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

data::FrameTable apply_selection(const data::FrameTable& table,
                                 const data::PipelineSidecar& sidecar) {
    if (sidecar.selected_features.empty()) return table;
    return data::select_columns(table, sidecar.selected_features);
}

metrics::PredictionBatch batch_from_probs(const std::vector<double>& probs,
                                          const std::vector<int>& labels,
                                          const std::vector<std::string>& table_names,
                                          const std::vector<std::string>& model_names) {
    metrics::PredictionBatch batch;
    batch.k = model_names.size();
    batch.n = labels.size();
    batch.probs = probs;
    batch.truth_onehot.assign(batch.n * batch.k, 0.0);
    for (std::size_t i = 0; i < batch.n; ++i) {
        const std::string& name = table_names[static_cast<std::size_t>(labels[i])];
        auto it = std::find(model_names.begin(), model_names.end(), name);
        if (it == model_names.end())
            throw SchemaMismatch("label " + name + " unknown to the model");
        batch.truth_onehot[i * batch.k +
                           static_cast<std::size_t>(it - model_names.begin())] = 1.0;
    }
    return batch;
}

std::vector<int> window_labels(const data::FrameTable& table, std::size_t timesteps) {
    std::vector<int> out;
    for (std::size_t r = timesteps - 1; r < table.n_rows(); ++r)
        out.push_back(table.labels[r]);
    return out;
}

gbdt::GbdtParams load_gbdt_params(const fs::path& path) {
    gbdt::GbdtParams params;
    std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        if (key == "eta") params.eta = std::stod(value);
        else if (key == "gamma") params.gamma = std::stod(value);
        else if (key == "lambda") params.lambda = std::stod(value);
        else if (key == "min_child_weight") params.min_child_weight = std::stod(value);
        else if (key == "subsample") params.subsample = std::stod(value);
        else if (key == "colsample_bytree") params.colsample_bytree = std::stod(value);
        else if (key == "max_depth") params.max_depth = std::stoul(value);
        else if (key == "n_rounds") params.n_rounds = std::stoul(value);
        else if (key == "n_bins") params.n_bins = std::stoul(value);
        else if (key == "seed") params.seed = std::stoull(value);
        else throw Error("unknown parameter key: " + key);
    }
    return params;
}

json params_to_json(const gbdt::GbdtParams& p) {
    return {{"eta", p.eta},
            {"gamma", p.gamma},
            {"lambda", p.lambda},
            {"min_child_weight", p.min_child_weight},
            {"subsample", p.subsample},
            {"colsample_bytree", p.colsample_bytree},
            {"max_depth", p.max_depth},
            {"n_rounds", p.n_rounds},
            {"n_bins", p.n_bins},
            {"seed", p.seed}};
}

// Re-applies the stored pipeline (encoders, scaler, feature subset) to a raw
// frames CSV. Unknown categorical values map to code -1.
data::FrameTable load_raw_with_sidecar(const fs::path& frames_path,
                                       const data::PipelineSidecar& sidecar) {
    auto cells = csv_read(frames_path);
    data::FrameTable table;
    table.schema = sidecar.schema;
    table.label_names = sidecar.label_names;
    table.encoders = sidecar.encoders;
    if (cells.empty()) return table;

    std::vector<std::string> expected = sidecar.schema.names;
    expected.push_back("label");
    if (cells[0] != expected)
        throw SchemaMismatch("frame CSV header does not match the model's schema");

    std::map<std::string, int> label_index;
    for (std::size_t i = 0; i < sidecar.label_names.size(); ++i)
        label_index[sidecar.label_names[i]] = static_cast<int>(i);

    std::size_t f = sidecar.schema.size();
    for (std::size_t r = 1; r < cells.size(); ++r) {
        if (cells[r].size() != f + 1)
            throw SchemaMismatch("row " + std::to_string(r) + " has the wrong arity");
        std::vector<double> row(f);
        for (std::size_t c = 0; c < f; ++c) {
            if (sidecar.schema.kinds[c] == data::FeatureKind::Categorical) {
                auto enc = sidecar.encoders.find(c);
                int code = -1;
                if (enc != sidecar.encoders.end()) {
                    auto it = enc->second.find(cells[r][c]);
                    if (it != enc->second.end()) code = it->second;
                }
                row[c] = code;
            } else {
                row[c] = std::stod(cells[r][c]);
            }
        }
        auto li = label_index.find(cells[r][f]);
        if (li == label_index.end())
            throw SchemaMismatch("unknown label " + cells[r][f]);
        table.rows.push_back(std::move(row));
        table.labels.push_back(li->second);
    }
    return table;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& preset, const std::string& config_path,
                 const fs::path& out_dir, std::uint64_t seed) {
    std::vector<sim::NamedScenario> scenarios;
    json manifest{{"command", "simulate"}, {"seed", seed}};
    if (!config_path.empty()) {
        if (!fs::exists(config_path)) {
            std::cerr << "simulate: config file not found: " << config_path << '\n';
            return kExitBadArgs;
        }
        scenarios.push_back({"frames", sim::load_scenario_config(config_path)});
        manifest["inputs"] = {{config_path, file_hash_hex(config_path)}};
    } else if (preset == "paper-shape") {
        scenarios = sim::paper_shape_scenarios(seed);
        manifest["preset"] = preset;
    } else {
        std::cerr << "simulate: unknown preset: " << preset << '\n';
        return kExitBadArgs;
    }

    fs::create_directories(out_dir);
    json counts = json::object();
    for (const auto& [name, config] : scenarios) {
        auto frames = sim::run_scenario(config);
        fs::path csv = out_dir / (name + ".csv");
        std::size_t rows = data::export_frames(frames, data::default_schema(), csv);
        counts[name] = rows;
        std::cout << name << ": " << rows << " frames -> " << csv.string() << '\n';
    }
    manifest["frame_counts"] = counts;
    write_manifest(out_dir, manifest);
    return kExitOk;
}

int cmd_build_dataset(const std::vector<std::string>& inputs, const fs::path& out_dir,
                      const std::string& balance, std::uint64_t seed) {
    data::BalanceStrategy strategy;
    if (balance == "up") strategy = data::BalanceStrategy::Upsample;
    else if (balance == "down") strategy = data::BalanceStrategy::Downsample;
    else {
        std::cerr << "build-dataset: --balance must be 'up' or 'down'\n";
        return kExitBadArgs;
    }

    json manifest{{"command", "build-dataset"}, {"seed", seed}, {"balance", balance}};
    json input_hashes = json::object();
    std::vector<data::FrameTable> balanced;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        input_hashes[inputs[i]] = file_hash_hex(inputs[i]);
        data::FrameTable table = data::load_frame_csv(inputs[i]);
        balanced.push_back(data::balance_classes(table, strategy, seed + i));
    }
    manifest["inputs"] = input_hashes;

    data::FrameTable merged = data::merge_multiclass(balanced);
    auto [scaled, scaler] = data::scale_fit_transform(merged);

    data::PipelineSidecar sidecar;
    sidecar.schema = scaled.schema;
    sidecar.label_names = scaled.label_names;
    sidecar.encoders = scaled.encoders;
    sidecar.scaler = scaler;

    fs::create_directories(out_dir);
    data::save_dataset_csv(scaled, out_dir / "dataset.csv");
    atomic_write_file(out_dir / "pipeline.json", sidecar.to_json());
    manifest["rows"] = scaled.n_rows();
    write_manifest(out_dir, manifest);
    std::cout << "dataset: " << scaled.n_rows() << " rows, " << scaled.n_features()
              << " features -> " << (out_dir / "dataset.csv").string() << '\n';
    return kExitOk;
}

int cmd_select_features(const fs::path& data_path, const fs::path& sidecar_path,
                        std::size_t k, std::size_t folds, const fs::path& out_dir) {
    data::FrameTable table = data::load_dataset_csv(data_path);
    data::PipelineSidecar sidecar = data::PipelineSidecar::from_json(read_file(sidecar_path));

    fsel::SelectionResult ranked = fsel::mrmr_select(table, k);

    // Wrapper pass over the nested prefixes of the mRMR ranking.
    std::vector<std::vector<std::string>> prefixes;
    for (std::size_t i = 1; i <= ranked.selected.size(); ++i)
        prefixes.emplace_back(ranked.selected.begin(), ranked.selected.begin() + i);
    fsel::SelectionResult wrapped = fsel::wrapper_evaluate(table, prefixes, folds);

    sidecar.selected_features = wrapped.selected;
    fs::create_directories(out_dir);
    atomic_write_file(out_dir / "pipeline.json", sidecar.to_json());
    atomic_write_file(out_dir / "fim_report.csv", fsel::fim_report_csv(table, ranked));

    std::ostringstream wrap_csv;
    wrap_csv << "subset_size,features,cv_accuracy\n";
    for (std::size_t i = 0; i < wrapped.subsets.size(); ++i) {
        std::string joined;
        for (const auto& name : wrapped.subsets[i]) {
            if (!joined.empty()) joined += ';';
            joined += name;
        }
        wrap_csv << wrapped.subsets[i].size() << ',' << csv_escape(joined) << ','
                 << format_double(wrapped.wrapper_cv_accuracy[i]) << '\n';
    }
    atomic_write_file(out_dir / "wrapper_report.csv", wrap_csv.str());

    json manifest{{"command", "select-features"},
                  {"k", k},
                  {"folds", folds},
                  {"inputs",
                   {{data_path.string(), file_hash_hex(data_path)},
                    {sidecar_path.string(), file_hash_hex(sidecar_path)}}},
                  {"selected", wrapped.selected}};
    write_manifest(out_dir, manifest);

    std::cout << "selected:";
    for (const auto& name : wrapped.selected) std::cout << ' ' << name;
    std::cout << '\n';
    return kExitOk;
}

int cmd_train(const std::string& kind, const fs::path& data_path,
              const fs::path& sidecar_path, const fs::path& out_dir,
              const std::string& params_path, bool run_grid, std::size_t folds,
              double beta, std::size_t timesteps, double test_frac, std::uint64_t seed,
              std::size_t epochs_override, std::size_t batch_override) {
    data::FrameTable table = data::load_dataset_csv(data_path);
    data::PipelineSidecar sidecar = data::PipelineSidecar::from_json(read_file(sidecar_path));
    table = apply_selection(table, sidecar);

    fs::create_directories(out_dir);
    json manifest{{"command", "train"},
                  {"kind", kind},
                  {"seed", seed},
                  {"test_frac", test_frac},
                  {"inputs",
                   {{data_path.string(), file_hash_hex(data_path)},
                    {sidecar_path.string(), file_hash_hex(sidecar_path)}}}};

    if (kind == "gbdt") {
        auto [train_part, test_part] = data::split(table, test_frac, seed);

        gbdt::GbdtParams params;
        params.seed = seed;
        if (!params_path.empty()) {
            params = load_gbdt_params(params_path);
            manifest["inputs"][params_path] = file_hash_hex(params_path);
        }
        if (run_grid) {
            gbdt::GridResult grid = gbdt::grid_search(train_part,
                                                      gbdt::GridSpec::paper_grid(),
                                                      folds, seed);
            atomic_write_file(out_dir / "grid_report.csv", grid.report_csv);
            params = grid.best;
            params.seed = seed;
            manifest["grid_best_mlogloss"] = grid.best_mlogloss;
        }
        manifest["params"] = params_to_json(params);

        gbdt::Booster booster = gbdt::train(train_part, &test_part, params);
        booster.save(out_dir / "model.txt");
        atomic_write_file(out_dir / "history.csv", booster.history_csv());

        auto probs = booster.predict_proba(test_part.rows);
        auto batch = batch_from_probs(probs, test_part.labels, test_part.label_names,
                                      booster.label_names);
        auto report = metrics::full_report(batch, beta);
        atomic_write_file(out_dir / "metrics.csv", report.to_csv());
        std::cout << "test " << report.summary_line() << '\n';
    } else if (kind == "lstm" || kind == "gru") {
        rnn::NetworkSpec spec = kind == "lstm" ? rnn::NetworkSpec::lstm_desk()
                                               : rnn::NetworkSpec::gru_desk();
        spec.seed = seed;
        spec.fbeta_beta = beta;
        spec.classes = table.label_names.size();
        if (epochs_override) spec.epochs = epochs_override;
        if (batch_override) spec.batch_size = batch_override;

        data::WindowedTensor tensor = data::make_windows(table, timesteps);
        auto [train_tensor, test_tensor] = data::split(tensor, test_frac, seed);

        auto [net, result] = rnn::train_network(spec, train_tensor);
        rnn::save_network(*net, tensor.f, out_dir / "model.txt");
        atomic_write_file(out_dir / "history.csv", result.history_csv());
        manifest["epochs"] = spec.epochs;
        manifest["batch_size"] = spec.batch_size;

        metrics::PredictionBatch batch;
        batch.k = tensor.k;
        batch.n = test_tensor.n;
        batch.probs = rnn::predict(*net, test_tensor);
        batch.truth_onehot = test_tensor.labels_onehot;
        auto report = metrics::full_report(batch, beta);
        atomic_write_file(out_dir / "metrics.csv", report.to_csv());
        std::cout << "test " << report.summary_line() << '\n';
    } else {
        std::cerr << "train: kind must be gbdt, lstm, or gru\n";
        return kExitBadArgs;
    }
    write_manifest(out_dir, manifest);
    return kExitOk;
}

bool is_rnn_model(const fs::path& model_path) {
    std::ifstream in(model_path);
    std::string magic;
    in >> magic;
    if (magic == "mqttids-rnn") return true;
    if (magic == "mqttids-gbdt") return false;
    throw Error("not a recognized model file: " + model_path.string());
}

int cmd_evaluate(const fs::path& model_path, const fs::path& data_path,
                 const fs::path& sidecar_path, const fs::path& out_dir, double beta,
                 std::size_t timesteps) {
    data::FrameTable table = data::load_dataset_csv(data_path);
    data::PipelineSidecar sidecar = data::PipelineSidecar::from_json(read_file(sidecar_path));
    table = apply_selection(table, sidecar);

    metrics::PredictionBatch batch;
    if (is_rnn_model(model_path)) {
        std::size_t features = 0;
        auto net = rnn::load_network(model_path, &features);
        if (features != table.n_features())
            throw SchemaMismatch("model expects " + std::to_string(features) + " features");
        data::WindowedTensor tensor = data::make_windows(table, timesteps);
        batch.k = tensor.k;
        batch.n = tensor.n;
        batch.probs = rnn::predict(*net, tensor);
        batch.truth_onehot = tensor.labels_onehot;
    } else {
        gbdt::Booster booster = gbdt::Booster::load(model_path);
        auto probs = booster.predict_proba(table.rows);
        batch = batch_from_probs(probs, table.labels, table.label_names,
                                 booster.label_names);
    }
    auto report = metrics::full_report(batch, beta);
    fs::create_directories(out_dir);
    atomic_write_file(out_dir / "metrics.csv", report.to_csv());
    write_manifest(out_dir, json{{"command", "evaluate"},
                                 {"beta", beta},
                                 {"inputs",
                                  {{model_path.string(), file_hash_hex(model_path)},
                                   {data_path.string(), file_hash_hex(data_path)}}}});
    std::cout << report.summary_line() << '\n';
    return kExitOk;
}

int cmd_detect(const fs::path& model_path, const fs::path& sidecar_path,
               const fs::path& frames_path, const fs::path& out_path,
               std::size_t timesteps) {
    data::PipelineSidecar sidecar = data::PipelineSidecar::from_json(read_file(sidecar_path));
    data::FrameTable raw = load_raw_with_sidecar(frames_path, sidecar);
    data::FrameTable scaled = data::scale_apply(raw, sidecar.scaler);
    scaled = apply_selection(scaled, sidecar);

    std::vector<std::string> class_names;
    std::vector<double> probs;
    std::size_t n = 0;
    bool rnn_model = is_rnn_model(model_path);
    if (scaled.n_rows() == 0) {
        class_names = sidecar.label_names;
    } else if (rnn_model) {
        std::size_t features = 0;
        auto net = rnn::load_network(model_path, &features);
        if (features != scaled.n_features())
            throw SchemaMismatch("model expects " + std::to_string(features) + " features");
        if (scaled.n_rows() >= timesteps) {
            data::WindowedTensor tensor = data::make_windows(scaled, timesteps);
            probs = rnn::predict(*net, tensor);
            n = tensor.n;
        }
        class_names = data::canonical_label_names();
    } else {
        gbdt::Booster booster = gbdt::Booster::load(model_path);
        probs = booster.predict_proba(scaled.rows);
        n = scaled.n_rows();
        class_names = booster.label_names;
    }

    std::size_t k = class_names.size();
    std::ostringstream out;
    out << "row,predicted";
    for (const auto& name : class_names) out << ",p_" << name;
    out << '\n';
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pred = metrics::argmax_row(&probs[i * k], k);
        ++counts[pred];
        // window predictions refer to the final frame of each window
        std::size_t row = rnn_model ? i + timesteps - 1 : i;
        out << row << ',' << class_names[pred];
        for (std::size_t c = 0; c < k; ++c)
            out << ',' << format_double(probs[i * k + c]);
        out << '\n';
    }
    atomic_write_file(out_path, out.str());

    std::cout << "detect:";
    for (std::size_t c = 0; c < k; ++c) std::cout << ' ' << class_names[c] << '=' << counts[c];
    std::cout << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MQTT intrusion-detection toolkit"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Generate labeled attack traffic CSVs");
    std::string sim_preset = "paper-shape", sim_config;
    std::string sim_out = "out/sim";
    std::uint64_t sim_seed = 7;
    simulate->add_option("--preset", sim_preset, "Scenario preset");
    simulate->add_option("--config", sim_config, "Scenario config file (key=value)");
    simulate->add_option("--out", sim_out, "Output directory");
    simulate->add_option("--seed", sim_seed, "Base RNG seed");

    // build-dataset
    auto* build = app.add_subcommand("build-dataset",
                                     "Balance, merge, and scale frame CSVs");
    std::vector<std::string> build_inputs;
    std::string build_out = "out/dataset", build_balance = "up";
    std::uint64_t build_seed = 7;
    build->add_option("inputs", build_inputs, "Per-attack frame CSVs")->required();
    build->add_option("--out", build_out, "Output directory");
    build->add_option("--balance", build_balance, "up (resample minorities) or down");
    build->add_option("--seed", build_seed, "Balancing RNG seed");

    // select-features
    auto* select = app.add_subcommand("select-features",
                                      "Rank features (mRMR) and pick a subset by CV");
    std::string sel_data, sel_sidecar, sel_out = "out/features";
    std::size_t sel_k = 11, sel_folds = 3;
    select->add_option("--data", sel_data, "dataset.csv")->required();
    select->add_option("--sidecar", sel_sidecar, "pipeline.json")->required();
    select->add_option("-k,--k", sel_k, "Features to rank");
    select->add_option("--folds", sel_folds, "Wrapper CV folds");
    select->add_option("--out", sel_out, "Output directory");

    // train
    auto* train = app.add_subcommand("train", "Train a gbdt, lstm, or gru model");
    std::string train_kind, train_data, train_sidecar, train_params;
    std::string train_out = "out/model";
    bool train_grid = false;
    std::size_t train_folds = 3, train_timesteps = 4;
    std::size_t train_epochs = 0, train_batch = 0;
    double train_beta = 2.0, train_test_frac = 0.2;
    std::uint64_t train_seed = 7;
    train->add_option("kind", train_kind, "gbdt | lstm | gru")->required();
    train->add_option("--data", train_data, "dataset.csv")->required();
    train->add_option("--sidecar", train_sidecar, "pipeline.json")->required();
    train->add_option("--out", train_out, "Output directory");
    train->add_option("--params", train_params, "Parameter file (key=value, gbdt)");
    train->add_flag("--grid", train_grid, "Exhaustive grid search with k-fold CV (gbdt)");
    train->add_option("--folds", train_folds, "Grid CV folds");
    train->add_option("--beta", train_beta, "F-beta beta");
    train->add_option("--timesteps", train_timesteps, "Window length (lstm/gru)");
    train->add_option("--test-frac", train_test_frac, "Held-out test fraction");
    train->add_option("--seed", train_seed, "RNG seed");
    train->add_option("--epochs", train_epochs, "Override epochs (lstm/gru)");
    train->add_option("--batch-size", train_batch, "Override batch size (lstm/gru)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score a model on a dataset");
    std::string eval_model, eval_data, eval_sidecar, eval_out = "out/eval";
    double eval_beta = 2.0;
    std::size_t eval_timesteps = 4;
    evaluate->add_option("--model", eval_model, "Model file")->required();
    evaluate->add_option("--data", eval_data, "dataset.csv")->required();
    evaluate->add_option("--sidecar", eval_sidecar, "pipeline.json")->required();
    evaluate->add_option("--out", eval_out, "Output directory");
    evaluate->add_option("--beta", eval_beta, "F-beta beta");
    evaluate->add_option("--timesteps", eval_timesteps, "Window length (lstm/gru)");

    // detect
    auto* detect = app.add_subcommand("detect", "Classify raw frame CSV rows");
    std::string det_model, det_sidecar, det_frames, det_out = "predictions.csv";
    std::size_t det_timesteps = 4;
    detect->add_option("--model", det_model, "Model file")->required();
    detect->add_option("--sidecar", det_sidecar, "pipeline.json")->required();
    detect->add_option("--frames", det_frames, "Raw frame CSV")->required();
    detect->add_option("--out", det_out, "Predictions CSV path");
    detect->add_option("--timesteps", det_timesteps, "Window length (lstm/gru)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitBadArgs;
    }

    if (simulate->parsed())
        return guarded("simulate",
                       [&] { return cmd_simulate(sim_preset, sim_config, sim_out, sim_seed); });
    if (build->parsed())
        return guarded("build-dataset", [&] {
            return cmd_build_dataset(build_inputs, build_out, build_balance, build_seed);
        });
    if (select->parsed())
        return guarded("select-features", [&] {
            return cmd_select_features(sel_data, sel_sidecar, sel_k, sel_folds, sel_out);
        });
    if (train->parsed())
        return guarded("train", [&] {
            return cmd_train(train_kind, train_data, train_sidecar, train_out, train_params,
                             train_grid, train_folds, train_beta, train_timesteps,
                             train_test_frac, train_seed, train_epochs, train_batch);
        });
    if (evaluate->parsed())
        return guarded("evaluate", [&] {
            return cmd_evaluate(eval_model, eval_data, eval_sidecar, eval_out, eval_beta,
                                eval_timesteps);
        });
    if (detect->parsed())
        return guarded("detect", [&] {
            return cmd_detect(det_model, det_sidecar, det_frames, det_out, det_timesteps);
        });
    return kExitBadArgs;
}
