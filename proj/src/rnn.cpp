#include "mqttids/rnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mqttids/errors.hpp"
#include "mqttids/metrics.hpp"
#include "mqttids/util.hpp"

namespace mqttids::rnn {

void NetworkSpec::validate() const {
    if (layers.empty()) throw Error("network needs at least one recurrent layer");
    for (const auto& l : layers) {
        if (l.width == 0) throw Error("recurrent layer width must be positive");
        if (!(l.dropout >= 0.0 && l.dropout < 1.0))
            throw Error("dropout rate must lie in [0, 1)");
    }
    if (classes < 2) throw Error("need at least two classes");
    if (batch_size == 0) throw Error("batch size must be positive");
    if (!(validation_split > 0.0 && validation_split < 1.0))
        throw Error("validation split must lie in (0, 1)");
}

NetworkSpec NetworkSpec::lstm_desk() {
    NetworkSpec spec;
    spec.cell = CellKind::Lstm;
    spec.layers = {{32, true, 0.3}, {32, true, 0.0}, {64, true, 0.4}, {64, true, 0.0}};
    spec.batch_size = 128;
    spec.epochs = 15;
    return spec;
}

NetworkSpec NetworkSpec::gru_desk() {
    NetworkSpec spec;
    spec.cell = CellKind::Gru;
    spec.layers = {{32, true, 0.2}, {64, true, 0.0}, {64, true, 0.3}, {64, true, 0.0}};
    spec.batch_size = 256;
    spec.epochs = 17;
    return spec;
}

std::string TrainResult::history_csv() const {
    std::ostringstream out;
    out << "epoch,loss,val_loss,cat_acc,val_cat_acc,fbeta,val_fbeta\n";
    for (std::size_t e = 0; e < history.size(); ++e) {
        const EpochMetrics& m = history[e];
        out << (e + 1) << ',' << format_double(m.loss) << ',' << format_double(m.val_loss)
            << ',' << format_double(m.cat_acc) << ',' << format_double(m.val_cat_acc)
            << ',' << format_double(m.fbeta) << ',' << format_double(m.val_fbeta) << '\n';
    }
    return out.str();
}

namespace {

using FMat = Mat<float>;
using FSeq = Seq<float>;

FSeq make_batch(const data::WindowedTensor& tensor, const std::vector<std::size_t>& idx,
                std::size_t begin, std::size_t end, FMat* truth) {
    std::size_t batch = end - begin;
    FSeq xs(tensor.t, FMat(batch, tensor.f));
    if (truth) *truth = FMat(batch, tensor.k);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t w = idx[begin + b];
        for (std::size_t t = 0; t < tensor.t; ++t)
            for (std::size_t f = 0; f < tensor.f; ++f)
                xs[t](b, f) = static_cast<float>(tensor.at(w, t, f));
        if (truth)
            for (std::size_t c = 0; c < tensor.k; ++c)
                (*truth)(b, c) = static_cast<float>(tensor.labels_onehot[w * tensor.k + c]);
    }
    return xs;
}

void append_batch(metrics::PredictionBatch& acc, const FMat& probs, const FMat& truth) {
    acc.k = static_cast<std::size_t>(probs.cols());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
            acc.probs.push_back(static_cast<double>(probs(r, c)));
            acc.truth_onehot.push_back(static_cast<double>(truth(r, c)));
        }
        ++acc.n;
    }
}

EpochMetrics score_epoch(const metrics::PredictionBatch& train,
                         const metrics::PredictionBatch& valid, double beta) {
    EpochMetrics m;
    m.loss = metrics::mlogloss(train);
    m.cat_acc = metrics::categorical_accuracy(train);
    m.fbeta = metrics::fbeta(train, beta);
    m.val_loss = metrics::mlogloss(valid);
    m.val_cat_acc = metrics::categorical_accuracy(valid);
    m.val_fbeta = metrics::fbeta(valid, beta);
    return m;
}

metrics::PredictionBatch infer_pass(Network<float>& net, const data::WindowedTensor& tensor,
                                    const std::vector<std::size_t>& idx) {
    metrics::PredictionBatch acc;
    constexpr std::size_t kChunk = 512;
    for (std::size_t begin = 0; begin < idx.size(); begin += kChunk) {
        std::size_t end = std::min(begin + kChunk, idx.size());
        FMat truth;
        FSeq xs = make_batch(tensor, idx, begin, end, &truth);
        FMat probs = net.forward(xs, Mode::Infer);
        append_batch(acc, probs, truth);
    }
    return acc;
}

}  // namespace

TrainResult train_network(Network<float>& net, const data::WindowedTensor& tensor) {
    const NetworkSpec& spec = net.spec();
    if (tensor.n == 0) throw TooFewRows("empty training tensor");
    if (tensor.k != spec.classes) throw ShapeMismatch("tensor class count mismatch");

    auto val_n = static_cast<std::size_t>(
        std::floor(static_cast<double>(tensor.n) * spec.validation_split));
    std::size_t train_n = tensor.n - val_n;
    if (train_n == 0) throw TooFewRows("validation split leaves no training windows");

    std::vector<std::size_t> train_idx(train_n), val_idx(val_n);
    std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
    std::iota(val_idx.begin(), val_idx.end(), train_n);

    Nadam<float> optimizer;
    auto params = net.params();
    optimizer.attach(params);

    std::mt19937_64 shuffle_rng(spec.seed ^ 0xA5A5A5A55A5A5A5Aull);

    TrainResult result;
    result.spec = spec;
    for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);

        metrics::PredictionBatch train_acc;
        std::size_t batch_no = 0;
        for (std::size_t begin = 0; begin < train_n; begin += spec.batch_size, ++batch_no) {
            std::size_t end = std::min(begin + spec.batch_size, train_n);
            FMat truth;
            FSeq xs = make_batch(tensor, train_idx, begin, end, &truth);

            FMat probs = net.forward(xs, Mode::Train);
            net.zero_grads();
            double loss = net.backward(truth, tensor.t);
            if (!std::isfinite(loss))
                throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                    ", batch " + std::to_string(batch_no + 1));
            optimizer.step(params);
            append_batch(train_acc, probs, truth);
        }

        metrics::PredictionBatch val_acc = infer_pass(net, tensor, val_idx);
        result.history.push_back(score_epoch(train_acc, val_acc, spec.fbeta_beta));
    }
    return result;
}

std::pair<std::unique_ptr<Network<float>>, TrainResult> train_network(
    const NetworkSpec& spec, const data::WindowedTensor& tensor) {
    auto net = std::make_unique<Network<float>>(spec, tensor.f);
    TrainResult result = train_network(*net, tensor);
    return {std::move(net), std::move(result)};
}

std::vector<double> predict(Network<float>& net, const data::WindowedTensor& tensor) {
    std::vector<std::size_t> idx(tensor.n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    metrics::PredictionBatch batch = infer_pass(net, tensor, idx);
    return batch.probs;
}

namespace {

void write_tensor(std::ostringstream& out, const std::string& name, const FMat& m) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << ' ';
            out << format_double(static_cast<double>(m(r, c)));
        }
        out << '\n';
    }
}

FMat read_tensor(std::istringstream& in, const std::string& expected_name) {
    std::string tok, name;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> tok >> name >> rows >> cols) || tok != "tensor" || name != expected_name)
        throw Error("model file: expected tensor " + expected_name);
    FMat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            double v;
            if (!(in >> v)) throw Error("model file: truncated tensor " + expected_name);
            m(r, c) = static_cast<float>(v);
        }
    return m;
}

// All serialized tensors in a fixed order: trainable parameters, then the
// batchnorm running statistics per normalized layer.
std::vector<std::pair<std::string, FMat*>> tensor_slots(Network<float>& net) {
    std::vector<std::pair<std::string, FMat*>> slots;
    for (auto& p : net.params()) slots.emplace_back(p.name, p.value);
    auto& blocks = net.blocks();
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        if (!blocks[bi].bn) continue;
        std::string prefix = "layer" + std::to_string(bi) + ".";
        slots.emplace_back(prefix + "running_mean", &blocks[bi].bn->running_mean());
        slots.emplace_back(prefix + "running_var", &blocks[bi].bn->running_var());
    }
    return slots;
}

}  // namespace

std::string serialize(Network<float>& net, std::size_t features) {
    const NetworkSpec& spec = net.spec();
    std::ostringstream out;
    out << "mqttids-rnn version 1\n";
    out << "cell " << (spec.cell == CellKind::Lstm ? "lstm" : "gru") << '\n';
    out << "features " << features << '\n';
    out << "classes " << spec.classes << '\n';
    out << "batch_size " << spec.batch_size << '\n';
    out << "epochs " << spec.epochs << '\n';
    out << "validation_split " << format_double(spec.validation_split) << '\n';
    out << "fbeta_beta " << format_double(spec.fbeta_beta) << '\n';
    out << "seed " << spec.seed << '\n';
    out << "layers " << spec.layers.size() << '\n';
    for (const auto& l : spec.layers)
        out << "layer " << l.width << ' ' << (l.batchnorm ? 1 : 0) << ' '
            << format_double(l.dropout) << '\n';
    for (auto& [name, value] : tensor_slots(net)) write_tensor(out, name, *value);
    return out.str();
}

std::unique_ptr<Network<float>> deserialize(const std::string& text,
                                            std::size_t* features_out) {
    std::istringstream in(text);
    std::string magic, version_word;
    int version = 0;
    if (!(in >> magic >> version_word >> version) || magic != "mqttids-rnn" ||
        version_word != "version" || version != 1)
        throw Error("not a recognized model file");

    NetworkSpec spec;
    std::size_t features = 0, n_layers = 0;
    std::string key;
    while (in >> key) {
        if (key == "cell") {
            std::string kind;
            in >> kind;
            if (kind == "lstm")
                spec.cell = CellKind::Lstm;
            else if (kind == "gru")
                spec.cell = CellKind::Gru;
            else
                throw Error("model file: unknown cell kind " + kind);
        } else if (key == "features") {
            in >> features;
        } else if (key == "classes") {
            in >> spec.classes;
        } else if (key == "batch_size") {
            in >> spec.batch_size;
        } else if (key == "epochs") {
            in >> spec.epochs;
        } else if (key == "validation_split") {
            in >> spec.validation_split;
        } else if (key == "fbeta_beta") {
            in >> spec.fbeta_beta;
        } else if (key == "seed") {
            in >> spec.seed;
        } else if (key == "layers") {
            in >> n_layers;
            break;
        } else {
            throw Error("model file: unknown field " + key);
        }
    }
    for (std::size_t i = 0; i < n_layers; ++i) {
        std::string tok;
        LayerSpec ls;
        int bn = 0;
        if (!(in >> tok >> ls.width >> bn >> ls.dropout) || tok != "layer")
            throw Error("model file: malformed layer line");
        ls.batchnorm = bn != 0;
        spec.layers.push_back(ls);
    }
    if (features == 0) throw Error("model file: missing feature count");

    auto net = std::make_unique<Network<float>>(spec, features);
    for (auto& [name, value] : tensor_slots(*net)) {
        FMat loaded = read_tensor(in, name);
        if (loaded.rows() != value->rows() || loaded.cols() != value->cols())
            throw ShapeMismatch("model file: tensor " + name + " has the wrong shape");
        *value = loaded;
    }
    if (features_out) *features_out = features;
    return net;
}

void save_network(Network<float>& net, std::size_t features,
                  const std::filesystem::path& path) {
    atomic_write_file(path, serialize(net, features));
}

std::unique_ptr<Network<float>> load_network(const std::filesystem::path& path,
                                             std::size_t* features_out) {
    return deserialize(read_file(path), features_out);
}

}  // namespace mqttids::rnn
