#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mqttids/frame_table.hpp"
#include "mqttids/rnn/network.hpp"

namespace mqttids::rnn {

struct EpochMetrics {
    double loss = 0;
    double val_loss = 0;
    double cat_acc = 0;
    double val_cat_acc = 0;
    double fbeta = 0;
    double val_fbeta = 0;
};

struct TrainResult {
    NetworkSpec spec;
    std::vector<EpochMetrics> history;

    std::string history_csv() const;
};

// Minibatch BPTT with Nadam and categorical cross entropy. The validation set
// is the trailing `validation_split` fraction of the tensor; training metrics
// are batch-weighted averages over the epoch, validation metrics come from a
// full inference pass at each epoch end.
TrainResult train_network(Network<float>& net, const data::WindowedTensor& tensor);

// Convenience: build + train in one call.
std::pair<std::unique_ptr<Network<float>>, TrainResult> train_network(
    const NetworkSpec& spec, const data::WindowedTensor& tensor);

// Row-major N x classes probabilities, evaluated in inference mode.
std::vector<double> predict(Network<float>& net, const data::WindowedTensor& tensor);

// Structured-text model file: spec, weight tensors (row-major with shapes),
// batchnorm running statistics, version field.
std::string serialize(Network<float>& net, std::size_t features);
std::unique_ptr<Network<float>> deserialize(const std::string& text,
                                            std::size_t* features_out = nullptr);
void save_network(Network<float>& net, std::size_t features,
                  const std::filesystem::path& path);
std::unique_ptr<Network<float>> load_network(const std::filesystem::path& path,
                                             std::size_t* features_out = nullptr);

}  // namespace mqttids::rnn
