#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mqttids::metrics {

// Rows are probability distributions over K classes; truth rows are one-hot.
struct PredictionBatch {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<double> probs;         // n*k, row-major
    std::vector<double> truth_onehot;  // n*k, row-major

    double prob(std::size_t i, std::size_t j) const { return probs[i * k + j]; }
    double truth(std::size_t i, std::size_t j) const { return truth_onehot[i * k + j]; }
};

enum class Averaging { Macro, Micro };

struct MetricsReport {
    double mlogloss = 0;
    double merror = 0;
    double categorical_accuracy = 0;
    double fbeta = 0;
    double beta = 2.0;
    Averaging averaging = Averaging::Macro;
    std::vector<double> precision;  // per class
    std::vector<double> recall;     // per class
    std::vector<std::size_t> confusion;  // k*k, row = true class, col = predicted

    std::string to_csv() const;
    std::string summary_line() const;  // single-line key=value form
};

// Ties in argmax go to the lowest class index.
std::size_t argmax_row(const double* row, std::size_t k);

double mlogloss(const PredictionBatch& batch);
double merror(const PredictionBatch& batch);
double categorical_accuracy(const PredictionBatch& batch);
double fbeta(const PredictionBatch& batch, double beta, Averaging averaging = Averaging::Macro);
std::vector<std::size_t> confusion_matrix(const PredictionBatch& batch);

// precision_k = diag/col sum, recall_k = diag/row sum, 0/0 -> 0
std::vector<double> precision_per_class(const std::vector<std::size_t>& confusion, std::size_t k);
std::vector<double> recall_per_class(const std::vector<std::size_t>& confusion, std::size_t k);

MetricsReport full_report(const PredictionBatch& batch, double beta = 2.0,
                          Averaging averaging = Averaging::Macro);

void validate_batch(const PredictionBatch& batch);

}  // namespace mqttids::metrics
