#include "mqttids/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mqttids/errors.hpp"
#include "mqttids/util.hpp"

namespace mqttids::metrics {

namespace {
constexpr double kClipEps = 1e-15;  // log loss is undefined at p = 0
}

void validate_batch(const PredictionBatch& batch) {
    if (batch.probs.size() != batch.n * batch.k ||
        batch.truth_onehot.size() != batch.n * batch.k)
        throw ShapeMismatch("prediction batch dimensions inconsistent");
    if (batch.k == 0) throw ShapeMismatch("batch has zero classes");
}

std::size_t argmax_row(const double* row, std::size_t k) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

double mlogloss(const PredictionBatch& batch) {
    validate_batch(batch);
    double sum = 0;
    for (std::size_t i = 0; i < batch.n; ++i) {
        for (std::size_t j = 0; j < batch.k; ++j) {
            double y = batch.truth(i, j);
            if (y != 0) {
                double p = std::clamp(batch.prob(i, j), kClipEps, 1.0 - kClipEps);
                sum -= y * std::log(p);
            }
        }
    }
    return batch.n ? sum / static_cast<double>(batch.n) : 0.0;
}

double merror(const PredictionBatch& batch) {
    validate_batch(batch);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < batch.n; ++i) {
        std::size_t pred = argmax_row(&batch.probs[i * batch.k], batch.k);
        std::size_t truth = argmax_row(&batch.truth_onehot[i * batch.k], batch.k);
        if (pred != truth) ++wrong;
    }
    return batch.n ? static_cast<double>(wrong) / static_cast<double>(batch.n) : 0.0;
}

double categorical_accuracy(const PredictionBatch& batch) {
    return 1.0 - merror(batch);
}

std::vector<std::size_t> confusion_matrix(const PredictionBatch& batch) {
    validate_batch(batch);
    std::vector<std::size_t> cm(batch.k * batch.k, 0);
    for (std::size_t i = 0; i < batch.n; ++i) {
        std::size_t pred = argmax_row(&batch.probs[i * batch.k], batch.k);
        std::size_t truth = argmax_row(&batch.truth_onehot[i * batch.k], batch.k);
        cm[truth * batch.k + pred]++;
    }
    return cm;
}

std::vector<double> precision_per_class(const std::vector<std::size_t>& cm, std::size_t k) {
    std::vector<double> p(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        std::size_t col = 0;
        for (std::size_t i = 0; i < k; ++i) col += cm[i * k + j];
        p[j] = col ? static_cast<double>(cm[j * k + j]) / static_cast<double>(col) : 0.0;
    }
    return p;
}

std::vector<double> recall_per_class(const std::vector<std::size_t>& cm, std::size_t k) {
    std::vector<double> r(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t row = 0;
        for (std::size_t j = 0; j < k; ++j) row += cm[i * k + j];
        r[i] = row ? static_cast<double>(cm[i * k + i]) / static_cast<double>(row) : 0.0;
    }
    return r;
}

namespace {
double fbeta_from_pr(double p, double r, double beta) {
    double denom = beta * beta * p + r;
    if (denom == 0) return 0.0;
    return (1.0 + beta * beta) * p * r / denom;
}
}  // namespace

double fbeta(const PredictionBatch& batch, double beta, Averaging averaging) {
    auto cm = confusion_matrix(batch);
    std::size_t k = batch.k;
    if (averaging == Averaging::Micro) {
        // pooled counts: tp over all classes, fp = fn = misclassifications
        std::size_t tp = 0, total = 0;
        for (std::size_t i = 0; i < k; ++i) tp += cm[i * k + i];
        for (auto c : cm) total += c;
        double p = total ? static_cast<double>(tp) / static_cast<double>(total) : 0.0;
        return fbeta_from_pr(p, p, beta);
    }
    auto prec = precision_per_class(cm, k);
    auto rec = recall_per_class(cm, k);
    double sum = 0;
    for (std::size_t i = 0; i < k; ++i) sum += fbeta_from_pr(prec[i], rec[i], beta);
    return sum / static_cast<double>(k);
}

MetricsReport full_report(const PredictionBatch& batch, double beta, Averaging averaging) {
    MetricsReport rep;
    rep.beta = beta;
    rep.averaging = averaging;
    rep.mlogloss = mlogloss(batch);
    rep.merror = merror(batch);
    rep.categorical_accuracy = 1.0 - rep.merror;
    rep.fbeta = fbeta(batch, beta, averaging);
    rep.confusion = confusion_matrix(batch);
    rep.precision = precision_per_class(rep.confusion, batch.k);
    rep.recall = recall_per_class(rep.confusion, batch.k);
    return rep;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << "metric,value\n";
    out << "mlogloss," << format_double(mlogloss) << "\n";
    out << "merror," << format_double(merror) << "\n";
    out << "categorical_accuracy," << format_double(categorical_accuracy) << "\n";
    out << "fbeta," << format_double(fbeta) << "\n";
    out << "beta," << format_double(beta) << "\n";
    out << "averaging," << (averaging == Averaging::Macro ? "macro" : "micro") << "\n";
    std::size_t k = precision.size();
    for (std::size_t i = 0; i < k; ++i)
        out << "precision_" << i << "," << format_double(precision[i]) << "\n";
    for (std::size_t i = 0; i < k; ++i)
        out << "recall_" << i << "," << format_double(recall[i]) << "\n";
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            out << "confusion_" << i << "_" << j << "," << confusion[i * k + j] << "\n";
    return out.str();
}

std::string MetricsReport::summary_line() const {
    std::ostringstream out;
    out << "mlogloss=" << format_double(mlogloss)
        << " merror=" << format_double(merror)
        << " categorical_accuracy=" << format_double(categorical_accuracy)
        << " fbeta=" << format_double(fbeta)
        << " beta=" << format_double(beta)
        << " averaging=" << (averaging == Averaging::Macro ? "macro" : "micro");
    return out.str();
}

}  // namespace mqttids::metrics
