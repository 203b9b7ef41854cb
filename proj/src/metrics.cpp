#include "vitderm/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace vitderm {

const std::array<std::string, kNumClasses>& class_labels() {
    static const std::array<std::string, kNumClasses> labels = {
        "akiec", "bcc", "bkl", "df", "mel", "nv", "vasc"};
    return labels;
}

int class_id(const std::string& dx) {
    const auto& labels = class_labels();
    for (int i = 0; i < kNumClasses; ++i)
        if (labels[i] == dx) return i;
    throw DataError("unknown dx label: '" + dx + "'");
}

int64_t ConfusionMatrix::total() const {
    int64_t s = 0;
    for (const auto& row : counts)
        for (int64_t v : row) s += v;
    return s;
}

int64_t ConfusionMatrix::trace() const {
    int64_t s = 0;
    for (int i = 0; i < kNumClasses; ++i) s += counts[i][i];
    return s;
}

int64_t ConfusionMatrix::row_sum(int c) const {
    int64_t s = 0;
    for (int64_t v : counts[c]) s += v;
    return s;
}

int64_t ConfusionMatrix::col_sum(int c) const {
    int64_t s = 0;
    for (int i = 0; i < kNumClasses; ++i) s += counts[i][c];
    return s;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& preds,
                                 const std::vector<int>& labels) {
    if (preds.size() != labels.size())
        throw DataError("confusion_matrix: " + std::to_string(preds.size()) +
                        " predictions vs " + std::to_string(labels.size()) + " labels");
    ConfusionMatrix cm;
    for (size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i], t = labels[i];
        if (p < 0 || p >= kNumClasses || t < 0 || t >= kNumClasses)
            throw DataError("confusion_matrix: class id out of range at index " +
                            std::to_string(i));
        ++cm.counts[t][p];
    }
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    const int64_t n = cm.total();
    if (n == 0) throw DataError("accuracy: empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

std::optional<double> recall(const ConfusionMatrix& cm, int cls) {
    if (cls < 0 || cls >= kNumClasses)
        throw DataError("recall: class id out of range");
    const int64_t row = cm.row_sum(cls);
    if (row == 0) return std::nullopt;
    return static_cast<double>(cm.counts[cls][cls]) / static_cast<double>(row);
}

std::string format_percent(double fraction) {
    // round half up at 2 decimals
    const double scaled = fraction * 10000.0;
    const double rounded = std::floor(scaled + 0.5);
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << rounded / 100.0 << "%";
    return os.str();
}

std::vector<ReportRow> reference_rows() {
    return {
        {"DTC", 0.6106, 0.2478, true},
        {"KNN", 0.6545, 0.0619, true},
        {"ViT_B32", 0.7473, 0.4103, true},
        {"ViT_B16", 0.8188, 0.1795, true},
        {"CNN", 0.9051, 0.5757, true},
    };
}

namespace {

std::string pad_left(const std::string& s, size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

} // namespace

std::string report(const ConfusionMatrix& cm, const std::vector<ReportRow>& extra_rows) {
    const auto& labels = class_labels();
    std::ostringstream os;
    os << "Confusion matrix (rows = true class, columns = predicted class)\n\n";

    size_t cell = 6;
    for (const auto& l : labels) cell = std::max(cell, l.size() + 1);
    os << pad_right("", 7);
    for (const auto& l : labels) os << pad_left(l, cell);
    os << pad_left("recall", cell + 4) << "\n";
    for (int t = 0; t < kNumClasses; ++t) {
        os << pad_right(labels[t], 7);
        for (int p = 0; p < kNumClasses; ++p)
            os << pad_left(std::to_string(cm.counts[t][p]), cell);
        const auto r = recall(cm, t);
        os << pad_left(r ? format_percent(*r) : "n/a", cell + 4) << "\n";
    }
    os << "\nAccuracy: " << format_percent(accuracy(cm)) << "\n";

    os << "\nModel comparison (melanoma recall)\n";
    os << pad_right("Model", 12) << pad_left("Accuracy", 10) << pad_left("Recall", 10)
       << "  Source\n";
    auto emit = [&](const ReportRow& row) {
        os << pad_right(row.model, 12) << pad_left(format_percent(row.accuracy), 10)
           << pad_left(row.recall ? format_percent(*row.recall) : "n/a", 10) << "  "
           << (row.reference ? "reference" : "measured") << "\n";
    };
    for (const auto& row : extra_rows) emit(row);
    for (const auto& row : reference_rows()) emit(row);
    return os.str();
}

std::string report_csv(const ConfusionMatrix& cm) {
    const auto& labels = class_labels();
    std::ostringstream os;
    os << "label,support,recall\n";
    for (int c = 0; c < kNumClasses; ++c) {
        const auto r = recall(cm, c);
        os << labels[c] << ',' << cm.row_sum(c) << ',';
        if (r)
            os << std::fixed << std::setprecision(6) << *r;
        else
            os << "n/a";
        os << '\n';
    }
    os << "accuracy,," << std::fixed << std::setprecision(6) << accuracy(cm) << '\n';
    return os.str();
}

std::string grid_file(const ConfusionMatrix& cm) {
    std::ostringstream os;
    for (int t = 0; t < kNumClasses; ++t) {
        for (int p = 0; p < kNumClasses; ++p) {
            if (p) os << ' ';
            os << cm.counts[t][p];
        }
        os << '\n';
    }
    return os.str();
}

} // namespace vitderm
