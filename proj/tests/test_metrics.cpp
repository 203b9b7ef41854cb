#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "vitderm/metrics.hpp"

using namespace vitderm;

namespace {

ConfusionMatrix random_cm(std::mt19937_64& rng, std::vector<int>* preds_out = nullptr,
                          std::vector<int>* labels_out = nullptr, int n = 1000) {
    std::uniform_int_distribution<int> cls(0, kNumClasses - 1);
    std::vector<int> preds(n), labels(n);
    for (int i = 0; i < n; ++i) {
        preds[i] = cls(rng);
        labels[i] = cls(rng);
    }
    if (preds_out) *preds_out = preds;
    if (labels_out) *labels_out = labels;
    return confusion_matrix(preds, labels);
}

} // namespace

TEST_CASE("class ids are alphabetical") {
    CHECK(class_id("akiec") == 0);
    CHECK(class_id("bcc") == 1);
    CHECK(class_id("bkl") == 2);
    CHECK(class_id("df") == 3);
    CHECK(class_id("mel") == 4);
    CHECK(class_id("nv") == 5);
    CHECK(class_id("vasc") == 6);
    CHECK_THROWS_AS(class_id("xyz"), DataError);
}

TEST_CASE("perfect predictions fill the diagonal") {
    std::vector<int> labels = {0, 1, 2, 3, 4, 5, 6, 0, 1, 2};
    ConfusionMatrix cm = confusion_matrix(labels, labels);
    CHECK(cm.trace() == 10);
    CHECK(cm.total() == 10);
    CHECK(accuracy(cm) == 1.0);
}

TEST_CASE("cyclically shifted predictions have a zero diagonal") {
    std::vector<int> labels = {0, 1, 2, 3, 4, 5, 6};
    std::vector<int> preds;
    for (int l : labels) preds.push_back((l + 1) % kNumClasses);
    ConfusionMatrix cm = confusion_matrix(preds, labels);
    CHECK(cm.trace() == 0);
    CHECK(accuracy(cm) == 0.0);
}

TEST_CASE("confusion matrix matches a naive double-loop oracle") {
    std::mt19937_64 rng(101);
    std::vector<int> preds, labels;
    ConfusionMatrix cm = random_cm(rng, &preds, &labels);
    for (int t = 0; t < kNumClasses; ++t)
        for (int p = 0; p < kNumClasses; ++p) {
            int64_t count = 0;
            for (size_t i = 0; i < preds.size(); ++i)
                if (labels[i] == t && preds[i] == p) ++count;
            CHECK(cm.counts[t][p] == count);
        }
}

TEST_CASE("out-of-range ids are data errors") {
    CHECK_THROWS_AS(confusion_matrix({7}, {0}), DataError);
    CHECK_THROWS_AS(confusion_matrix({0}, {-1}), DataError);
    CHECK_THROWS_AS(confusion_matrix({0, 1}, {0}), DataError);
}

TEST_CASE("accuracy equals trace over total and matches the brute-force count") {
    ConfusionMatrix cm;
    cm.counts[0][0] = 61;
    cm.counts[1][2] = 39;
    CHECK(accuracy(cm) == doctest::Approx(0.61).epsilon(1e-15));

    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> preds, labels;
        ConfusionMatrix m = random_cm(rng, &preds, &labels, 500);
        int64_t correct = 0;
        for (size_t i = 0; i < preds.size(); ++i)
            if (preds[i] == labels[i]) ++correct;
        CHECK(accuracy(m) == static_cast<double>(correct) / 500.0);
    }
}

TEST_CASE("accuracy of an empty matrix is an error") {
    ConfusionMatrix cm;
    CHECK_THROWS_AS(accuracy(cm), DataError);
}

TEST_CASE("the published melanoma recalls come from 24/41 and 23/41") {
    // enumeration oracle: the smallest denominator n where some k1/n rounds
    // to 58.54% and some k2/n rounds to 56.10%
    int found_n = 0, found_k1 = 0, found_k2 = 0;
    for (int n = 1; n <= 200 && found_n == 0; ++n) {
        int k1 = -1, k2 = -1;
        for (int k = 0; k <= n; ++k) {
            const std::string f = format_percent(static_cast<double>(k) / n);
            if (f == "58.54%") k1 = k;
            if (f == "56.10%") k2 = k;
        }
        if (k1 >= 0 && k2 >= 0) {
            found_n = n;
            found_k1 = k1;
            found_k2 = k2;
        }
    }
    CHECK(found_n == 41);
    CHECK(found_k1 == 24);  // TP=24, FN=17
    CHECK(found_k2 == 23);  // TP=23, FN=18

    ConfusionMatrix l32;
    l32.counts[4][4] = 24;
    l32.counts[4][5] = 17;
    CHECK(format_percent(*recall(l32, 4)) == "58.54%");

    ConfusionMatrix l16;
    l16.counts[4][4] = 23;
    l16.counts[4][5] = 18;
    CHECK(format_percent(*recall(l16, 4)) == "56.10%");
}

TEST_CASE("recall edge cases") {
    ConfusionMatrix cm;
    cm.counts[2][0] = 5;  // zero true positives with actual cases
    CHECK(*recall(cm, 2) == 0.0);
    CHECK_FALSE(recall(cm, 3).has_value());  // no actual cases -> undefined
}

TEST_CASE("weighted-recall identity") {
    std::mt19937_64 rng(107);
    for (int trial = 0; trial < 20; ++trial) {
        ConfusionMatrix cm = random_cm(rng);
        double weighted = 0.0;
        for (int c = 0; c < kNumClasses; ++c) {
            const auto r = recall(cm, c);
            if (r)
                weighted += *r * static_cast<double>(cm.row_sum(c)) /
                            static_cast<double>(cm.total());
        }
        CHECK(std::abs(weighted - accuracy(cm)) < 1e-12);
    }
}

TEST_CASE("joint permutation of predictions and labels leaves the matrix unchanged") {
    std::mt19937_64 rng(109);
    std::vector<int> preds, labels;
    ConfusionMatrix cm = random_cm(rng, &preds, &labels, 300);
    std::vector<size_t> perm(preds.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> p2(preds.size()), l2(labels.size());
    for (size_t i = 0; i < perm.size(); ++i) {
        p2[i] = preds[perm[i]];
        l2[i] = labels[perm[i]];
    }
    ConfusionMatrix cm2 = confusion_matrix(p2, l2);
    CHECK(cm.counts == cm2.counts);
}

TEST_CASE("one-vs-rest reduction satisfies the accuracy formula") {
    std::mt19937_64 rng(113);
    std::vector<int> preds, labels;
    ConfusionMatrix cm = random_cm(rng, &preds, &labels, 400);
    for (int c = 0; c < kNumClasses; ++c) {
        const int64_t tp = cm.counts[c][c];
        const int64_t fn = cm.row_sum(c) - tp;
        const int64_t fp = cm.col_sum(c) - tp;
        const int64_t tn = cm.total() - tp - fn - fp;
        const double eq3 = static_cast<double>(tp + tn) /
                           static_cast<double>(tp + tn + fp + fn);
        int64_t agree = 0;
        for (size_t i = 0; i < preds.size(); ++i)
            if ((preds[i] == c) == (labels[i] == c)) ++agree;
        CHECK(eq3 == doctest::Approx(static_cast<double>(agree) / 400.0).epsilon(1e-15));
    }
}

TEST_CASE("percent formatting uses two decimals, round half up") {
    CHECK(format_percent(1.0) == "100.00%");
    CHECK(format_percent(0.0) == "0.00%");
    CHECK(format_percent(24.0 / 41.0) == "58.54%");
    CHECK(format_percent(23.0 / 41.0) == "56.10%");  // trailing zero kept
    CHECK(format_percent(0.6106) == "61.06%");
    CHECK(format_percent(0.585449) == "58.54%");
    CHECK(format_percent(0.585451) == "58.55%");
}

TEST_CASE("report carries the grid, recalls, accuracy and reference constants") {
    std::vector<int> labels;
    for (int c = 0; c < kNumClasses; ++c)
        for (int i = 0; i < 3; ++i) labels.push_back(c);
    ConfusionMatrix cm = confusion_matrix(labels, labels);

    std::vector<ReportRow> measured = {{"ViT_tiny", accuracy(cm), recall(cm, 4), false}};
    const std::string text = report(cm, measured);
    CHECK(text.find("Accuracy: 100.00%") != std::string::npos);
    CHECK(text.find("ViT_tiny") != std::string::npos);
    CHECK(text.find("measured") != std::string::npos);
    // reference rows from the published comparison
    CHECK(text.find("61.06%") != std::string::npos);   // DTC accuracy
    CHECK(text.find("24.78%") != std::string::npos);   // DTC recall
    CHECK(text.find("65.45%") != std::string::npos);   // KNN
    CHECK(text.find("6.19%") != std::string::npos);
    CHECK(text.find("74.73%") != std::string::npos);   // ViT_B32
    CHECK(text.find("41.03%") != std::string::npos);
    CHECK(text.find("81.88%") != std::string::npos);   // ViT_B16
    CHECK(text.find("17.95%") != std::string::npos);
    CHECK(text.find("90.51%") != std::string::npos);   // CNN
    CHECK(text.find("57.57%") != std::string::npos);
    CHECK(text.find("reference") != std::string::npos);
}

TEST_CASE("undefined recall renders as n/a, not zero") {
    ConfusionMatrix cm;
    cm.counts[0][0] = 4;  // only akiec present
    const std::string text = report(cm, {});
    CHECK(text.find("n/a") != std::string::npos);
    const std::string csv = report_csv(cm);
    CHECK(csv.find("mel,0,n/a") != std::string::npos);
}

TEST_CASE("csv and grid outputs") {
    std::vector<int> labels = {0, 1, 2, 3, 4, 5, 6};
    ConfusionMatrix cm = confusion_matrix(labels, labels);
    const std::string csv = report_csv(cm);
    CHECK(csv.find("label,support,recall") == 0);
    CHECK(csv.find("akiec,1,1.000000") != std::string::npos);
    CHECK(csv.find("accuracy,,1.000000") != std::string::npos);

    const std::string grid = grid_file(cm);
    int lines = 0;
    for (char ch : grid)
        if (ch == '\n') ++lines;
    CHECK(lines == 7);
    CHECK(grid.find("1 0 0 0 0 0 0") == 0);
}
