#include <doctest.h>

#include <random>
#include <sstream>

#include "wildal/error.hpp"
#include "wildal/metrics.hpp"

using namespace wildal;

TEST_CASE("two-class hand-computed report") {
    LabelSpace labels({"empty", "fox"});
    ConfusionMatrix cm(labels);
    cm.at(0, 0) = 8;
    cm.at(0, 1) = 2;
    cm.at(1, 0) = 4;
    cm.at(1, 1) = 6;
    auto r = report(cm);
    CHECK(std::abs(r.accuracy - 0.7) < 1e-12);
    CHECK(std::abs(r.per_class[0].precision - 8.0 / 12.0) < 1e-12);
    CHECK(std::abs(r.per_class[1].precision - 6.0 / 8.0) < 1e-12);
    CHECK(std::abs(r.per_class[0].recall - 0.8) < 1e-12);
    CHECK(std::abs(r.per_class[1].recall - 0.6) < 1e-12);
    CHECK(std::abs(r.per_class[0].f1 - 16.0 / 22.0) < 1e-12);
    // 2tp / (2tp + fp + fn) = 12 / 18
    CHECK(std::abs(r.per_class[1].f1 - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(r.weighted_f1 - (10 * 16.0 / 22.0 + 10 * 2.0 / 3.0) / 20) < 1e-12);
    CHECK(r.weighted_recall == r.accuracy);
}

TEST_CASE("perfect predictions") {
    LabelSpace labels({"empty", "fox"});
    ConfusionMatrix cm(labels);
    cm.at(0, 0) = 5;
    cm.at(1, 1) = 5;
    auto r = report(cm);
    CHECK(r.accuracy == 1.0);
    CHECK(r.per_class[0].f1 == 1.0);
    CHECK(r.per_class[1].f1 == 1.0);
}

TEST_CASE("class without support gets zero weight") {
    LabelSpace labels({"empty", "fox", "deer"});
    ConfusionMatrix cm(labels);
    cm.at(0, 0) = 3;
    cm.at(1, 1) = 1;
    cm.at(1, 0) = 1;
    auto r = report(cm);
    CHECK(r.per_class[2].support == 0);
    CHECK(r.per_class[2].recall == 0.0);
    CHECK(r.per_class[2].precision == 0.0);
    CHECK(r.per_class[2].f1 == 0.0);
    const double f0 = 2 * (0.75 * 1.0) / 1.75, f1 = 2 * (1.0 * 0.5) / 1.5;
    CHECK(std::abs(r.weighted_f1 - (3 * f0 + 2 * f1) / 5) < 1e-12);
}

TEST_CASE("confusion tallies by name") {
    LabelSpace labels({"empty", "fox", "deer"});
    std::vector<std::string> truth{"fox", "fox", "deer", "empty", "deer", "deer"};
    std::vector<std::string> pred{"fox", "deer", "deer", "fox", "empty", "deer"};
    auto cm = confusion(truth, pred, labels);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(1, 2) == 1);
    CHECK(cm.at(2, 2) == 2);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(2, 0) == 1);
    CHECK(cm.total() == 6);

    // deer -> fox stays on the non-empty diagonal after collapsing
    auto c2 = collapse_empty(cm);
    CHECK(c2.classes() == 2);
    CHECK(c2.at(0, 0) == 0);
    CHECK(c2.at(0, 1) == 1);
    CHECK(c2.at(1, 0) == 1);
    CHECK(c2.at(1, 1) == 4);
}

TEST_CASE("all predicted empty fills one column") {
    LabelSpace labels({"empty", "fox", "deer"});
    std::vector<std::string> truth{"fox", "deer", "empty"};
    std::vector<std::string> pred(3, "empty");
    auto cm = confusion(truth, pred, labels);
    CHECK(cm.column_sum(0) == 3);
    CHECK(cm.column_sum(1) + cm.column_sum(2) == 0);
}

TEST_CASE("errors") {
    LabelSpace labels({"empty", "fox"});
    std::vector<std::string> a{"fox"}, b{"fox", "empty"}, wolf{"wolf"};
    CHECK_THROWS_AS(confusion(a, b, labels), Error);
    try {
        confusion(wolf, a, labels);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnknownLabel);
    }
    try {
        report(ConfusionMatrix(labels));
        FAIL("expected EmptyMatrix");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptyMatrix);
    }
}

TEST_CASE("random matrices: identities and permutation invariance") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 300; ++t) {
        const std::size_t g = 2 + rng() % 6;
        std::vector<std::string> names{"empty"};
        for (std::size_t k = 1; k < g; ++k) names.push_back("c" + std::to_string(k));
        LabelSpace labels(names);
        ConfusionMatrix cm(labels);
        for (std::size_t i = 0; i < g; ++i)
            for (std::size_t j = 0; j < g; ++j) cm.at(i, j) = rng() % 4 == 0 ? 0 : rng() % 50;
        cm.at(0, 0) += 1;
        auto r = report(cm);
        REQUIRE(r.weighted_recall == r.accuracy);
        for (const auto& c : r.per_class) {
            CHECK(c.f1 >= 0);
            CHECK(c.f1 <= 1);
        }
        auto c2 = collapse_empty(cm);
        CHECK(c2.total() == cm.total());
        CHECK(c2.row_sum(0) == cm.row_sum(0));
        CHECK(c2.column_sum(0) == cm.column_sum(0));

        // reverse the class order consistently
        std::vector<std::string> rev(names.rbegin(), names.rend());
        ConfusionMatrix pm{LabelSpace(rev)};
        for (std::size_t i = 0; i < g; ++i)
            for (std::size_t j = 0; j < g; ++j) pm.at(g - 1 - i, g - 1 - j) = cm.at(i, j);
        auto rp = report(pm);
        CHECK(rp.accuracy == doctest::Approx(r.accuracy).epsilon(1e-12));
        CHECK(rp.weighted_f1 == doctest::Approx(r.weighted_f1).epsilon(1e-12));
        CHECK(rp.weighted_precision == doctest::Approx(r.weighted_precision).epsilon(1e-12));
    }
}

TEST_CASE("report and confusion exports") {
    LabelSpace labels({"empty", "fox"});
    ConfusionMatrix cm(labels);
    cm.at(0, 0) = 2;
    cm.at(1, 0) = 1;
    cm.at(1, 1) = 1;
    std::ostringstream out;
    write_confusion_csv(out, cm);
    CHECK(out.str() == "true\\predicted,empty,fox\nempty,2,0\nfox,1,1\n");
    std::ostringstream rep;
    write_report_csv(rep, report(cm));
    CHECK(rep.str().rfind("class,precision,recall,f1,support\n", 0) == 0);
    CHECK(parse_metric_kind("f1") == MetricKind::f1);
    CHECK(to_string(MetricKind::accuracy) == "accuracy");
}
