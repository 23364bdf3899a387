#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "reference.hpp"
#include "wildal/classifier.hpp"
#include "wildal/error.hpp"
#include "wildal/synthetic.hpp"

using namespace wildal;

namespace {

LabelSpace space(std::size_t g) {
    std::vector<std::string> names{"empty"};
    for (std::size_t k = 1; k < g; ++k) names.push_back("c" + std::to_string(k));
    return LabelSpace(names);
}

TrainingSet random_set(std::mt19937_64& rng, std::size_t n, std::size_t d, std::size_t g) {
    std::normal_distribution<double> nd(0, 1);
    TrainingSet t;
    t.dim = d;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> x(d);
        for (auto& v : x) v = static_cast<float>(nd(rng));
        t.add(x, rng() % g);
    }
    return t;
}

void randomize(HeadModel& h, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0, 0.5);
    for (auto& p : h.parameters()) p = nd(rng);
}

std::vector<std::vector<float>> rows_of(const TrainingSet& t) {
    std::vector<std::vector<float>> xs;
    for (std::size_t i = 0; i < t.size(); ++i) xs.emplace_back(t.row(i).begin(), t.row(i).end());
    return xs;
}

// Central differences of the long-double reference objective.
double max_relative_error(const HeadModel& h, const TrainingSet& data) {
    const auto w = class_weights(data, h.classes(), h.config().class_weighting);
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), 0);
    const auto analytic = loss_and_gradient(h, data, rows, w).gradient;
    const auto xs = rows_of(data);
    std::vector<long double> p(h.parameters().begin(), h.parameters().end());
    auto f = [&](const std::vector<long double>& q) {
        return h.hidden() ? ref::hidden_loss(q, h.classes(), h.dim(), h.hidden(), xs, data.labels, w, h.config().l2)
                          : ref::linear_loss(q, h.classes(), h.dim(), xs, data.labels, w, h.config().l2);
    };
    const long double step = 1e-4L;
    double worst = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto up = p, dn = p;
        up[i] += step;
        dn[i] -= step;
        const double fd = static_cast<double>((f(up) - f(dn)) / (2 * step));
        const double err = std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace

TEST_CASE("zero parameters give a uniform distribution") {
    auto h = HeadModel::cold_start(space(4), 3, {});
    for (auto& p : h.parameters()) p = 0;
    std::vector<float> x{1, 2, 3};
    for (double s : h.predict_scores(x)) CHECK(s == doctest::Approx(0.25));
}

TEST_CASE("closed-form softmax with one large bias") {
    const std::size_t g = 5;
    auto h = HeadModel::cold_start(space(g), 3, {});
    for (auto& p : h.parameters()) p = 0;
    h.parameters()[h.output_bias_offset()] = 10.0;
    std::vector<float> x{0.5f, -1, 2};
    const double e10 = std::exp(10.0);
    CHECK(std::abs(h.predict_scores(x)[0] - e10 / (e10 + g - 1)) < 1e-15);
}

TEST_CASE("softmax shift invariance and positivity") {
    std::vector<double> z{1.0, -2.0, 0.5}, z2{1001.0, 998.0, 1000.5};
    auto a = softmax(z), b = softmax(z2);
    double sum = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
        CHECK(a[k] > 0);
        sum += a[k];
    }
    CHECK(std::abs(sum - 1) < 1e-12);
}

TEST_CASE("cold start is bounded and seeded") {
    TrainConfig cfg;
    cfg.seed = 9;
    auto a = HeadModel::cold_start(space(3), 16, cfg);
    auto b = HeadModel::cold_start(space(3), 16, cfg);
    CHECK(a == b);
    const double bound = 1 / std::sqrt(16.0);
    for (std::size_t i = 0; i < a.output_bias_offset(); ++i) CHECK(std::abs(a.parameters()[i]) <= bound);
    for (std::size_t k = 0; k < 3; ++k) CHECK(a.parameters()[a.output_bias_offset() + k] == 0.0);
    cfg.seed = 10;
    CHECK_FALSE(HeadModel::cold_start(space(3), 16, cfg) == a);
}

TEST_CASE("linear gradient matches finite differences") {
    std::mt19937_64 rng(21);
    TrainConfig cfg;
    cfg.l2 = 0.01;
    auto h = HeadModel::cold_start(space(5), 10, cfg);
    randomize(h, rng);
    auto data = random_set(rng, 16, 10, 5);
    CHECK(max_relative_error(h, data) < 1e-5);
}

TEST_CASE("hidden-layer gradient matches finite differences") {
    std::mt19937_64 rng(22);
    for (int t = 0; t < 5; ++t) {
        TrainConfig cfg;
        cfg.hidden_units = 4;
        cfg.l2 = 0.003;
        cfg.class_weighting = t % 2 ? ClassWeighting::none : ClassWeighting::inverse_frequency;
        auto h = HeadModel::cold_start(space(3), 6, cfg);
        randomize(h, rng);
        auto data = random_set(rng, 12, 6, 3);
        CHECK(max_relative_error(h, data) < 1e-5);
    }
}

TEST_CASE("gradient vanishes at a confident optimum") {
    auto h = HeadModel::cold_start(space(2), 2, {.l2 = 0.0});
    auto p = h.parameters();
    std::fill(p.begin(), p.end(), 0.0);
    p[0] = 40;  // class 0 reads x0
    p[3] = 40;  // class 1 reads x1
    TrainingSet t;
    t.dim = 2;
    t.add(std::vector<float>{1, 0}, 0);
    t.add(std::vector<float>{0, 1}, 1);
    std::vector<std::size_t> rows{0, 1};
    auto lg = loss_and_gradient(h, t, rows, class_weights(t, 2, ClassWeighting::none));
    double norm = 0;
    for (double gv : lg.gradient) norm += gv * gv;
    CHECK(std::sqrt(norm) < 1e-8);
}

TEST_CASE("duplicating a batch leaves the gradient unchanged") {
    std::mt19937_64 rng(4);
    auto h = HeadModel::cold_start(space(3), 4, {});
    randomize(h, rng);
    auto data = random_set(rng, 8, 4, 3);
    const auto w = class_weights(data, 3, ClassWeighting::none);
    std::vector<std::size_t> once(8), twice(16);
    std::iota(once.begin(), once.end(), 0);
    for (std::size_t i = 0; i < 16; ++i) twice[i] = i % 8;
    auto a = loss_and_gradient(h, data, once, w), b = loss_and_gradient(h, data, twice, w);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-13));
    for (std::size_t i = 0; i < a.gradient.size(); ++i)
        CHECK(a.gradient[i] == doctest::Approx(b.gradient[i]).epsilon(1e-12));
}

TEST_CASE("inverse frequency weights") {
    TrainingSet t;
    t.dim = 1;
    for (int i = 0; i < 6; ++i) t.add(std::vector<float>{0}, 0);
    for (int i = 0; i < 2; ++i) t.add(std::vector<float>{0}, 2);
    auto w = class_weights(t, 3, ClassWeighting::inverse_frequency);
    CHECK(w[0] == doctest::Approx(8.0 / (2 * 6)));
    CHECK(w[1] == 0.0);
    CHECK(w[2] == doctest::Approx(8.0 / (2 * 2)));
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    TrainConfig cfg;
    cfg.learning_rate = 0;
    cfg.epochs = 1;
    cfg.l2 = 0;
    auto h = HeadModel::cold_start(space(2), 3, cfg);
    TrainingSet t;
    t.dim = 3;
    t.add(std::vector<float>{1, 2, 3}, 1);
    auto r = train(h, t);
    CHECK(r.model.parameters().size() == h.parameters().size());
    CHECK(std::equal(h.parameters().begin(), h.parameters().end(), r.model.parameters().begin()));
}

TEST_CASE("separable synthetic clusters are learned") {
    SynthSpec spec;
    spec.images = 200;
    spec.classes = {"empty", "fox"};
    spec.proportions = {0.5, 0.5};
    spec.dim = 8;
    spec.spread = 0.3;
    spec.spurious_box_prob = 1.0;
    auto proj = generate_synthetic_project(spec, 17);
    const auto& ds = proj.dataset;
    TrainingSet t;
    t.dim = spec.dim;
    for (std::size_t i = 0; i < ds.size() && t.size() < 200; ++i) {
        const auto label = ds.label_space().require(*ds.image(i).label);
        for (std::size_t b = 0; b < ds.detection_set(i).detections.size() && t.size() < 200; ++b) {
            t.add(*proj.embeddings.find(ds.image(i).image_id + "#" + std::to_string(b) + "#0"), label);
        }
    }
    REQUIRE(t.size() == 200);
    const auto xs = rows_of(t);
    REQUIRE(ref::nearest_centroid_accuracy(xs, t.labels, 2) >= 0.99);

    auto r = train(HeadModel::cold_start(ds.label_space(), spec.dim, {}), t);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        auto s = r.model.predict_scores(t.row(i));
        ok += (s[1] > s[0] ? 1u : 0u) == t.labels[i];
    }
    CHECK(static_cast<double>(ok) / t.size() >= 0.99);
    CHECK(r.loss_curve.size() == 30);
}

TEST_CASE("full-batch loss is monotone below the stability bound") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 3; ++t) {
        auto data = random_set(rng, 60, 6, 4);
        TrainConfig cfg;
        cfg.batch_size = 1000;
        cfg.epochs = 40;
        cfg.l2 = 1e-3;
        cfg.learning_rate = 0.99 * stable_learning_rate(data, cfg.l2);
        cfg.seed = t;
        auto r = train(HeadModel::cold_start(space(4), 6, cfg), data);
        for (std::size_t e = 1; e < r.loss_curve.size(); ++e) CHECK(r.loss_curve[e] <= r.loss_curve[e - 1] + 1e-12);
    }
}

TEST_CASE("training is deterministic") {
    std::mt19937_64 rng(2);
    auto data = random_set(rng, 50, 5, 3);
    TrainConfig cfg;
    cfg.batch_size = 7;
    cfg.seed = 3;
    auto a = train(HeadModel::cold_start(space(3), 5, cfg), data);
    auto b = train(HeadModel::cold_start(space(3), 5, cfg), data);
    CHECK(a.model == b.model);
    CHECK(a.loss_curve == b.loss_curve);
}

TEST_CASE("training errors") {
    auto h = HeadModel::cold_start(space(2), 2, {});
    TrainingSet empty;
    empty.dim = 2;
    CHECK_THROWS_AS(train(h, empty), Error);
    TrainingSet bad;
    bad.dim = 2;
    bad.add(std::vector<float>{0, 0}, 5);
    try {
        train(h, bad);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnknownLabel);
    }
    std::vector<float> wrong{1, 2, 3};
    CHECK_THROWS_AS(h.predict_scores(wrong), Error);
}

TEST_CASE("warm start copies shared rows bit for bit") {
    std::mt19937_64 rng(6);
    TrainConfig cfg;
    cfg.seed = 1;
    auto src = HeadModel::cold_start(LabelSpace({"empty", "fox", "deer", "boar"}), 8, cfg);
    randomize(src, rng);

    SUBCASE("identical spaces") {
        auto w = warm_start(src, src.label_space(), 8, "ck");
        CHECK(std::equal(w.parameters().begin(), w.parameters().end(), src.parameters().begin()));
        CHECK(w.provenance().kind == Provenance::Kind::warm);
        CHECK(w.provenance().source == "ck");
    }
    SUBCASE("partial overlap") {
        LabelSpace target({"hare", "fox", "empty"});
        auto w = warm_start(src, target, 8);
        auto cold = HeadModel::cold_start(target, 8, cfg);
        auto same = [](std::span<const double> a, std::span<const double> b) {
            return std::equal(a.begin(), a.end(), b.begin(), b.end());
        };
        CHECK(same(w.output_row(1), src.output_row(1)));
        CHECK(same(w.output_row(2), src.output_row(0)));
        CHECK(same(w.output_row(0), cold.output_row(0)));
        CHECK(w.parameters()[w.output_bias_offset() + 1] == src.parameters()[src.output_bias_offset() + 1]);
    }
    SUBCASE("no shared animal class") {
        LabelSpace target({"empty", "lynx", "wolf"});
        auto w = warm_start(src, target, 8, "ck");
        auto cold = HeadModel::cold_start(target, 8, cfg);
        CHECK_FALSE(w == cold);
        w.set_provenance(cold.provenance());
        CHECK(w == cold);
    }
    SUBCASE("hidden layer travels with the output rows") {
        TrainConfig hc = cfg;
        hc.hidden_units = 5;
        auto hs = HeadModel::cold_start(src.label_space(), 8, hc);
        randomize(hs, rng);
        auto w = warm_start(hs, LabelSpace({"empty", "deer"}), 8);
        CHECK(std::equal(hs.parameters().begin(),
                         hs.parameters().begin() + static_cast<std::ptrdiff_t>(hs.output_weight_offset()),
                         w.parameters().begin()));
    }
    CHECK_THROWS_AS(warm_start(src, src.label_space(), 9), Error);
}

TEST_CASE("checkpoint round trip and corruption") {
    const auto dir = std::filesystem::temp_directory_path() / "wildal_ckpt_test";
    std::filesystem::create_directories(dir);
    TrainConfig cfg;
    cfg.hidden_units = 3;
    cfg.seed = 77;
    cfg.learning_rate = 0.0123;
    auto h = HeadModel::cold_start(LabelSpace({"empty", "fox"}), 4, cfg);
    h.set_provenance({Provenance::Kind::warm, "iter_0001.head"});
    save_checkpoint(h, dir / "a.head");
    CHECK(load_checkpoint(dir / "a.head") == h);

    std::filesystem::resize_file(dir / "a.head", std::filesystem::file_size(dir / "a.head") - 3);
    try {
        load_checkpoint(dir / "a.head");
        FAIL("expected CorruptState");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::CorruptState);
    }
    {
        std::ofstream out(dir / "b.head", std::ios::binary);
        out << "WLHEAD";
        const std::uint32_t v = 99;
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
    try {
        load_checkpoint(dir / "b.head");
        FAIL("expected VersionMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::VersionMismatch);
    }
    try {
        load_checkpoint(dir / "missing.head");
        FAIL("expected MissingFile");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::MissingFile);
    }
    std::filesystem::remove_all(dir);
}
