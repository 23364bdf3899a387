#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "reference.hpp"
#include "wildal/error.hpp"

using namespace wildal;

TEST_CASE("dataset prediction matches a per-image reference merge") {
    fixture::Synthetic fx(fixture::small_spec(500), 13);
    const auto& ds = fx.dataset();
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    auto labeled = dataset_labels(ds, all);
    Lambda lambda{"synthetic", 0.3};
    TrainConfig tc;
    tc.epochs = 5;
    auto head = fit_head(*fx.pipeline, labeled, lambda, tc).model;
    const auto preds = fx.pipeline->predict_dataset(all, head, pipeline_config(lambda));
    REQUIRE(preds.size() == ds.size());
    const auto g = ds.label_space().size();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<double> conf;
        std::vector<std::vector<double>> scores;
        const auto& dets = ds.detection_set(i).detections;
        for (std::size_t b = 0; b < dets.size(); ++b) {
            if (dets[b].category != DetectorCategory::animal || dets[b].confidence < lambda.alpha) continue;
            conf.push_back(dets[b].confidence);
            auto v = fx.project.embeddings.find(make_crop_id(ds.image(i).image_id, b, 0));
            scores.push_back(head.predict_scores(*v));
        }
        auto r = ref::merge(conf, scores, g, ds.label_space().empty_index());
        REQUIRE(preds[i].image_id == ds.image(i).image_id);
        REQUIRE(preds[i].label == r.label);
        REQUIRE(preds[i].counts == r.counts);
        for (std::size_t k = 0; k < g; ++k) REQUIRE(std::abs(preds[i].scores[k] - r.scores[k]) <= 1e-12);
    }
}

TEST_CASE("no detections anywhere means everything is empty") {
    auto spec = fixture::small_spec(50);
    fixture::Synthetic fx(spec, 2);
    const auto& ds = fx.dataset();
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    auto head = HeadModel::cold_start(ds.label_space(), spec.dim, {});
    PipelineConfig cfg;
    cfg.embedder = "synthetic";
    cfg.alpha = 1.01;  // nothing passes
    for (const auto& p : fx.pipeline->predict_dataset(all, head, cfg)) {
        CHECK(p.label == ds.label_space().empty_index());
        CHECK(p.no_boxes);
    }
    cfg.alpha = 0.1;
    cfg.beta = 1.0;
    for (const auto& p : fx.pipeline->predict_dataset(all, head, cfg)) CHECK(p.abstained == !p.no_boxes);
}

TEST_CASE("toy embeddings are cached and crops come from rendered pixels") {
    fixture::Synthetic fx(fixture::small_spec(30), 6, 16);
    const auto& ds = fx.dataset();
    std::size_t img = 0;
    while (ds.detection_set(img).detections.empty()) ++img;
    auto a = fx.pipeline->box_embedding(img, 0, "toy");
    std::vector<float> first(a.begin(), a.end());
    CHECK(first.size() == ToyEmbedder::kDim);
    auto pixels = render_synthetic_image(fx.spec, fx.seed, ds.image(img), ds.detection_set(img));
    auto crop = crop_and_resize(pixels, ds.detection_set(img).detections[0], fx.pipeline->crop_config(),
                                ds.image(img).image_id, 0);
    CHECK(ToyEmbedder().embed(crop) == first);
    fx.pipeline->clear_cache();
    auto b = fx.pipeline->box_embedding(img, 0, "toy");
    CHECK(std::vector<float>(b.begin(), b.end()) == first);
    auto w = fx.pipeline->whole_image_embedding(img, "toy");
    CHECK(w.size() == ToyEmbedder::kDim);
}

TEST_CASE("training set sizes with augmentation") {
    fixture::Synthetic fx(fixture::small_spec(40), 7, 16);
    const auto& ds = fx.dataset();
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    auto labeled = dataset_labels(ds, all);
    Lambda toy{"toy", 0.5};
    auto plain = fx.pipeline->training_set(labeled, toy);
    auto aug = fx.pipeline->training_set(labeled, toy, 2);
    CHECK(aug.size() == 3 * plain.size());
    Lambda store{"synthetic", 0.5};
    CHECK(fx.pipeline->training_set(labeled, store, 2).size() == plain.size());
}

TEST_CASE("degenerate thresholds") {
    fixture::Synthetic fx(fixture::small_spec(40), 9);
    std::vector<std::size_t> all(fx.dataset().size());
    std::iota(all.begin(), all.end(), 0);
    auto labeled = dataset_labels(fx.dataset(), all);
    try {
        fit_head(*fx.pipeline, labeled, {"synthetic", 1.01}, {});
        FAIL("expected DegenerateGridPoint");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::DegenerateGridPoint);
    }
    CHECK_THROWS_AS(fx.pipeline->box_embedding(0, 0, "resnet"), Error);
}
