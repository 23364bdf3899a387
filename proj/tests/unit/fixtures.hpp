#pragma once

#include <memory>

#include "wildal/pipeline.hpp"
#include "wildal/synthetic.hpp"

namespace fixture {

// Synthetic project plus a pipeline that serves both the toy and the
// "synthetic" store embedders.
struct Synthetic {
    wildal::SynthSpec spec;
    std::uint64_t seed;
    wildal::SyntheticProject project;
    std::unique_ptr<wildal::Pipeline> pipeline;

    Synthetic(wildal::SynthSpec s, std::uint64_t sd, int crop_side = 32)
        : spec(std::move(s)), seed(sd), project(wildal::generate_synthetic_project(spec, seed)) {
        wildal::EmbedderRegistry reg;
        reg.add(std::make_shared<wildal::ToyEmbedder>());
        reg.add(std::make_shared<wildal::StoreEmbedder>(
            std::make_shared<const wildal::EmbeddingStore>(project.embeddings)));
        pipeline = std::make_unique<wildal::Pipeline>(
            project.dataset, std::make_shared<wildal::SyntheticImageSource>(spec, seed), std::move(reg),
            wildal::CropConfig{crop_side, wildal::ResizeFilter::bilinear});
    }

    const wildal::Dataset& dataset() const { return project.dataset; }
};

inline wildal::SynthSpec small_spec(std::size_t images) {
    wildal::SynthSpec s;
    s.images = images;
    return s;
}

}  // namespace fixture
