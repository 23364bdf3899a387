#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wildal/embedding.hpp"
#include "wildal/imaging.hpp"
#include "wildal/ingest.hpp"

namespace wildal {

struct BetaParams {
    double a = 1;
    double b = 1;
};

/// Parameters of a generated camera-trap project.
///
/// Embeddings ("synthetic" provider): an animal box of class k gets
/// separation * e_k plus independent uniform noise in [-spread, spread] per
/// coordinate; spurious boxes on empty images use the "empty" axis. For
/// spread < separation / 2 the classes are linearly separable (the
/// coordinate argmax already classifies every box correctly).
///
/// Pixels: each image is a cluttered background of random rectangles; an
/// animal box holds an ellipse in its class color, spurious boxes hold only
/// clutter.
struct SynthSpec {
    std::size_t images = 2000;
    std::size_t stations = 4;
    std::vector<std::string> classes{"empty", "fox", "deer", "boar", "hare"};
    std::vector<double> proportions{0.5, 0.2, 0.15, 0.1, 0.05};
    std::uint32_t dim = 16;
    double separation = 1.0;
    double spread = 0.4;
    BetaParams true_conf{6.0, 1.5};
    BetaParams spurious_conf{1.5, 6.0};
    double spurious_box_prob = 0.6;
    int max_animals = 3;
    int max_spurious = 2;
    int image_width = 96;
    int image_height = 72;
    int clutter_rects = 8;
    int pixel_noise = 24;

    // Throws InvalidSpec.
    void validate() const;
};

struct SyntheticProject {
    Dataset dataset;
    EmbeddingStore embeddings;  // provider "synthetic", one row per box (aug 0)
};

SyntheticProject generate_synthetic_project(const SynthSpec& spec, std::uint64_t seed);

// Deterministic per image; `label` is the image's ground-truth class name.
Image render_synthetic_image(const SynthSpec& spec, std::uint64_t seed, const ImageRecord& rec,
                             const DetectionSet& detections);

// 8-bit RGB color used for animals of class `k`.
std::array<std::uint8_t, 3> class_color(std::size_t k, std::size_t classes);

}  // namespace wildal
