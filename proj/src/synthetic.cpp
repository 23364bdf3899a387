#include "wildal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "wildal/error.hpp"
#include "wildal/random.hpp"

namespace wildal {

void SynthSpec::validate() const {
    if (images == 0 || stations == 0 || dim == 0) throw Error(Errc::InvalidSpec, "images, stations and dim must be positive");
    if (classes.size() != proportions.size()) throw Error(Errc::InvalidSpec, "one proportion per class required");
    try {
        LabelSpace check(classes);
        if (dim < check.size()) throw Error(Errc::InvalidSpec, "dim must be at least the number of classes");
    } catch (const Error& e) {
        if (e.code() == Errc::InvalidSpec) throw;
        throw Error(Errc::InvalidSpec, e.what());
    }
    double sum = 0;
    for (double p : proportions) {
        if (!(p >= 0)) throw Error(Errc::InvalidSpec, "negative class proportion");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::InvalidSpec, "class proportions must sum to 1");
    if (!(separation > 0) || !(spread >= 0)) throw Error(Errc::InvalidSpec, "separation must be positive, spread non-negative");
    if (!(true_conf.a > 0 && true_conf.b > 0 && spurious_conf.a > 0 && spurious_conf.b > 0)) {
        throw Error(Errc::InvalidSpec, "beta parameters must be positive");
    }
    if (!(spurious_box_prob >= 0 && spurious_box_prob <= 1)) throw Error(Errc::InvalidSpec, "spurious_box_prob outside [0,1]");
    if (max_animals < 1 || max_spurious < 0) throw Error(Errc::InvalidSpec, "max_animals >= 1 and max_spurious >= 0 required");
    if (image_width < 16 || image_height < 16) throw Error(Errc::InvalidSpec, "synthetic images must be at least 16x16");
    if (clutter_rects < 0 || pixel_noise < 0) throw Error(Errc::InvalidSpec, "clutter settings must be non-negative");
}

namespace {

double sample_beta(Rng& rng, BetaParams p) {
    const double x = std::gamma_distribution<double>(p.a, 1.0)(rng);
    const double y = std::gamma_distribution<double>(p.b, 1.0)(rng);
    return x + y > 0 ? x / (x + y) : 0.5;
}

std::string padded(const char* prefix, std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
    return buf;
}

BBox random_box(Rng& rng) {
    std::uniform_real_distribution<double> size(0.18, 0.38);
    BBox b;
    b.w = size(rng);
    b.h = size(rng);
    b.x = std::uniform_real_distribution<double>(0.0, 1.0 - b.w)(rng);
    b.y = std::uniform_real_distribution<double>(0.0, 1.0 - b.h)(rng);
    return b;
}

}  // namespace

SyntheticProject generate_synthetic_project(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    LabelSpace labels(spec.classes);
    Rng rng(mix_seed(seed, 0x5EEDu));
    std::discrete_distribution<std::size_t> pick_class(spec.proportions.begin(), spec.proportions.end());
    std::uniform_int_distribution<std::size_t> pick_station(0, spec.stations - 1);
    std::bernoulli_distribution spurious(spec.spurious_box_prob);
    std::uniform_int_distribution<int> animal_count(1, spec.max_animals);
    std::uniform_int_distribution<int> spurious_count(std::min(1, spec.max_spurious), spec.max_spurious);
    std::uniform_real_distribution<double> noise(-spec.spread, spec.spread);

    const int id_width = std::max(5, static_cast<int>(std::to_string(spec.images).size()));
    std::vector<ImageRecord> images;
    std::vector<DetectionSet> sets;
    SyntheticProject out{{}, EmbeddingStore({"synthetic", spec.dim})};
    std::vector<float> vec(spec.dim);

    for (std::size_t i = 0; i < spec.images; ++i) {
        ImageRecord rec;
        rec.image_id = padded("img", i, id_width);
        rec.station_id = padded("S", pick_station(rng), 2);
        const std::size_t cls = pick_class(rng);
        rec.label = labels.name(cls);

        DetectionSet ds{rec.image_id, {}};
        const bool is_empty = cls == labels.empty_index();
        int boxes = 0;
        if (!is_empty) {
            boxes = animal_count(rng);
        } else if (spec.max_spurious > 0 && spurious(rng)) {
            boxes = spurious_count(rng);
        }
        for (int j = 0; j < boxes; ++j) {
            Detection d;
            d.bbox = random_box(rng);
            d.confidence = sample_beta(rng, is_empty ? spec.spurious_conf : spec.true_conf);
            d.category = DetectorCategory::animal;
            ds.detections.push_back(d);
            for (std::uint32_t c = 0; c < spec.dim; ++c) {
                const double base = c == cls ? spec.separation : 0.0;
                vec[c] = static_cast<float>(base + noise(rng));
            }
            out.embeddings.add(make_crop_id(rec.image_id, static_cast<std::size_t>(j), 0), vec);
        }
        images.push_back(std::move(rec));
        sets.push_back(std::move(ds));
    }
    out.dataset = Dataset(labels, std::move(images), std::move(sets));
    return out;
}

std::array<std::uint8_t, 3> class_color(std::size_t k, std::size_t classes) {
    // evenly spaced hues, fixed saturation/value
    const double hue = 330.0 * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(classes, 2) - 1);
    const double s = 0.8, v = 0.9;
    const double c = v * s;
    const double hp = hue / 60.0;
    const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    auto to8 = [&](double u) { return static_cast<std::uint8_t>(std::lround((u + m) * 255.0)); };
    return {to8(r), to8(g), to8(b)};
}

Image render_synthetic_image(const SynthSpec& spec, std::uint64_t seed, const ImageRecord& rec,
                             const DetectionSet& detections) {
    const int w = spec.image_width;
    const int h = spec.image_height;
    Image img(w, h);
    auto rng = make_rng(seed, "render/" + rec.image_id);
    std::uniform_int_distribution<int> byte(0, 255);

    // Station-independent background: gray gradient plus random clutter rectangles.
    const int base = std::uniform_int_distribution<int>(60, 160)(rng);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(base + (y * 40) / h - 20, 0, 255));
    for (int r = 0; r < spec.clutter_rects; ++r) {
        const int rw = std::uniform_int_distribution<int>(w / 12, w / 3)(rng);
        const int rh = std::uniform_int_distribution<int>(h / 12, h / 3)(rng);
        const int rx = std::uniform_int_distribution<int>(0, w - rw)(rng);
        const int ry = std::uniform_int_distribution<int>(0, h - rh)(rng);
        const std::array<int, 3> col{byte(rng), byte(rng), byte(rng)};
        for (int y = ry; y < ry + rh; ++y)
            for (int x = rx; x < rx + rw; ++x)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(col[c]);
    }

    const LabelSpace labels(spec.classes);
    const std::size_t cls = rec.label ? labels.index_of(*rec.label).value_or(labels.empty_index()) : labels.empty_index();
    if (cls != labels.empty_index()) {
        const auto color = class_color(cls, labels.size());
        for (const auto& d : detections.detections) {
            const double brightness = std::uniform_real_distribution<double>(0.8, 1.15)(rng);
            const double cx = (d.bbox.x + d.bbox.w / 2) * w;
            const double cy = (d.bbox.y + d.bbox.h / 2) * h;
            const double ax = d.bbox.w * w / 2;
            const double ay = d.bbox.h * h / 2;
            const int x0 = std::max(0, static_cast<int>(cx - ax));
            const int x1 = std::min(w - 1, static_cast<int>(cx + ax));
            const int y0 = std::max(0, static_cast<int>(cy - ay));
            const int y1 = std::min(h - 1, static_cast<int>(cy + ay));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double nx = (x + 0.5 - cx) / ax;
                    const double ny = (y + 0.5 - cy) / ay;
                    if (nx * nx + ny * ny > 1.0) continue;
                    for (int c = 0; c < 3; ++c) {
                        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(
                            static_cast<int>(std::lround(color[c] * brightness)), 0, 255));
                    }
                }
            }
        }
    }

    if (spec.pixel_noise > 0) {
        std::uniform_int_distribution<int> jitter(-spec.pixel_noise, spec.pixel_noise);
        for (auto& v : img.data()) v = static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + jitter(rng), 0, 255));
    }
    return img;
}

}  // namespace wildal
