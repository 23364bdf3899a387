#include "wildal/pipeline.hpp"

#include <algorithm>

#include "wildal/error.hpp"

namespace wildal {

Image FileImageSource::load(const ImageRecord& rec, const DetectionSet&) const {
    if (rec.file_path.empty()) throw Error(Errc::NoPixels, "image '" + rec.image_id + "' has no file_path");
    return read_image(root_ / rec.file_path);
}

Image SyntheticImageSource::load(const ImageRecord& rec, const DetectionSet& detections) const {
    return render_synthetic_image(spec_, seed_, rec, detections);
}

std::vector<LabeledImage> dataset_labels(const Dataset& ds, std::span<const std::size_t> images) {
    std::vector<LabeledImage> out;
    out.reserve(images.size());
    for (auto i : images) {
        const auto& rec = ds.image(i);
        if (!rec.label) continue;
        out.push_back({i, ds.label_space().require(*rec.label)});
    }
    return out;
}

Pipeline::Pipeline(const Dataset& dataset, std::shared_ptr<const ImageSource> images, EmbedderRegistry embedders,
                   CropConfig crop, AugmentationPolicy augmentation)
    : dataset_(&dataset),
      images_(std::move(images)),
      embedders_(std::move(embedders)),
      crop_(crop),
      augmentation_(augmentation) {}

void Pipeline::preload(const std::string& provider, const EmbeddingStore& store) {
    if (store.provider().dim != dim(provider)) {
        throw Error(Errc::DimensionMismatch, "store for '" + provider + "' has dim " +
                                                 std::to_string(store.provider().dim));
    }
    for (std::size_t r = 0; r < store.rows(); ++r) {
        const auto row = store.row(r);
        cache_[provider + '\x1f' + store.crop_ids()[r]] = std::vector<float>(row.begin(), row.end());
    }
}

void Pipeline::clear_cache() {
    cache_.clear();
    cached_image_.reset();
    cached_pixels_ = Image();
}

const Image& Pipeline::image_pixels(std::size_t image) {
    if (cached_image_ != image) {
        if (!images_) throw Error(Errc::NoPixels, "no image source configured");
        cached_pixels_ = images_->load(dataset_->image(image), dataset_->detection_set(image));
        cached_image_ = image;
    }
    return cached_pixels_;
}

CropRecord Pipeline::base_crop(std::size_t image, std::size_t box) {
    const auto& ds = dataset_->detection_set(image);
    const auto& det = ds.detections.at(box);
    CropRecord crop;
    crop.image_id = ds.image_id;
    crop.box_index = box;
    crop.crop_id = make_crop_id(ds.image_id, box, 0);
    crop.detector_confidence = det.confidence;
    return crop;
}

std::span<const float> Pipeline::box_embedding(std::size_t image, std::size_t box, const std::string& provider,
                                               int aug_index) {
    const auto& ds = dataset_->detection_set(image);
    const auto crop_id = make_crop_id(ds.image_id, box, aug_index);
    std::string key = provider;
    key += '\x1f';
    key += crop_id;
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;

    const auto& embedder = embedders_.get(provider);
    CropRecord crop = base_crop(image, box);
    if (embedder.needs_pixels()) {
        crop = crop_and_resize(image_pixels(image), ds.detections.at(box), crop_, ds.image_id, box);
        if (aug_index > 0) {
            auto policy = augmentation_;
            policy.max_augmentations_per_crop = std::max(policy.max_augmentations_per_crop, aug_index);
            crop = augment(crop, policy, aug_index).back();
        }
    } else {
        crop.crop_id = crop_id;
        crop.aug_index = aug_index;
    }
    auto values = embedder.embed(crop);
    if (values.size() != embedder.id().dim) throw Error(Errc::DimensionMismatch, crop_id);
    return cache_.emplace(std::move(key), std::move(values)).first->second;
}

std::span<const float> Pipeline::whole_image_embedding(std::size_t image, const std::string& provider) {
    const auto& rec = dataset_->image(image);
    const std::string crop_id = rec.image_id + "#full#0";
    std::string key = provider;
    key += '\x1f';
    key += crop_id;
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;

    const auto& embedder = embedders_.get(provider);
    CropRecord crop;
    crop.crop_id = crop_id;
    crop.image_id = rec.image_id;
    if (embedder.needs_pixels()) {
        Detection whole{{0, 0, 1, 1}, 1.0, DetectorCategory::animal};
        crop = crop_and_resize(image_pixels(image), whole, crop_, rec.image_id, 0);
        crop.crop_id = crop_id;
    }
    auto values = embedder.embed(crop);
    return cache_.emplace(std::move(key), std::move(values)).first->second;
}

TrainingSet Pipeline::training_set(std::span<const LabeledImage> images, const Lambda& lambda, int augment_k) {
    TrainingSet set;
    set.dim = dim(lambda.embedder);
    const bool pixels = embedders_.get(lambda.embedder).needs_pixels();
    for (const auto& item : images) {
        const auto split = filter_high_conf(dataset_->detection_set(item.image), lambda.alpha);
        for (auto box : split.high_index) {
            set.add(box_embedding(item.image, box, lambda.embedder), item.label);
            if (!pixels) continue;
            for (int a = 1; a <= augment_k; ++a) set.add(box_embedding(item.image, box, lambda.embedder, a), item.label);
        }
    }
    return set;
}

std::vector<BoxPrediction> Pipeline::predict_boxes(std::size_t image, const HeadModel& head, const Lambda& lambda) {
    const auto split = filter_high_conf(dataset_->detection_set(image), lambda.alpha);
    std::vector<BoxPrediction> out;
    out.reserve(split.high_index.size());
    for (auto box : split.high_index) {
        out.push_back({image, box, head.predict_scores(box_embedding(image, box, lambda.embedder))});
    }
    return out;
}

ImagePrediction Pipeline::predict_image(std::size_t image, const HeadModel& head, const PipelineConfig& cfg) {
    const auto& ds = dataset_->detection_set(image);
    const auto boxes = predict_boxes(image, head, {cfg.embedder, cfg.alpha});
    std::vector<BoxScore> scores;
    scores.reserve(boxes.size());
    for (const auto& b : boxes) scores.push_back({ds.detections[b.box].confidence, b.scores});
    return merge_image(ds, scores, cfg, dataset_->label_space());
}

std::vector<ImagePrediction> Pipeline::predict_dataset(std::span<const std::size_t> images, const HeadModel& head,
                                                       const PipelineConfig& cfg) {
    if (!(head.label_space() == dataset_->label_space())) {
        throw Error(Errc::LengthMismatch, "model label space differs from the project's");
    }
    std::vector<ImagePrediction> out;
    out.reserve(images.size());
    for (auto i : images) out.push_back(predict_image(i, head, cfg));
    return out;
}

PipelineConfig pipeline_config(const Lambda& lambda, double beta, MergeRule rule) {
    PipelineConfig cfg;
    cfg.alpha = lambda.alpha;
    cfg.embedder = lambda.embedder;
    cfg.beta = beta;
    cfg.rule = rule;
    return cfg;
}

TrainResult fit_head(Pipeline& pipeline, std::span<const LabeledImage> train, const Lambda& lambda,
                     const TrainConfig& config, std::optional<HeadModel> initial, int augment_k,
                     bool require_animals) {
    const auto data = pipeline.training_set(train, lambda, augment_k);
    const auto& labels = pipeline.dataset().label_space();
    const bool any_animal = std::any_of(data.labels.begin(), data.labels.end(),
                                        [&](std::size_t y) { return y != labels.empty_index(); });
    if (require_animals && !any_animal) {
        throw Error(Errc::DegenerateGridPoint, "no non-empty training crops at alpha=" + std::to_string(lambda.alpha));
    }
    const auto dim = pipeline.dim(lambda.embedder);
    HeadModel head = initial ? std::move(*initial) : HeadModel::cold_start(labels, dim, config);
    if (head.dim() != dim) throw Error(Errc::DimensionMismatch, "initial head does not match embedder dim");
    if (!(head.label_space() == labels)) throw Error(Errc::LengthMismatch, "initial head has a different label space");
    const auto hidden = head.hidden();
    head.config() = config;
    head.config().hidden_units = hidden;
    return wildal::train(std::move(head), data);
}

}  // namespace wildal
