#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wildal/classifier.hpp"
#include "wildal/embedding.hpp"
#include "wildal/imaging.hpp"
#include "wildal/ingest.hpp"
#include "wildal/merge.hpp"
#include "wildal/synthetic.hpp"

namespace wildal {

class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual Image load(const ImageRecord& rec, const DetectionSet& detections) const = 0;
};

/// Reads file_path relative to a root directory.
class FileImageSource final : public ImageSource {
public:
    explicit FileImageSource(std::filesystem::path root) : root_(std::move(root)) {}
    Image load(const ImageRecord& rec, const DetectionSet& detections) const override;

private:
    std::filesystem::path root_;
};

class SyntheticImageSource final : public ImageSource {
public:
    SyntheticImageSource(SynthSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {}
    Image load(const ImageRecord& rec, const DetectionSet& detections) const override;

private:
    SynthSpec spec_;
    std::uint64_t seed_;
};

/// Hyperparameter combination: embedder and detector threshold.
struct Lambda {
    std::string embedder;
    double alpha = 0.1;
    friend bool operator==(const Lambda&, const Lambda&) = default;
};

/// An image with a known class (index into the label space).
struct LabeledImage {
    std::size_t image = 0;
    std::size_t label = 0;
};

std::vector<LabeledImage> dataset_labels(const Dataset& ds, std::span<const std::size_t> images);

struct BoxPrediction {
    std::size_t image = 0;
    std::size_t box = 0;
    std::vector<double> scores;
};

/// Detector output -> crops -> embeddings -> head, with embeddings cached by
/// (provider, crop_id). Not safe for concurrent use; callers serialize.
class Pipeline {
public:
    Pipeline(const Dataset& dataset, std::shared_ptr<const ImageSource> images, EmbedderRegistry embedders,
             CropConfig crop = {}, AugmentationPolicy augmentation = {});

    const Dataset& dataset() const noexcept { return *dataset_; }
    const EmbedderRegistry& embedders() const noexcept { return embedders_; }
    const CropConfig& crop_config() const noexcept { return crop_; }
    const AugmentationPolicy& augmentation() const noexcept { return augmentation_; }
    std::uint32_t dim(const std::string& provider) const { return embedders_.get(provider).id().dim; }

    // Embedding of detector box `box` of image `image`; aug_index > 0 selects
    // the augmentation variant (pixel providers only).
    std::span<const float> box_embedding(std::size_t image, std::size_t box, const std::string& provider,
                                         int aug_index = 0);
    // Embedding of the whole frame treated as one square crop.
    std::span<const float> whole_image_embedding(std::size_t image, const std::string& provider);

    // Crops of every high-confidence box of the given images, labeled with
    // their image's class. `augment_k` variants per crop are added when the
    // provider works on pixels.
    TrainingSet training_set(std::span<const LabeledImage> images, const Lambda& lambda, int augment_k = 0);

    std::vector<BoxPrediction> predict_boxes(std::size_t image, const HeadModel& head, const Lambda& lambda);
    ImagePrediction predict_image(std::size_t image, const HeadModel& head, const PipelineConfig& cfg);
    // One prediction per image in input order; crops are never augmented.
    std::vector<ImagePrediction> predict_dataset(std::span<const std::size_t> images, const HeadModel& head,
                                                 const PipelineConfig& cfg);

    // Seeds the cache with precomputed vectors for `provider` (e.g. a saved
    // toy-embedder run). Throws DimensionMismatch.
    void preload(const std::string& provider, const EmbeddingStore& store);

    // Drops cached pixels and embeddings.
    void clear_cache();

private:
    const Image& image_pixels(std::size_t image);
    CropRecord base_crop(std::size_t image, std::size_t box);

    const Dataset* dataset_;
    std::shared_ptr<const ImageSource> images_;
    EmbedderRegistry embedders_;
    CropConfig crop_;
    AugmentationPolicy augmentation_;
    std::unordered_map<std::string, std::vector<float>> cache_;
    std::optional<std::size_t> cached_image_;
    Image cached_pixels_;
};

PipelineConfig pipeline_config(const Lambda& lambda, double beta = 0.0, MergeRule rule = MergeRule::aggregate);

// Trains a head on crops at `lambda`, starting from `initial` (e.g. a warm
// start) or from a cold head built from `config`. The optimizer settings of
// `config` apply either way; the architecture of `initial` is kept.
// Throws DegenerateGridPoint when no crop of a non-empty class survives the
// threshold (unless require_animals is false), EmptyTrainingSet when no crop does.
TrainResult fit_head(Pipeline& pipeline, std::span<const LabeledImage> train, const Lambda& lambda,
                     const TrainConfig& config, std::optional<HeadModel> initial = std::nullopt, int augment_k = 0,
                     bool require_animals = true);

}  // namespace wildal
