#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wildal/ingest.hpp"

namespace wildal {

/// How box-level scores decide emptiness.
///  aggregate:      argmax of the confidence-weighted mean over all classes,
///                  "empty" included.
///  strict_per_box: empty only when every box's own argmax is "empty";
///                  otherwise the best non-empty class of the weighted mean.
enum class MergeRule { aggregate, strict_per_box };

struct PipelineConfig {
    double alpha = 0.1;
    double beta = 0.0;
    std::string embedder = "toy";
    MergeRule rule = MergeRule::aggregate;
};

struct BoxScore {
    double confidence = 0;
    std::vector<double> scores;
};

struct ImagePrediction {
    std::string image_id;
    std::size_t label = 0;              // index into the label space
    std::vector<double> scores;         // weighted class scores, sums to 1
    std::vector<std::size_t> counts;    // boxes per class by their own argmax; 0 for "empty"
    double confidence = 0;              // max of scores
    bool abstained = false;
    bool no_boxes = false;              // no box passed the detector threshold
};

// Lowest index wins ties.
std::size_t argmax(std::span<const double> v);

// `boxes` must line up with filter_high_conf(ds, cfg.alpha).high.
// Throws LengthMismatch, UnnormalizedScore.
ImagePrediction merge_image(const DetectionSet& ds, std::span<const BoxScore> boxes, const PipelineConfig& cfg,
                            const LabelSpace& labels);

// image_id,label,confidence,abstained,score_<class>...,count_<class>...
// (count columns for non-empty classes only)
void write_predictions_csv(std::ostream& out, std::span<const ImagePrediction> preds, const LabelSpace& labels);

}  // namespace wildal
