#include "wildal/merge.hpp"

#include <cmath>
#include <ostream>

#include "wildal/csv.hpp"
#include "wildal/error.hpp"

namespace wildal {

namespace {

constexpr double kNormTolerance = 1e-9;

void check_normalized(std::span<const double> s, std::size_t g, std::size_t j) {
    if (s.size() != g) {
        throw Error(Errc::LengthMismatch, "box " + std::to_string(j) + " has " + std::to_string(s.size()) +
                                              " scores for " + std::to_string(g) + " classes");
    }
    double sum = 0;
    for (double v : s) {
        if (!(v >= 0) || !std::isfinite(v)) throw Error(Errc::UnnormalizedScore, "box " + std::to_string(j) + " has a negative or non-finite score");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kNormTolerance) {
        throw Error(Errc::UnnormalizedScore, "box " + std::to_string(j) + " scores sum to " + csv::format_double(sum));
    }
}

}  // namespace

std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k) {
        if (v[k] > v[best]) best = k;
    }
    return best;
}

ImagePrediction merge_image(const DetectionSet& ds, std::span<const BoxScore> boxes, const PipelineConfig& cfg,
                            const LabelSpace& labels) {
    const std::size_t g = labels.size();
    const std::size_t empty = labels.empty_index();
    const auto high = filter_high_conf(ds, cfg.alpha).high;
    if (boxes.size() != high.size()) {
        throw Error(Errc::LengthMismatch, ds.image_id + ": " + std::to_string(boxes.size()) + " box scores for " +
                                              std::to_string(high.size()) + " high-confidence boxes");
    }

    ImagePrediction pred;
    pred.image_id = ds.image_id;
    pred.scores.assign(g, 0.0);
    pred.counts.assign(g, 0);

    if (boxes.empty()) {
        pred.label = empty;
        pred.scores[empty] = 1.0;
        pred.confidence = 1.0;
        pred.no_boxes = true;
        return pred;
    }

    double weight_sum = 0;
    for (std::size_t j = 0; j < boxes.size(); ++j) {
        check_normalized(boxes[j].scores, g, j);
        weight_sum += boxes[j].confidence;
    }
    // All-zero confidences (possible only at alpha = 0) fall back to equal weights.
    const bool equal_weights = !(weight_sum > 0);
    if (equal_weights) weight_sum = static_cast<double>(boxes.size());
    // Normalizing the weights first keeps a single box's scores exact.
    bool all_boxes_empty = true;
    for (const auto& box : boxes) {
        const double w = (equal_weights ? 1.0 : box.confidence) / weight_sum;
        for (std::size_t k = 0; k < g; ++k) pred.scores[k] += w * box.scores[k];
        const auto top = argmax(box.scores);
        if (top != empty) {
            ++pred.counts[top];
            all_boxes_empty = false;
        }
    }

    if (cfg.rule == MergeRule::aggregate) {
        pred.label = argmax(pred.scores);
    } else if (all_boxes_empty) {
        pred.label = empty;
    } else {
        std::size_t best = empty == 0 ? 1 : 0;
        for (std::size_t k = 0; k < g; ++k) {
            if (k != empty && pred.scores[k] > pred.scores[best]) best = k;
        }
        pred.label = best;
    }
    pred.confidence = pred.scores[argmax(pred.scores)];
    pred.abstained = pred.confidence <= cfg.beta;
    return pred;
}

void write_predictions_csv(std::ostream& out, std::span<const ImagePrediction> preds, const LabelSpace& labels) {
    csv::Row header{"image_id", "label", "confidence", "abstained"};
    for (const auto& name : labels.names()) header.push_back("score_" + name);
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (k != labels.empty_index()) header.push_back("count_" + labels.name(k));
    }
    csv::write_row(out, header);
    for (const auto& p : preds) {
        csv::Row row{p.image_id, labels.name(p.label), csv::format_double(p.confidence), p.abstained ? "1" : "0"};
        for (double s : p.scores) row.push_back(csv::format_double(s));
        for (std::size_t k = 0; k < labels.size(); ++k) {
            if (k != labels.empty_index()) row.push_back(std::to_string(p.counts[k]));
        }
        csv::write_row(out, row);
    }
}

}  // namespace wildal
