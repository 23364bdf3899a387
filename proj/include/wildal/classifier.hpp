#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wildal/ingest.hpp"

namespace wildal {

enum class ClassWeighting { none, inverse_frequency };

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 30;
    int batch_size = 64;
    double l2 = 1e-4;
    std::uint64_t seed = 0;
    ClassWeighting class_weighting = ClassWeighting::inverse_frequency;
    // 0 means a linear softmax head; otherwise one tanh hidden layer of this width.
    std::size_t hidden_units = 0;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Provenance {
    enum class Kind { cold, warm };
    Kind kind = Kind::cold;
    std::string source;  // checkpoint the warm start was taken from
    friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Softmax classification head over embeddings.
///
/// All parameters live in one flat vector. Linear layout: W (g x dim)
/// row-major, then b (g). Hidden layout: W1 (h x dim), b1 (h), W2 (g x h),
/// b2 (g). The output layer always comes last, so class k owns row k of the
/// output weights and entry k of the output bias.
class HeadModel {
public:
    // Weights uniform in +-1/sqrt(fan_in) from config.seed, biases zero.
    static HeadModel cold_start(LabelSpace labels, std::size_t dim, TrainConfig config);

    const LabelSpace& label_space() const noexcept { return labels_; }
    std::size_t classes() const noexcept { return labels_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t hidden() const noexcept { return config_.hidden_units; }
    const TrainConfig& config() const noexcept { return config_; }
    TrainConfig& config() noexcept { return config_; }
    const Provenance& provenance() const noexcept { return provenance_; }
    void set_provenance(Provenance p) { provenance_ = std::move(p); }

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    // Width of the output layer's input (dim, or hidden units).
    std::size_t output_inputs() const noexcept { return hidden() ? hidden() : dim_; }
    std::size_t output_weight_offset() const noexcept;
    std::size_t output_bias_offset() const noexcept { return output_weight_offset() + classes() * output_inputs(); }
    std::span<const double> output_row(std::size_t k) const;

    std::vector<double> logits(std::span<const float> x) const;
    // Throws DimensionMismatch.
    std::vector<double> predict_scores(std::span<const float> x) const;

    friend bool operator==(const HeadModel&, const HeadModel&) = default;

private:
    HeadModel(LabelSpace labels, std::size_t dim, TrainConfig config);

    LabelSpace labels_;
    std::size_t dim_ = 0;
    TrainConfig config_;
    Provenance provenance_;
    std::vector<double> params_;
};

std::vector<double> softmax(std::span<const double> logits);

/// Row-major float features with class indices.
struct TrainingSet {
    std::size_t dim = 0;
    std::vector<float> features;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const float> row(std::size_t i) const { return std::span<const float>(features).subspan(i * dim, dim); }
    void add(std::span<const float> x, std::size_t label);
};

// Per-class weights; inverse frequency gives class k the weight n / (K * n_k)
// where K counts the classes present. Absent classes get 0.
std::vector<double> class_weights(const TrainingSet& data, std::size_t classes, ClassWeighting mode);

struct LossGradient {
    double loss = 0;
    std::vector<double> gradient;
};

// Weighted mean cross-entropy over `rows` plus (l2/2)*||weights||^2
// (biases are not penalized). Accumulates in double in row order.
LossGradient loss_and_gradient(const HeadModel& head, const TrainingSet& data, std::span<const std::size_t> rows,
                               std::span<const double> weights);
double objective(const HeadModel& head, const TrainingSet& data, std::span<const std::size_t> rows,
                 std::span<const double> weights);

struct TrainResult {
    HeadModel model;
    // Full-set objective after each epoch.
    std::vector<double> loss_curve;
};

// Mini-batch gradient descent with seeded per-epoch shuffling.
// Throws EmptyTrainingSet, DimensionMismatch, UnknownLabel.
TrainResult train(HeadModel head, const TrainingSet& data);

// Full-batch gradient descent decreases the objective for learning rates
// below 1 / (0.5 * (max ||x||^2 + 1) + l2) on a linear head.
double stable_learning_rate(const TrainingSet& data, double l2);

// Output rows of classes shared with `source` are copied exactly; everything
// else is initialized as cold_start(new_labels, dim, source.config()) would.
// Without a shared non-empty class nothing is copied (a cold start).
HeadModel warm_start(const HeadModel& source, const LabelSpace& new_labels, std::size_t dim,
                     std::string source_ref = {});

void save_checkpoint(const HeadModel& head, const std::filesystem::path& path);
HeadModel load_checkpoint(const std::filesystem::path& path);

}  // namespace wildal
