#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wildal/error.hpp"
#include "wildal/tuning.hpp"

namespace wildal {

enum class Acquisition { entropy, random };

std::string to_string(Acquisition a);
Acquisition parse_acquisition(const std::string& s);

struct IterationRecord {
    int iteration = 0;
    std::vector<std::string> queried;  // labeled since the previous iteration
    std::string checkpoint;            // filled in by the project store
    Lambda lambda;
    std::size_t labeled_count = 0;
    std::optional<MetricReport> test_report;
    double accuracy = 0;
    double weighted_f1 = 0;
};

/// Pools and history of one labeling campaign. `labels` holds the known
/// class of every labeled-pool and frozen-test image.
struct ALState {
    int iteration = 0;
    std::set<std::string> labeled;
    std::set<std::string> unlabeled;
    std::set<std::string> frozen_test;
    std::map<std::string, std::string> labels;
    std::vector<std::string> queued;          // last selected batch
    std::vector<std::string> newly_labeled;   // since the last iteration
    std::vector<IterationRecord> history;
    std::optional<Lambda> last_lambda;
};

// Frozen test images must carry a dataset label. Initially labeled images
// (id -> class) join the labeled pool; everything else is unlabeled.
ALState init_state(const Dataset& ds, const std::set<std::string>& frozen_test,
                   const std::map<std::string, std::string>& initial_labels = {});

// Picks the frozen test set as a station-stratified `fraction` of the labeled images.
std::set<std::string> sample_test_set(const Dataset& ds, double fraction, std::uint64_t seed);

// Softmax entropy -sum p ln p (natural log, 0 ln 0 = 0). Throws UnnormalizedScore.
double acquisition_score(const ImagePrediction& pred);

struct SelectOptions {
    std::size_t batch_size = 128;
    bool stratified = false;
    Acquisition acquisition = Acquisition::entropy;
    std::uint64_t seed = 0;
};

// Iteration 0 (or random acquisition) samples uniformly without replacement;
// otherwise the highest-entropy images, ties by image_id. Stratified mode
// gives each station a largest-remainder quota proportional to its pool
// share and fills shortfalls globally. Predictions must cover the pool when
// entropy is used. Throws EmptyPool, InvalidArgument.
std::vector<std::string> select_batch(const ALState& state, std::span<const ImagePrediction> predictions,
                                      const Dataset& ds, const SelectOptions& options);

struct SubmitResult {
    std::vector<std::string> accepted;
    std::vector<std::pair<std::string, Errc>> rejected;
};

// Moves unlabeled ids into the labeled pool. Re-submitting an identical
// label is a no-op (accepted); a different label is LabelConflict; test or
// unknown ids are NotQueriedOrUnknown; classes outside the space are UnknownLabel.
SubmitResult submit_labels(ALState& state, std::span<const std::pair<std::string, std::string>> labels,
                           const LabelSpace& space);

struct ALConfig {
    std::size_t batch_size = 128;
    bool stratify = false;
    Acquisition acquisition = Acquisition::entropy;
    bool skip_tuning = false;
    // Warm start: every iteration begins from warm_start(*warm_source).
    std::optional<HeadModel> warm_source;
    std::string warm_ref;
    HyperGrid grid;
    Lambda default_lambda{"toy", 0.1};
    TrainConfig train;
    double beta = 0.0;
    MergeRule rule = MergeRule::aggregate;
    int augment_k = 0;
    std::uint64_t seed = 0;
    SplitFractions tuning_split{0.85, 0.15, 0.0};
};

/// The labeling loop: select, label, retrain, evaluate, and finally predict
/// the rest. Single writer; callers serialize access.
class ActiveLearner {
public:
    ActiveLearner(Pipeline& pipeline, ALConfig config, ALState state);

    const ALState& state() const noexcept { return state_; }
    // For bookkeeping by the project store (checkpoint refs); pools stay the learner's business.
    ALState& state() noexcept { return state_; }
    const ALConfig& config() const noexcept { return config_; }
    ALConfig& config() noexcept { return config_; }
    const std::optional<HeadModel>& model() const noexcept { return model_; }
    void set_model(HeadModel model) { model_ = std::move(model); }

    // Merged predictions for the images in the unlabeled pool (sorted by id).
    std::vector<ImagePrediction> predict_pool();
    std::vector<std::string> select(std::optional<std::size_t> batch_size = std::nullopt,
                                    std::optional<bool> stratified = std::nullopt);
    SubmitResult submit(std::span<const std::pair<std::string, std::string>> labels);
    // The head training would start from at the next iteration for `lambda`.
    HeadModel initial_head(const Lambda& lambda) const;
    // Throws NoLabels.
    IterationRecord iterate();
    // Throws NoModel.
    std::vector<ImagePrediction> finalize();

private:
    std::vector<LabeledImage> labeled_items(const std::set<std::string>& ids) const;
    Lambda choose_lambda(const std::vector<LabeledImage>& labeled);

    Pipeline* pipeline_;
    ALConfig config_;
    ALState state_;
    std::optional<HeadModel> model_;
};

// iteration,labeled_count,accuracy,weighted_f1
void write_history_csv(std::ostream& out, std::span<const IterationRecord> history);

}  // namespace wildal
