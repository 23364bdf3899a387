#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wildal/active.hpp"
#include "wildal/store.hpp"

namespace wildal {

struct IterateOptions {
    std::optional<bool> skip_tuning;
    std::optional<StartMode> start_mode;
};

/// A project opened for active learning. Every mutating call persists the
/// project before returning. Single writer; callers serialize.
class Session {
public:
    explicit Session(Project project);

    Project& project() noexcept { return project_; }
    const Project& project() const noexcept { return project_; }
    Pipeline& pipeline() noexcept { return *pipeline_; }
    const ALState& state() const noexcept { return learner_->state(); }
    const std::optional<HeadModel>& model() const noexcept { return learner_->model(); }

    std::vector<std::string> select(std::optional<std::size_t> batch_size = std::nullopt,
                                    std::optional<bool> stratified = std::nullopt);
    SubmitResult submit(const std::vector<std::pair<std::string, std::string>>& labels);
    IterationRecord iterate(const IterateOptions& options = {});
    // Predicts the unlabeled pool and writes predictions.csv.
    std::vector<ImagePrediction> finalize();

    // Current-model predictions for specific images (empty without a model).
    std::vector<ImagePrediction> predict(const std::vector<std::string>& image_ids);

private:
    void persist();

    Project project_;
    std::unique_ptr<Pipeline> pipeline_;
    std::unique_ptr<ActiveLearner> learner_;
};

}  // namespace wildal
