#include "wildal/session.hpp"

#include <sstream>

#include "wildal/error.hpp"

namespace wildal {

Session::Session(Project project) : project_(std::move(project)), pipeline_(project_.make_pipeline()) {
    ALState state = project_.al ? *project_.al : project_.initial_al_state();
    learner_ = std::make_unique<ActiveLearner>(*pipeline_, project_.al_config(), std::move(state));
    if (auto m = project_.current_model(); m && project_.al && !project_.al->history.empty()) {
        learner_->set_model(std::move(*m));
    }
    if (!project_.al) persist();
}

void Session::persist() {
    project_.al = learner_->state();
    project_.save();
}

std::vector<std::string> Session::select(std::optional<std::size_t> batch_size, std::optional<bool> stratified) {
    auto out = learner_->select(batch_size, stratified);
    persist();
    return out;
}

SubmitResult Session::submit(const std::vector<std::pair<std::string, std::string>>& labels) {
    auto r = learner_->submit(labels);
    persist();
    return r;
}

IterationRecord Session::iterate(const IterateOptions& options) {
    auto& cfg = learner_->config();
    if (options.skip_tuning) cfg.skip_tuning = *options.skip_tuning;
    const StartMode mode = options.start_mode.value_or(project_.settings.active.start_mode);
    cfg.warm_source.reset();
    cfg.warm_ref.clear();
    if (mode == StartMode::warm) {
        const auto& fixed = project_.settings.active.warm_checkpoint;
        const std::string ref = !fixed.empty() ? fixed : project_.model;
        if (!ref.empty()) {
            cfg.warm_source = project_.load_checkpoint(ref);
            cfg.warm_ref = ref;
        }
    }

    auto rec = learner_->iterate();
    const auto ref = project_.save_checkpoint(*learner_->model(), checkpoint_name(rec.iteration));
    rec.checkpoint = ref;
    learner_->state().history.back().checkpoint = ref;
    project_.model = ref;
    persist();
    return rec;
}

std::vector<ImagePrediction> Session::finalize() {
    auto preds = learner_->finalize();
    std::ostringstream out;
    write_predictions_csv(out, preds, project_.dataset().label_space());
    atomic_write(project_.path("predictions.csv"), out.str());
    persist();
    return preds;
}

std::vector<ImagePrediction> Session::predict(const std::vector<std::string>& image_ids) {
    const auto& m = learner_->model();
    if (!m || !state().last_lambda) return {};
    std::vector<std::size_t> idx;
    for (const auto& id : image_ids) idx.push_back(project_.dataset().require(id));
    const auto& cfg = learner_->config();
    return pipeline_->predict_dataset(idx, *m, pipeline_config(*state().last_lambda, cfg.beta, cfg.rule));
}

}  // namespace wildal
