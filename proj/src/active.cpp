#include "wildal/active.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "wildal/csv.hpp"
#include "wildal/error.hpp"
#include "wildal/random.hpp"

namespace wildal {

std::string to_string(Acquisition a) { return a == Acquisition::entropy ? "entropy" : "random"; }

Acquisition parse_acquisition(const std::string& s) {
    if (s == "entropy") return Acquisition::entropy;
    if (s == "random") return Acquisition::random;
    throw Error(Errc::InvalidArgument, "unknown acquisition '" + s + "' (entropy, random)");
}

ALState init_state(const Dataset& ds, const std::set<std::string>& frozen_test,
                   const std::map<std::string, std::string>& initial_labels) {
    ALState state;
    for (const auto& id : frozen_test) {
        const auto& rec = ds.image(ds.require(id));
        if (!rec.label) throw Error(Errc::NoLabels, "test image '" + id + "' has no label");
        state.frozen_test.insert(id);
        state.labels[id] = *rec.label;
    }
    for (const auto& [id, label] : initial_labels) {
        ds.require(id);
        ds.label_space().require(label);
        if (state.frozen_test.count(id)) continue;
        state.labeled.insert(id);
        state.labels[id] = label;
    }
    for (const auto& rec : ds.images()) {
        if (!state.frozen_test.count(rec.image_id) && !state.labeled.count(rec.image_id)) {
            state.unlabeled.insert(rec.image_id);
        }
    }
    return state;
}

std::set<std::string> sample_test_set(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0 && fraction < 1)) throw Error(Errc::InvalidFractions, "test fraction must lie in (0,1)");
    const auto split = make_split(ds, {1.0 - fraction, 0.0, fraction}, true, mix_seed(seed, 0x7E57u));
    std::set<std::string> out;
    for (const auto& [id, part] : split.assignment) {
        if (part == Split::test) out.insert(id);
    }
    return out;
}

double acquisition_score(const ImagePrediction& pred) {
    double sum = 0;
    double h = 0;
    for (double p : pred.scores) {
        if (!(p >= 0) || !std::isfinite(p)) throw Error(Errc::UnnormalizedScore, pred.image_id);
        sum += p;
        if (p > 0) h -= p * std::log(p);
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::UnnormalizedScore, pred.image_id + ": scores do not sum to 1");
    return h;
}

std::vector<std::string> select_batch(const ALState& state, std::span<const ImagePrediction> predictions,
                                      const Dataset& ds, const SelectOptions& options) {
    if (options.batch_size == 0) throw Error(Errc::InvalidArgument, "batch size must be >= 1");
    if (state.unlabeled.empty()) throw Error(Errc::EmptyPool, "no unlabeled images left");

    // Candidates in ranked order.
    std::vector<std::string> ranked(state.unlabeled.begin(), state.unlabeled.end());
    const bool random = state.iteration == 0 || options.acquisition == Acquisition::random;
    if (random) {
        auto rng = make_rng(options.seed, "select/" + std::to_string(state.iteration));
        std::shuffle(ranked.begin(), ranked.end(), rng);
    } else {
        std::unordered_map<std::string, double> entropy;
        for (const auto& p : predictions) entropy[p.image_id] = acquisition_score(p);
        for (const auto& id : ranked) {
            if (!entropy.count(id)) throw Error(Errc::InvalidArgument, "no prediction for pool image '" + id + "'");
        }
        std::stable_sort(ranked.begin(), ranked.end(), [&](const std::string& a, const std::string& b) {
            const double ea = entropy.at(a), eb = entropy.at(b);
            if (ea != eb) return ea > eb;
            return a < b;
        });
    }

    const std::size_t take = std::min(options.batch_size, ranked.size());
    if (!options.stratified) return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take)};

    std::map<std::string, std::size_t> pool_per_station;
    for (const auto& id : ranked) ++pool_per_station[ds.image(ds.require(id)).station_id];
    std::vector<std::string> stations;
    std::vector<double> shares;
    for (const auto& [station, n] : pool_per_station) {
        stations.push_back(station);
        shares.push_back(static_cast<double>(n) / static_cast<double>(ranked.size()));
    }
    const auto quotas = largest_remainder(take, shares);
    std::map<std::string, std::size_t> quota;
    for (std::size_t s = 0; s < stations.size(); ++s) quota[stations[s]] = quotas[s];

    std::vector<std::string> out;
    std::vector<bool> used(ranked.size(), false);
    for (std::size_t i = 0; i < ranked.size() && out.size() < take; ++i) {
        auto& q = quota[ds.image(ds.require(ranked[i])).station_id];
        if (q == 0) continue;
        --q;
        used[i] = true;
        out.push_back(ranked[i]);
    }
    for (std::size_t i = 0; i < ranked.size() && out.size() < take; ++i) {
        if (!used[i]) out.push_back(ranked[i]);
    }
    return out;
}

SubmitResult submit_labels(ALState& state, std::span<const std::pair<std::string, std::string>> labels,
                           const LabelSpace& space) {
    SubmitResult result;
    for (const auto& [id, label] : labels) {
        if (!space.contains(label)) {
            result.rejected.emplace_back(id, Errc::UnknownLabel);
            continue;
        }
        if (state.labeled.count(id)) {
            if (state.labels.at(id) == label) {
                result.accepted.push_back(id);
            } else {
                result.rejected.emplace_back(id, Errc::LabelConflict);
            }
            continue;
        }
        if (!state.unlabeled.count(id)) {
            result.rejected.emplace_back(id, Errc::NotQueriedOrUnknown);
            continue;
        }
        state.unlabeled.erase(id);
        state.labeled.insert(id);
        state.labels[id] = label;
        state.newly_labeled.push_back(id);
        std::erase(state.queued, id);
        result.accepted.push_back(id);
    }
    return result;
}

ActiveLearner::ActiveLearner(Pipeline& pipeline, ALConfig config, ALState state)
    : pipeline_(&pipeline), config_(std::move(config)), state_(std::move(state)) {}

std::vector<LabeledImage> ActiveLearner::labeled_items(const std::set<std::string>& ids) const {
    const auto& ds = pipeline_->dataset();
    std::vector<LabeledImage> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        out.push_back({ds.require(id), ds.label_space().require(state_.labels.at(id))});
    }
    return out;
}

std::vector<ImagePrediction> ActiveLearner::predict_pool() {
    if (!model_ || !state_.last_lambda) throw Error(Errc::NoModel, "no model trained yet");
    const auto& ds = pipeline_->dataset();
    std::vector<std::size_t> images;
    images.reserve(state_.unlabeled.size());
    for (const auto& id : state_.unlabeled) images.push_back(ds.require(id));
    return pipeline_->predict_dataset(images, *model_, pipeline_config(*state_.last_lambda, config_.beta, config_.rule));
}

std::vector<std::string> ActiveLearner::select(std::optional<std::size_t> batch_size, std::optional<bool> stratified) {
    SelectOptions opts;
    opts.batch_size = batch_size.value_or(config_.batch_size);
    opts.stratified = stratified.value_or(config_.stratify);
    opts.acquisition = config_.acquisition;
    opts.seed = config_.seed;
    std::vector<ImagePrediction> preds;
    const bool needs_model = state_.iteration > 0 && config_.acquisition == Acquisition::entropy;
    if (needs_model && !state_.unlabeled.empty()) preds = predict_pool();
    state_.queued = select_batch(state_, preds, pipeline_->dataset(), opts);
    return state_.queued;
}

SubmitResult ActiveLearner::submit(std::span<const std::pair<std::string, std::string>> labels) {
    return submit_labels(state_, labels, pipeline_->dataset().label_space());
}

HeadModel ActiveLearner::initial_head(const Lambda& lambda) const {
    const auto& labels = pipeline_->dataset().label_space();
    const auto dim = pipeline_->dim(lambda.embedder);
    if (config_.warm_source) return warm_start(*config_.warm_source, labels, dim, config_.warm_ref);
    return HeadModel::cold_start(labels, dim, config_.train);
}

Lambda ActiveLearner::choose_lambda(const std::vector<LabeledImage>& labeled) {
    const Lambda fallback = state_.last_lambda.value_or(config_.default_lambda);
    if (config_.skip_tuning) return fallback;

    const auto& ds = pipeline_->dataset();
    std::vector<SplitItem> items;
    for (const auto& item : labeled) items.push_back({ds.image(item.image).image_id, ds.image(item.image).station_id});
    const auto split = make_split(items, config_.tuning_split, config_.stratify,
                                  mix_seed(config_.seed, static_cast<std::uint64_t>(state_.iteration)));
    std::vector<LabeledImage> train, val;
    for (const auto& item : labeled) {
        const auto part = split.assignment.at(ds.image(item.image).image_id);
        (part == Split::val ? val : train).push_back(item);
    }
    if (train.empty() || val.empty()) return fallback;

    HyperGrid grid = config_.grid;
    if (grid.embedders.empty()) grid.embedders = {config_.default_lambda.embedder};
    try {
        TuneOptions opts{config_.beta, config_.rule, config_.augment_k};
        return tune(*pipeline_, train, val, grid, config_.train, opts).lambda_star();
    } catch (const Error& e) {
        if (e.code() == Errc::DegenerateGridPoint) return fallback;
        throw;
    }
}

IterationRecord ActiveLearner::iterate() {
    if (state_.labeled.empty()) throw Error(Errc::NoLabels, "label at least one image before iterating");
    const auto labeled = labeled_items(state_.labeled);
    const Lambda lambda = choose_lambda(labeled);

    HeadModel head = initial_head(lambda);
    try {
        head = fit_head(*pipeline_, labeled, lambda, config_.train, std::move(head), config_.augment_k, false).model;
    } catch (const Error& e) {
        // Nothing passes the threshold: keep the untrained head.
        if (e.code() != Errc::EmptyTrainingSet) throw;
        head = initial_head(lambda);
    }

    IterationRecord rec;
    rec.iteration = state_.iteration;
    rec.queried = state_.newly_labeled;
    rec.lambda = lambda;
    rec.labeled_count = state_.labeled.size();
    if (!state_.frozen_test.empty()) {
        const auto test = labeled_items(state_.frozen_test);
        auto eval = evaluate(*pipeline_, test, lambda, head, config_.beta, config_.rule);
        if (eval.image_level) {
            rec.accuracy = eval.image_level->accuracy;
            rec.weighted_f1 = eval.image_level->weighted_f1;
            rec.test_report = std::move(eval.image_level);
        }
    }

    model_ = std::move(head);
    state_.last_lambda = lambda;
    state_.newly_labeled.clear();
    state_.history.push_back(rec);
    ++state_.iteration;
    return rec;
}

std::vector<ImagePrediction> ActiveLearner::finalize() {
    if (!model_ || !state_.last_lambda) throw Error(Errc::NoModel, "run at least one iteration before finalizing");
    return predict_pool();
}

void write_history_csv(std::ostream& out, std::span<const IterationRecord> history) {
    csv::write_row(out, {"iteration", "labeled_count", "accuracy", "weighted_f1"});
    for (const auto& r : history) {
        csv::write_row(out, {std::to_string(r.iteration), std::to_string(r.labeled_count),
                             csv::format_double(r.accuracy), csv::format_double(r.weighted_f1)});
    }
}

}  // namespace wildal
