#include "wildal/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "wildal/csv.hpp"
#include "wildal/error.hpp"
#include "wildal/random.hpp"

namespace wildal {

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw Error(Errc::MalformedRecord, "unknown split '" + s + "'");
}

std::vector<std::size_t> SplitAssignment::indices(const Dataset& ds, Split part) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto it = assignment.find(ds.image(i).image_id);
        if (it != assignment.end() && it->second == part) out.push_back(i);
    }
    return out;
}

std::size_t SplitAssignment::count(Split part) const {
    return static_cast<std::size_t>(
        std::count_if(assignment.begin(), assignment.end(), [&](const auto& kv) { return kv.second == part; }));
}

std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> fractions,
                                           std::span<const double> priority) {
    const std::size_t k = fractions.size();
    std::vector<std::size_t> alloc(k, 0);
    std::vector<double> rem(k, 0.0);
    std::size_t used = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = static_cast<double>(n) * fractions[i];
        // tolerance absorbs products like 100 * 0.7 = 69.99999999999999
        alloc[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rem[i] = std::max(0.0, exact - static_cast<double>(alloc[i]));
        used += alloc[i];
    }
    while (used > n) {
        // only reachable through the tolerance above; take back from the smallest remainder
        auto i = static_cast<std::size_t>(std::min_element(rem.begin(), rem.end()) - rem.begin());
        if (alloc[i] == 0) break;
        --alloc[i];
        rem[i] += 1.0;
        --used;
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (std::abs(rem[a] - rem[b]) > 1e-12) return rem[a] > rem[b];
        const double pa = priority.empty() ? 0.0 : priority[a];
        const double pb = priority.empty() ? 0.0 : priority[b];
        if (std::abs(pa - pb) > 1e-12) return pa > pb;
        return a < b;
    });
    for (std::size_t j = 0; used < n; j = (j + 1) % k) {
        ++alloc[order[j]];
        ++used;
    }
    return alloc;
}

namespace {

void check_fractions(const SplitFractions& f) {
    const double parts[3] = {f.train, f.val, f.test};
    for (double p : parts) {
        if (!(p >= 0) || !std::isfinite(p)) throw Error(Errc::InvalidFractions, "split fractions must be non-negative");
    }
    if (!(f.train > 0)) throw Error(Errc::InvalidFractions, "train fraction must be positive");
    if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
        throw Error(Errc::InvalidFractions, "split fractions must sum to 1");
    }
}

}  // namespace

SplitAssignment make_split(const Dataset& ds, SplitFractions fractions, bool stratify, std::uint64_t seed) {
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    return make_split(ds, all, fractions, stratify, seed);
}

SplitAssignment make_split(const Dataset& ds, std::span<const std::size_t> subset, SplitFractions fractions,
                           bool stratify, std::uint64_t seed) {
    std::vector<SplitItem> items;
    for (auto i : subset) {
        const auto& rec = ds.image(i);
        if (rec.label) items.push_back({rec.image_id, rec.station_id});
    }
    return make_split(items, fractions, stratify, seed);
}

SplitAssignment make_split(std::span<const SplitItem> items, SplitFractions fractions, bool stratify,
                           std::uint64_t seed) {
    check_fractions(fractions);
    SplitAssignment out;
    out.fractions = fractions;
    out.stratify_by_station = stratify;
    out.seed = seed;

    // group -> image ids, both sorted so the result does not depend on input order
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& item : items) groups[stratify ? item.station_id : std::string()].push_back(item.image_id);
    if (groups.empty()) throw Error(Errc::EmptyDataset, "no labeled images to split");

    const double f[3] = {fractions.train, fractions.val, fractions.test};
    const Split parts[3] = {Split::train, Split::val, Split::test};
    double cum_exact[3] = {0, 0, 0};
    std::size_t cum_alloc[3] = {0, 0, 0};
    for (auto& [station, ids] : groups) {
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
            throw Error(Errc::DuplicateImageId, "duplicate image in split input");
        }
        auto rng = make_rng(seed, "split/" + station);
        std::shuffle(ids.begin(), ids.end(), rng);

        const std::size_t n = ids.size();
        double priority[3];
        for (int k = 0; k < 3; ++k) {
            cum_exact[k] += static_cast<double>(n) * f[k];
            const double floor_k = std::floor(static_cast<double>(n) * f[k] + 1e-9);
            priority[k] = cum_exact[k] - (static_cast<double>(cum_alloc[k]) + floor_k);
        }
        const auto sizes = largest_remainder(n, f, priority);
        std::size_t pos = 0;
        for (int k = 0; k < 3; ++k) {
            for (std::size_t j = 0; j < sizes[k]; ++j) out.assignment[ids[pos++]] = parts[k];
            cum_alloc[k] += sizes[k];
        }
    }
    return out;
}

void write_splits_csv(std::ostream& out, const SplitAssignment& split) {
    csv::write_row(out, {"image_id", "split"});
    for (const auto& [id, part] : split.assignment) csv::write_row(out, {id, to_string(part)});
}

SplitAssignment read_splits_csv(std::istream& in) {
    auto table = csv::read(in);
    const int id_col = table.column("image_id");
    const int split_col = table.column("split");
    if (id_col < 0 || split_col < 0) throw Error(Errc::MalformedRecord, "splits header must be image_id,split");
    SplitAssignment out;
    for (const auto& row : table.rows) {
        if (!out.assignment.emplace(row[id_col], parse_split(row[split_col])).second) {
            throw Error(Errc::DuplicateImageId, row[id_col]);
        }
    }
    return out;
}

StationPartition make_station_partition(const Dataset& ds, double fraction_in_sample, std::uint64_t seed) {
    auto stations = ds.stations();
    if (stations.size() < 2) throw Error(Errc::TooFewStations, "need at least 2 stations, have " + std::to_string(stations.size()));
    if (!(fraction_in_sample > 0 && fraction_in_sample < 1)) {
        throw Error(Errc::InvalidFractions, "in-sample fraction must lie in (0,1)");
    }
    auto rng = make_rng(seed, "stations");
    std::shuffle(stations.begin(), stations.end(), rng);
    const auto n = stations.size();
    auto n_in = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction_in_sample + 1e-9));
    n_in = std::clamp<std::size_t>(n_in, 1, n - 1);
    StationPartition out;
    out.in_sample.assign(stations.begin(), stations.begin() + static_cast<std::ptrdiff_t>(n_in));
    out.out_of_sample.assign(stations.begin() + static_cast<std::ptrdiff_t>(n_in), stations.end());
    std::sort(out.in_sample.begin(), out.in_sample.end());
    std::sort(out.out_of_sample.begin(), out.out_of_sample.end());
    return out;
}

void HyperGrid::validate() const {
    if (alphas.empty() || embedders.empty()) throw Error(Errc::InvalidArgument, "hyperparameter grid must be non-empty");
    for (double a : alphas) {
        if (!(a >= 0 && a <= 1)) throw Error(Errc::InvalidArgument, "alpha outside [0,1]");
    }
}

namespace {

std::size_t embedder_rank(const HyperGrid& grid, const std::string& name) {
    auto it = std::find(grid.embedders.begin(), grid.embedders.end(), name);
    return static_cast<std::size_t>(it - grid.embedders.begin());
}

// true when a ranks strictly before b
bool ranks_before(const TuningRecord& a, const TuningRecord& b, const HyperGrid& grid) {
    if (a.metric != b.metric) return a.metric > b.metric;
    if (a.lambda.alpha != b.lambda.alpha) return a.lambda.alpha < b.lambda.alpha;
    return embedder_rank(grid, a.lambda.embedder) < embedder_rank(grid, b.lambda.embedder);
}

}  // namespace

std::size_t select_best(std::span<const TuningRecord> records, const HyperGrid& grid) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].degenerate) continue;
        if (!best || ranks_before(records[i], records[*best], grid)) best = i;
    }
    if (!best) throw Error(Errc::DegenerateGridPoint, "every grid point is degenerate");
    return *best;
}

TuningResult tune(const HyperGrid& grid, const GridEvaluator& evaluate_point) {
    grid.validate();
    TuningResult result;
    for (const auto& embedder : grid.embedders) {
        for (double alpha : grid.alphas) {
            const Lambda lambda{embedder, alpha};
            TuningRecord rec;
            try {
                rec = evaluate_point(lambda);
            } catch (const Error& e) {
                if (e.code() != Errc::DegenerateGridPoint && e.code() != Errc::EmptyTrainingSet &&
                    e.code() != Errc::EmptyMatrix) {
                    throw;
                }
                rec.degenerate = true;
                rec.note = e.what();
            }
            rec.lambda = lambda;
            if (rec.degenerate) rec.metric = -std::numeric_limits<double>::infinity();
            result.records.push_back(std::move(rec));
        }
    }
    result.best = select_best(result.records, grid);
    return result;
}

TuningResult tune(Pipeline& pipeline, std::span<const LabeledImage> train, std::span<const LabeledImage> val,
                  const HyperGrid& grid, const TrainConfig& config, const TuneOptions& options) {
    if (train.empty() || val.empty()) throw Error(Errc::EmptyDataset, "tuning needs training and validation images");
    return tune(grid, [&](const Lambda& lambda) {
        auto fitted = fit_head(pipeline, train, lambda, config, std::nullopt, options.augment_k);
        auto eval = evaluate(pipeline, val, lambda, fitted.model, options.beta, options.rule);
        if (!eval.image_level) throw Error(Errc::EmptyMatrix, "every validation image abstained");
        TuningRecord rec;
        rec.metric = weighted_metric(*eval.image_level, grid.metric);
        rec.report = std::move(eval.image_level);
        rec.model = std::move(fitted.model);
        return rec;
    });
}

Evaluation evaluate(Pipeline& pipeline, std::span<const LabeledImage> images, const Lambda& lambda,
                    const HeadModel& head, double beta, MergeRule rule) {
    const auto& labels = pipeline.dataset().label_space();
    std::vector<std::size_t> box_truth, box_pred, img_truth, img_pred;
    Evaluation out{std::nullopt, std::nullopt, ConfusionMatrix(labels), std::nullopt, 0, 0};
    const auto cfg = pipeline_config(lambda, beta, rule);
    for (const auto& item : images) {
        const auto& ds = pipeline.dataset().detection_set(item.image);
        const auto boxes = pipeline.predict_boxes(item.image, head, lambda);
        std::vector<BoxScore> scores;
        for (const auto& b : boxes) {
            box_truth.push_back(item.label);
            box_pred.push_back(argmax(b.scores));
            scores.push_back({ds.detections[b.box].confidence, b.scores});
        }
        const auto pred = merge_image(ds, scores, cfg, labels);
        ++out.evaluated;
        if (pred.abstained) {
            ++out.abstained;
            continue;
        }
        img_truth.push_back(item.label);
        img_pred.push_back(pred.label);
    }
    if (!box_truth.empty()) {
        out.box_confusion = confusion(box_truth, box_pred, labels);
        out.box_level = report(*out.box_confusion);
    }
    out.image_confusion = confusion(img_truth, img_pred, labels);
    if (!img_truth.empty()) out.image_level = report(out.image_confusion);
    return out;
}

void write_tuning_report(std::ostream& out, const TuningResult& result, const HyperGrid& grid) {
    std::vector<std::size_t> order(result.records.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ranks_before(result.records[a], result.records[b], grid);
    });
    csv::write_row(out, {"confidence", "architecture", "metric"});
    for (auto i : order) {
        const auto& r = result.records[i];
        csv::write_row(out, {csv::format_double(r.lambda.alpha), r.lambda.embedder,
                             r.degenerate ? "-inf" : csv::format_double(r.metric)});
    }
}

}  // namespace wildal
