#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wildal/metrics.hpp"
#include "wildal/pipeline.hpp"

namespace wildal {

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

struct SplitAssignment {
    std::map<std::string, Split> assignment;
    SplitFractions fractions;
    bool stratify_by_station = true;
    std::uint64_t seed = 0;

    std::vector<std::size_t> indices(const Dataset& ds, Split part) const;
    std::size_t count(Split part) const;
};

// Allocates n items to parts proportional to `fractions` (summing to 1):
// floors first, then the leftover units go to the largest remainders. Equal
// remainders are ordered by `priority` (higher first), then by index.
std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> fractions,
                                           std::span<const double> priority = {});

// Splits the labeled images of `ds` (or of `subset` when given). Within each
// station: seeded shuffle, then largest-remainder sizes; equal remainders go
// to the split furthest behind its global target.
// Throws InvalidFractions, EmptyDataset.
SplitAssignment make_split(const Dataset& ds, SplitFractions fractions, bool stratify, std::uint64_t seed);
SplitAssignment make_split(const Dataset& ds, std::span<const std::size_t> subset, SplitFractions fractions,
                           bool stratify, std::uint64_t seed);

struct SplitItem {
    std::string image_id;
    std::string station_id;
};

// Same allocation over explicit items; labels are the caller's concern.
SplitAssignment make_split(std::span<const SplitItem> items, SplitFractions fractions, bool stratify,
                           std::uint64_t seed);

void write_splits_csv(std::ostream& out, const SplitAssignment& split);
SplitAssignment read_splits_csv(std::istream& in);

struct StationPartition {
    std::vector<std::string> in_sample;
    std::vector<std::string> out_of_sample;
};

// floor(n * fraction) stations (at least 1, at most n-1) go in-sample.
// Throws TooFewStations.
StationPartition make_station_partition(const Dataset& ds, double fraction_in_sample, std::uint64_t seed);

struct HyperGrid {
    std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<std::string> embedders;
    MetricKind metric = MetricKind::f1;

    void validate() const;
};

struct TuningRecord {
    Lambda lambda;
    double metric = 0;  // -infinity for degenerate grid points
    bool degenerate = false;
    std::string note;
    std::optional<HeadModel> model;
    std::optional<MetricReport> report;  // image level, validation data
};

struct TuningResult {
    std::size_t best = 0;
    std::vector<TuningRecord> records;  // grid order: embedders outer, alphas inner

    const TuningRecord& best_record() const { return records.at(best); }
    const Lambda& lambda_star() const { return best_record().lambda; }
};

// Argmax of the metric; ties go to the lower alpha, then the earlier
// embedder in the grid. Throws DegenerateGridPoint if every record is degenerate.
std::size_t select_best(std::span<const TuningRecord> records, const HyperGrid& grid);

using GridEvaluator = std::function<TuningRecord(const Lambda&)>;

TuningResult tune(const HyperGrid& grid, const GridEvaluator& evaluate);

struct TuneOptions {
    double beta = 0.0;
    MergeRule rule = MergeRule::aggregate;
    int augment_k = 0;
};

// Trains one head per grid point on `train` and scores the merged image-level
// predictions on `val`.
TuningResult tune(Pipeline& pipeline, std::span<const LabeledImage> train, std::span<const LabeledImage> val,
                  const HyperGrid& grid, const TrainConfig& config, const TuneOptions& options = {});

struct Evaluation {
    std::optional<ConfusionMatrix> box_confusion;  // absent when no crop passes the threshold
    std::optional<MetricReport> box_level;
    ConfusionMatrix image_confusion;
    std::optional<MetricReport> image_level;  // absent when every image abstained
    std::size_t abstained = 0;
    std::size_t evaluated = 0;
};

// Box level: every high-confidence crop scored against its image's label.
// Image level: merged predictions; abstentions are excluded and counted.
Evaluation evaluate(Pipeline& pipeline, std::span<const LabeledImage> images, const Lambda& lambda,
                    const HeadModel& head, double beta = 0.0, MergeRule rule = MergeRule::aggregate);

// Sorted by metric descending; columns confidence,architecture,metric.
void write_tuning_report(std::ostream& out, const TuningResult& result, const HyperGrid& grid);

}  // namespace wildal
