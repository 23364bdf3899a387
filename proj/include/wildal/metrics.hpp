#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wildal/ingest.hpp"

namespace wildal {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(LabelSpace labels);

    const LabelSpace& label_space() const noexcept { return labels_; }
    std::size_t classes() const noexcept { return labels_.size(); }
    std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * classes() + predicted]; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes() + predicted]; }
    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t k) const;
    std::uint64_t column_sum(std::size_t k) const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    LabelSpace labels_;
    std::vector<std::uint64_t> counts_;
};

// Throws LengthMismatch, UnknownLabel.
ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          const LabelSpace& labels);
ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> predicted,
                          const LabelSpace& labels);

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::uint64_t support = 0;
};

struct MetricReport {
    LabelSpace labels;
    double accuracy = 0;
    std::vector<ClassMetrics> per_class;
    double weighted_precision = 0;
    double weighted_recall = 0;
    double weighted_f1 = 0;
    std::uint64_t total = 0;
};

enum class MetricKind { recall, precision, f1, accuracy };

// Zero denominators give 0. Throws EmptyMatrix.
MetricReport report(const ConfusionMatrix& cm);
double weighted_metric(const MetricReport& r, MetricKind kind);

// 2x2 matrix over {empty, non-empty}; every animal class is merged.
ConfusionMatrix collapse_empty(const ConfusionMatrix& cm);

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm);
void write_report_csv(std::ostream& out, const MetricReport& r);
// Fixed-width table for terminals.
std::string format_report(const MetricReport& r);
std::string format_confusion(const ConfusionMatrix& cm);

std::string to_string(MetricKind kind);
MetricKind parse_metric_kind(const std::string& name);

}  // namespace wildal
