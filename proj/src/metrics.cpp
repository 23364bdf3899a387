#include "wildal/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "wildal/csv.hpp"
#include "wildal/error.hpp"

namespace wildal {

ConfusionMatrix::ConfusionMatrix(LabelSpace labels)
    : labels_(std::move(labels)), counts_(labels_.size() * labels_.size(), 0) {}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t k) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < classes(); ++p) s += at(k, p);
    return s;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t k) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < classes(); ++t) s += at(t, k);
    return s;
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                          const LabelSpace& labels) {
    if (truth.size() != predicted.size()) {
        throw Error(Errc::LengthMismatch, std::to_string(truth.size()) + " true labels vs " +
                                              std::to_string(predicted.size()) + " predictions");
    }
    ConfusionMatrix cm(labels);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= labels.size() || predicted[i] >= labels.size()) {
            throw Error(Errc::UnknownLabel, "class index outside label space at item " + std::to_string(i));
        }
        ++cm.at(truth[i], predicted[i]);
    }
    return cm;
}

ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> predicted,
                          const LabelSpace& labels) {
    if (truth.size() != predicted.size()) {
        throw Error(Errc::LengthMismatch, std::to_string(truth.size()) + " true labels vs " +
                                              std::to_string(predicted.size()) + " predictions");
    }
    std::vector<std::size_t> t, p;
    t.reserve(truth.size());
    p.reserve(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        t.push_back(labels.require(truth[i]));
        p.push_back(labels.require(predicted[i]));
    }
    return confusion(t, p, labels);
}

MetricReport report(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw Error(Errc::EmptyMatrix, "confusion matrix has no items");
    MetricReport r;
    r.labels = cm.label_space();
    r.total = total;
    const std::size_t g = cm.classes();
    std::uint64_t diag = 0;
    r.per_class.resize(g);
    for (std::size_t k = 0; k < g; ++k) {
        auto& m = r.per_class[k];
        const auto tp = cm.at(k, k);
        diag += tp;
        const auto col = cm.column_sum(k);
        m.support = cm.row_sum(k);
        m.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        m.recall = m.support ? static_cast<double>(tp) / static_cast<double>(m.support) : 0.0;
        m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        r.weighted_precision += static_cast<double>(m.support) * m.precision;
        // support * (tp / support) == tp; summing tp keeps the identity with accuracy exact
        r.weighted_recall += static_cast<double>(tp);
        r.weighted_f1 += static_cast<double>(m.support) * m.f1;
    }
    const auto n = static_cast<double>(total);
    r.accuracy = static_cast<double>(diag) / n;
    r.weighted_precision /= n;
    r.weighted_recall /= n;
    r.weighted_f1 /= n;
    return r;
}

double weighted_metric(const MetricReport& r, MetricKind kind) {
    switch (kind) {
        case MetricKind::recall: return r.weighted_recall;
        case MetricKind::precision: return r.weighted_precision;
        case MetricKind::f1: return r.weighted_f1;
        case MetricKind::accuracy: return r.accuracy;
    }
    return 0;
}

ConfusionMatrix collapse_empty(const ConfusionMatrix& cm) {
    ConfusionMatrix out(LabelSpace({std::string(kEmptyClass), "non-empty"}));
    const auto e = cm.label_space().empty_index();
    for (std::size_t t = 0; t < cm.classes(); ++t) {
        for (std::size_t p = 0; p < cm.classes(); ++p) {
            out.at(t == e ? 0 : 1, p == e ? 0 : 1) += cm.at(t, p);
        }
    }
    return out;
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
    csv::Row header{"true\\predicted"};
    for (const auto& n : cm.label_space().names()) header.push_back(n);
    csv::write_row(out, header);
    for (std::size_t t = 0; t < cm.classes(); ++t) {
        csv::Row row{cm.label_space().name(t)};
        for (std::size_t p = 0; p < cm.classes(); ++p) row.push_back(std::to_string(cm.at(t, p)));
        csv::write_row(out, row);
    }
}

void write_report_csv(std::ostream& out, const MetricReport& r) {
    csv::write_row(out, {"class", "precision", "recall", "f1", "support"});
    for (std::size_t k = 0; k < r.per_class.size(); ++k) {
        const auto& m = r.per_class[k];
        csv::write_row(out, {r.labels.name(k), csv::format_double(m.precision), csv::format_double(m.recall),
                             csv::format_double(m.f1), std::to_string(m.support)});
    }
    csv::write_row(out, {"weighted", csv::format_double(r.weighted_precision), csv::format_double(r.weighted_recall),
                         csv::format_double(r.weighted_f1), std::to_string(r.total)});
    csv::write_row(out, {"accuracy", "", "", csv::format_double(r.accuracy), std::to_string(r.total)});
}

std::string format_report(const MetricReport& r) {
    std::size_t w = 8;
    for (const auto& n : r.labels.names()) w = std::max(w, n.size());
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << std::left << std::setw(static_cast<int>(w)) << "class" << std::right << std::setw(11) << "precision"
       << std::setw(9) << "recall" << std::setw(9) << "f1" << std::setw(9) << "support" << '\n';
    for (std::size_t k = 0; k < r.per_class.size(); ++k) {
        const auto& m = r.per_class[k];
        os << std::left << std::setw(static_cast<int>(w)) << r.labels.name(k) << std::right << std::setw(11)
           << m.precision << std::setw(9) << m.recall << std::setw(9) << m.f1 << std::setw(9) << m.support << '\n';
    }
    os << std::left << std::setw(static_cast<int>(w)) << "weighted" << std::right << std::setw(11)
       << r.weighted_precision << std::setw(9) << r.weighted_recall << std::setw(9) << r.weighted_f1 << std::setw(9)
       << r.total << '\n';
    os << "accuracy " << r.accuracy << '\n';
    return os.str();
}

std::string format_confusion(const ConfusionMatrix& cm) {
    std::size_t w = 6;
    for (const auto& n : cm.label_space().names()) w = std::max(w, n.size() + 1);
    std::ostringstream os;
    os << std::setw(static_cast<int>(w)) << "";
    for (const auto& n : cm.label_space().names()) os << std::setw(static_cast<int>(w)) << n;
    os << '\n';
    for (std::size_t t = 0; t < cm.classes(); ++t) {
        os << std::setw(static_cast<int>(w)) << cm.label_space().name(t);
        for (std::size_t p = 0; p < cm.classes(); ++p) os << std::setw(static_cast<int>(w)) << cm.at(t, p);
        os << '\n';
    }
    return os.str();
}

std::string to_string(MetricKind kind) {
    switch (kind) {
        case MetricKind::recall: return "recall";
        case MetricKind::precision: return "precision";
        case MetricKind::f1: return "f1";
        case MetricKind::accuracy: return "accuracy";
    }
    return "f1";
}

MetricKind parse_metric_kind(const std::string& name) {
    if (name == "recall") return MetricKind::recall;
    if (name == "precision") return MetricKind::precision;
    if (name == "f1") return MetricKind::f1;
    if (name == "accuracy") return MetricKind::accuracy;
    throw Error(Errc::InvalidArgument, "unknown metric '" + name + "' (recall, precision, f1, accuracy)");
}

}  // namespace wildal
