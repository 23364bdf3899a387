#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wildal {

inline constexpr std::string_view kEmptyClass = "empty";

/// Ordered class names. Always contains the reserved class "empty" exactly
/// once and at least one other class.
class LabelSpace {
public:
    LabelSpace() = default;
    explicit LabelSpace(std::vector<std::string> classes);

    std::size_t size() const noexcept { return classes_.size(); }
    const std::string& name(std::size_t index) const { return classes_.at(index); }
    const std::vector<std::string>& names() const noexcept { return classes_; }
    std::optional<std::size_t> index_of(std::string_view name) const;
    // Throws UnknownLabel.
    std::size_t require(std::string_view name) const;
    bool contains(std::string_view name) const { return index_of(name).has_value(); }
    std::size_t empty_index() const noexcept { return empty_index_; }

    friend bool operator==(const LabelSpace& a, const LabelSpace& b) { return a.classes_ == b.classes_; }

private:
    std::vector<std::string> classes_;
    std::size_t empty_index_ = 0;
};

enum class DetectorCategory { animal = 1, person = 2, vehicle = 3 };

/// Normalized rectangle, top-left corner plus extent.
struct BBox {
    double x = 0, y = 0, w = 0, h = 0;
    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
    BBox bbox;
    double confidence = 0;
    DetectorCategory category = DetectorCategory::animal;
    friend bool operator==(const Detection&, const Detection&) = default;
};

struct DetectionSet {
    std::string image_id;
    std::vector<Detection> detections;
    friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

struct ImageRecord {
    std::string image_id;
    std::string station_id;
    std::string file_path;
    std::optional<std::string> label;
    std::optional<std::string> capture_time;
    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Images, their detector output (parallel to `images`) and the label space.
class Dataset {
public:
    Dataset() = default;
    Dataset(LabelSpace labels, std::vector<ImageRecord> images, std::vector<DetectionSet> detections);

    const LabelSpace& label_space() const noexcept { return labels_; }
    const std::vector<ImageRecord>& images() const noexcept { return images_; }
    const std::vector<DetectionSet>& detections() const noexcept { return detections_; }
    std::size_t size() const noexcept { return images_.size(); }

    std::optional<std::size_t> find(std::string_view image_id) const;
    // Throws NotQueriedOrUnknown when absent.
    std::size_t require(std::string_view image_id) const;
    const ImageRecord& image(std::size_t i) const { return images_.at(i); }
    const DetectionSet& detection_set(std::size_t i) const { return detections_.at(i); }

    std::vector<std::string> stations() const;
    std::size_t labeled_count() const;

    // Non-fatal issues found while loading (clamped boxes, images without
    // detector entries).
    std::vector<std::string> warnings;

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.labels_ == b.labels_ && a.images_ == b.images_ && a.detections_ == b.detections_;
    }

private:
    LabelSpace labels_;
    std::vector<ImageRecord> images_;
    std::vector<DetectionSet> detections_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ProjectFiles {
    std::filesystem::path manifest;
    std::filesystem::path labels;      // optional; empty path means no labels
    std::filesystem::path detections;
};

Dataset load_project(const ProjectFiles& files, const LabelSpace& labels);

// Stream-level parsers used by load_project; exposed for tests and the service.
std::vector<ImageRecord> parse_manifest(std::istream& in);
std::vector<std::pair<std::string, std::string>> parse_labels(std::istream& in);
// Detector batch-output JSON. Returns (file, detections) in file order;
// clamping warnings are appended to `warnings`.
std::vector<std::pair<std::string, std::vector<Detection>>> parse_detector_output(
    std::istream& in, std::vector<std::string>* warnings = nullptr);

void write_manifest(std::ostream& out, const Dataset& ds);
void write_labels(std::ostream& out, const Dataset& ds);
void write_detector_output(std::ostream& out, const Dataset& ds);
// Writes manifest.csv, labels.csv and detections.json into `dir`.
ProjectFiles save_dataset(const Dataset& ds, const std::filesystem::path& dir);

// Key by which a detector-file entry refers to a manifest image.
const std::string& detector_key(const ImageRecord& rec);

struct ThresholdSplit {
    std::vector<Detection> high;
    std::vector<Detection> low;
    // Positions of each detection in the input list.
    std::vector<std::size_t> high_index;
    std::vector<std::size_t> low_index;
};

// Animal boxes with confidence >= alpha go to `high`; everything else,
// including person and vehicle boxes, goes to `low`. Order is preserved.
ThresholdSplit filter_high_conf(const DetectionSet& ds, double alpha);

// Derives a label space from observed labels: "empty" first, then the other
// names in sorted order.
LabelSpace label_space_from(const std::vector<std::string>& observed);

}  // namespace wildal
