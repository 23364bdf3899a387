#include "wildal/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "wildal/csv.hpp"
#include "wildal/error.hpp"

namespace wildal {

namespace {

constexpr double kBoxTolerance = 1e-6;

std::string entry_ref(std::size_t i) { return "entry " + std::to_string(i); }

}  // namespace

LabelSpace::LabelSpace(std::vector<std::string> classes) : classes_(std::move(classes)) {
    if (classes_.size() < 2) throw Error(Errc::InvalidSpec, "label space needs at least 2 classes");
    std::set<std::string> seen;
    bool has_empty = false;
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (classes_[i].empty()) throw Error(Errc::InvalidSpec, "empty class name");
        if (!seen.insert(classes_[i]).second) {
            throw Error(Errc::InvalidSpec, "duplicate class name '" + classes_[i] + "'");
        }
        if (classes_[i] == kEmptyClass) {
            has_empty = true;
            empty_index_ = i;
        }
    }
    if (!has_empty) throw Error(Errc::InvalidSpec, "label space must contain \"empty\"");
}

std::optional<std::size_t> LabelSpace::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (classes_[i] == name) return i;
    }
    return std::nullopt;
}

std::size_t LabelSpace::require(std::string_view name) const {
    auto idx = index_of(name);
    if (!idx) throw Error(Errc::UnknownLabel, "'" + std::string(name) + "' is not in the label space");
    return *idx;
}

LabelSpace label_space_from(const std::vector<std::string>& observed) {
    std::set<std::string> names(observed.begin(), observed.end());
    names.erase(std::string(kEmptyClass));
    std::vector<std::string> classes{std::string(kEmptyClass)};
    classes.insert(classes.end(), names.begin(), names.end());
    return LabelSpace(std::move(classes));
}

Dataset::Dataset(LabelSpace labels, std::vector<ImageRecord> images, std::vector<DetectionSet> detections)
    : labels_(std::move(labels)), images_(std::move(images)), detections_(std::move(detections)) {
    if (detections_.size() != images_.size()) {
        throw Error(Errc::LengthMismatch, "one DetectionSet per image required");
    }
    for (std::size_t i = 0; i < images_.size(); ++i) {
        const auto& rec = images_[i];
        if (rec.image_id.empty()) throw Error(Errc::MalformedRecord, "image " + std::to_string(i) + " has no id");
        if (rec.station_id.empty()) {
            throw Error(Errc::MalformedRecord, "image '" + rec.image_id + "' has no station_id");
        }
        if (!index_.emplace(rec.image_id, i).second) {
            throw Error(Errc::DuplicateImageId, rec.image_id);
        }
        if (rec.label) labels_.require(*rec.label);
        if (detections_[i].image_id != rec.image_id) {
            throw Error(Errc::LengthMismatch, "DetectionSet order does not match images at " + rec.image_id);
        }
    }
}

std::optional<std::size_t> Dataset::find(std::string_view image_id) const {
    auto it = index_.find(std::string(image_id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t Dataset::require(std::string_view image_id) const {
    auto idx = find(image_id);
    if (!idx) throw Error(Errc::NotQueriedOrUnknown, "unknown image '" + std::string(image_id) + "'");
    return *idx;
}

std::vector<std::string> Dataset::stations() const {
    std::set<std::string> s;
    for (const auto& rec : images_) s.insert(rec.station_id);
    return {s.begin(), s.end()};
}

std::size_t Dataset::labeled_count() const {
    return static_cast<std::size_t>(
        std::count_if(images_.begin(), images_.end(), [](const ImageRecord& r) { return r.label.has_value(); }));
}

const std::string& detector_key(const ImageRecord& rec) {
    return rec.file_path.empty() ? rec.image_id : rec.file_path;
}

std::vector<ImageRecord> parse_manifest(std::istream& in) {
    auto table = csv::read(in);
    const int id_col = table.column("image_id");
    const int station_col = table.column("station_id");
    if (id_col < 0 || station_col < 0) {
        throw Error(Errc::MalformedRecord, "manifest header must contain image_id and station_id");
    }
    const int path_col = table.column("file_path");
    const int time_col = table.column("capture_time");
    std::vector<ImageRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        ImageRecord rec;
        rec.image_id = row[id_col];
        rec.station_id = row[station_col];
        if (rec.image_id.empty() || rec.station_id.empty()) {
            throw Error(Errc::MalformedRecord, "manifest row " + std::to_string(i + 1) + ": empty image_id or station_id");
        }
        if (path_col >= 0) rec.file_path = row[path_col];
        if (time_col >= 0 && !row[time_col].empty()) rec.capture_time = row[time_col];
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_labels(std::istream& in) {
    auto table = csv::read(in);
    const int id_col = table.column("image_id");
    const int label_col = table.column("label");
    if (id_col < 0 || label_col < 0) {
        throw Error(Errc::MalformedRecord, "labels header must be image_id,label");
    }
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        if (row[id_col].empty() || row[label_col].empty()) {
            throw Error(Errc::MalformedRecord, "labels row " + std::to_string(i + 1) + " is incomplete");
        }
        out.emplace_back(row[id_col], row[label_col]);
    }
    return out;
}

namespace {

DetectorCategory parse_category(const nlohmann::json& j, const std::string& where) {
    std::string tag;
    if (j.is_string()) {
        tag = j.get<std::string>();
    } else if (j.is_number_integer()) {
        tag = std::to_string(j.get<int>());
    } else {
        throw Error(Errc::MalformedRecord, where + ": category must be a string");
    }
    if (tag == "1") return DetectorCategory::animal;
    if (tag == "2") return DetectorCategory::person;
    if (tag == "3") return DetectorCategory::vehicle;
    throw Error(Errc::MalformedRecord, where + ": unknown category '" + tag + "'");
}

// Clamps spill beyond [0,1]; returns true when the box was modified.
bool clamp_box(BBox& b) {
    bool clamped = false;
    auto clamp_origin = [&](double& v) {
        if (v < -kBoxTolerance || v > 1 + kBoxTolerance) {
            v = std::clamp(v, 0.0, 1.0);
            clamped = true;
        }
    };
    clamp_origin(b.x);
    clamp_origin(b.y);
    if (b.x + b.w > 1 + kBoxTolerance) {
        b.w = 1 - b.x;
        clamped = true;
    }
    if (b.y + b.h > 1 + kBoxTolerance) {
        b.h = 1 - b.y;
        clamped = true;
    }
    return clamped;
}

}  // namespace

std::vector<std::pair<std::string, std::vector<Detection>>> parse_detector_output(
    std::istream& in, std::vector<std::string>* warnings) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::MalformedRecord, std::string("detector file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_array()) {
        throw Error(Errc::MalformedRecord, "detector file needs a top-level \"images\" array");
    }
    std::vector<std::pair<std::string, std::vector<Detection>>> out;
    const auto& images = doc["images"];
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& entry = images[i];
        const std::string where = entry_ref(i);
        if (!entry.is_object() || !entry.contains("file") || !entry["file"].is_string()) {
            throw Error(Errc::MalformedRecord, where + ": missing \"file\"");
        }
        std::vector<Detection> dets;
        // Entries that failed inside the detector carry "failure" and no detections.
        if (entry.contains("detections") && !entry["detections"].is_null()) {
            const auto& arr = entry["detections"];
            if (!arr.is_array()) throw Error(Errc::MalformedRecord, where + ": \"detections\" must be an array");
            for (std::size_t j = 0; j < arr.size(); ++j) {
                const auto& d = arr[j];
                const std::string dwhere = where + " detection " + std::to_string(j);
                if (!d.is_object()) throw Error(Errc::MalformedRecord, dwhere + ": not an object");
                if (!d.contains("conf") || !d["conf"].is_number()) {
                    throw Error(Errc::MalformedRecord, dwhere + ": missing numeric \"conf\"");
                }
                if (!d.contains("bbox") || !d["bbox"].is_array() || d["bbox"].size() != 4) {
                    throw Error(Errc::MalformedRecord, dwhere + ": \"bbox\" must be [x, y, w, h]");
                }
                if (!d.contains("category")) throw Error(Errc::MalformedRecord, dwhere + ": missing \"category\"");
                Detection det;
                det.category = parse_category(d["category"], dwhere);
                det.confidence = d["conf"].get<double>();
                if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) {
                    throw Error(Errc::MalformedRecord, dwhere + ": confidence outside [0,1]");
                }
                for (const auto& v : d["bbox"]) {
                    if (!v.is_number()) throw Error(Errc::MalformedRecord, dwhere + ": non-numeric bbox");
                }
                det.bbox = {d["bbox"][0].get<double>(), d["bbox"][1].get<double>(), d["bbox"][2].get<double>(),
                            d["bbox"][3].get<double>()};
                if (!(det.bbox.w > 0) || !(det.bbox.h > 0)) {
                    throw Error(Errc::MalformedRecord, dwhere + ": non-positive box extent");
                }
                if (clamp_box(det.bbox)) {
                    if (!(det.bbox.w > 0) || !(det.bbox.h > 0)) {
                        throw Error(Errc::MalformedRecord, dwhere + ": box lies outside the image");
                    }
                    if (warnings) warnings->push_back(dwhere + " (" + entry["file"].get<std::string>() + "): box clamped to [0,1]");
                }
                dets.push_back(det);
            }
        }
        out.emplace_back(entry["file"].get<std::string>(), std::move(dets));
    }
    return out;
}

Dataset load_project(const ProjectFiles& files, const LabelSpace& labels) {
    std::ifstream manifest_in(files.manifest, std::ios::binary);
    if (!manifest_in) throw Error(Errc::MissingFile, files.manifest.string());
    auto images = parse_manifest(manifest_in);

    std::unordered_map<std::string, std::size_t> by_id;
    std::unordered_map<std::string, std::size_t> by_key;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!by_id.emplace(images[i].image_id, i).second) throw Error(Errc::DuplicateImageId, images[i].image_id);
        by_key.emplace(detector_key(images[i]), i);
    }

    if (!files.labels.empty()) {
        std::ifstream labels_in(files.labels, std::ios::binary);
        if (!labels_in) throw Error(Errc::MissingFile, files.labels.string());
        auto pairs = parse_labels(labels_in);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& [id, label] = pairs[i];
            auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw Error(Errc::MalformedRecord, "labels row " + std::to_string(i + 1) + ": image '" + id + "' not in manifest");
            }
            labels.require(label);
            auto& slot = images[it->second].label;
            if (slot && *slot != label) {
                throw Error(Errc::MalformedRecord, "labels row " + std::to_string(i + 1) + ": conflicting label for '" + id + "'");
            }
            slot = label;
        }
    }

    std::ifstream det_in(files.detections, std::ios::binary);
    if (!det_in) throw Error(Errc::MissingFile, files.detections.string());
    std::vector<std::string> warnings;
    auto entries = parse_detector_output(det_in, &warnings);

    std::vector<DetectionSet> sets(images.size());
    std::vector<bool> seen(images.size(), false);
    for (std::size_t i = 0; i < images.size(); ++i) sets[i].image_id = images[i].image_id;
    for (std::size_t e = 0; e < entries.size(); ++e) {
        auto& [file, dets] = entries[e];
        std::optional<std::size_t> idx;
        if (auto k = by_key.find(file); k != by_key.end()) {
            idx = k->second;
        } else if (auto k2 = by_id.find(file); k2 != by_id.end()) {
            idx = k2->second;
        }
        if (!idx) {
            throw Error(Errc::MalformedRecord, entry_ref(e) + ": image '" + file + "' is not in the manifest");
        }
        if (seen[*idx]) {
            throw Error(Errc::MalformedRecord, entry_ref(e) + ": duplicate detector entry for '" + file + "'");
        }
        seen[*idx] = true;
        sets[*idx].detections = std::move(dets);
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!seen[i]) warnings.push_back("image '" + images[i].image_id + "' has no detector entry; treated as no detections");
    }

    Dataset ds(labels, std::move(images), std::move(sets));
    ds.warnings = std::move(warnings);
    return ds;
}

void write_manifest(std::ostream& out, const Dataset& ds) {
    csv::write_row(out, {"image_id", "station_id", "file_path", "capture_time"});
    for (const auto& rec : ds.images()) {
        csv::write_row(out, {rec.image_id, rec.station_id, rec.file_path, rec.capture_time.value_or("")});
    }
}

void write_labels(std::ostream& out, const Dataset& ds) {
    csv::write_row(out, {"image_id", "label"});
    for (const auto& rec : ds.images()) {
        if (rec.label) csv::write_row(out, {rec.image_id, *rec.label});
    }
}

void write_detector_output(std::ostream& out, const Dataset& ds) {
    nlohmann::ordered_json doc;
    doc["info"] = {{"format_version", "1.3"}};
    doc["detection_categories"] = {{"1", "animal"}, {"2", "person"}, {"3", "vehicle"}};
    auto images = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        nlohmann::ordered_json entry;
        entry["file"] = detector_key(ds.image(i));
        auto dets = nlohmann::ordered_json::array();
        for (const auto& d : ds.detection_set(i).detections) {
            nlohmann::ordered_json jd;
            jd["category"] = std::to_string(static_cast<int>(d.category));
            jd["conf"] = d.confidence;
            jd["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
            dets.push_back(std::move(jd));
        }
        entry["detections"] = std::move(dets);
        images.push_back(std::move(entry));
    }
    doc["images"] = std::move(images);
    out << doc.dump(1) << '\n';
}

ProjectFiles save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    ProjectFiles files{dir / "manifest.csv", dir / "labels.csv", dir / "detections.json"};
    auto write = [](const std::filesystem::path& p, auto&& fn) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoFailure, "cannot write " + p.string());
        fn(out);
        if (!out) throw Error(Errc::IoFailure, "write failed for " + p.string());
    };
    write(files.manifest, [&](std::ostream& o) { write_manifest(o, ds); });
    write(files.labels, [&](std::ostream& o) { write_labels(o, ds); });
    write(files.detections, [&](std::ostream& o) { write_detector_output(o, ds); });
    return files;
}

ThresholdSplit filter_high_conf(const DetectionSet& ds, double alpha) {
    ThresholdSplit out;
    for (std::size_t j = 0; j < ds.detections.size(); ++j) {
        const auto& d = ds.detections[j];
        if (d.category == DetectorCategory::animal && d.confidence >= alpha) {
            out.high.push_back(d);
            out.high_index.push_back(j);
        } else {
            out.low.push_back(d);
            out.low_index.push_back(j);
        }
    }
    return out;
}

}  // namespace wildal
