#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wildal/active.hpp"
#include "wildal/classifier.hpp"
#include "wildal/embedding.hpp"
#include "wildal/imaging.hpp"
#include "wildal/merge.hpp"
#include "wildal/pipeline.hpp"
#include "wildal/synthetic.hpp"
#include "wildal/tuning.hpp"

namespace wildal {

inline constexpr int kProjectVersion = 1;  // major; minor bumps only add fields
inline constexpr int kProjectMinor = 0;

enum class StartMode { cold, warm };

std::string to_string(StartMode m);
StartMode parse_start_mode(const std::string& s);

struct ActiveSettings {
    std::size_t batch_size = 128;
    bool stratify = false;
    Acquisition acquisition = Acquisition::entropy;
    bool skip_tuning = false;
    int augment_k = 0;
    double test_fraction = 0.15;
    StartMode start_mode = StartMode::cold;
    // Warm starts use this checkpoint (relative to the project) or, when
    // empty, the latest model.
    std::string warm_checkpoint;
};

/// Everything in project.json besides bookkeeping refs.
struct ProjectSettings {
    LabelSpace labels;
    PipelineConfig pipeline;
    CropConfig crop;
    AugmentationPolicy augmentation;
    TrainConfig train;
    HyperGrid grid;
    ActiveSettings active;
    std::uint64_t seed = 0;
    // Directory that manifest file_path entries are relative to.
    std::string image_root;
    std::optional<SynthSpec> synthetic;
    std::uint64_t synthetic_seed = 0;
};

// The "settings" object of project.json.
std::string settings_to_json(const ProjectSettings& s);
ProjectSettings settings_from_json(const std::string& text);
// Merges a JSON object (same schema, any subset of keys) into `s`.
// Throws MalformedRecord.
void apply_settings_patch(ProjectSettings& s, const std::string& patch);

/// Writes `bytes` to a temp file in the same directory and renames it over
/// `path`, so readers see either the old or the new file.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

/// One writer per project directory. Takes over locks left by dead processes.
class ProjectLock {
public:
    // Throws ProjectLocked.
    explicit ProjectLock(const std::filesystem::path& dir);
    ~ProjectLock();
    ProjectLock(const ProjectLock&) = delete;
    ProjectLock& operator=(const ProjectLock&) = delete;

private:
    std::filesystem::path path_;
};

/// A project directory:
///   project.json  manifest.csv  labels.csv  detections.json  splits.csv
///   al_state.json history.csv   tuning.csv  predictions.csv
///   checkpoints/*.head          embeddings/*.wlemb
class Project {
public:
    // Writes a new project; fails with IoFailure if project.json exists.
    static Project create(const std::filesystem::path& dir, ProjectSettings settings, Dataset dataset,
                          const std::vector<EmbeddingStore>& stores = {});
    // Throws MissingFile naming any referenced artifact that is absent,
    // VersionMismatch, CorruptState.
    static Project open(const std::filesystem::path& dir);

    const std::filesystem::path& dir() const noexcept { return dir_; }
    const Dataset& dataset() const noexcept { return *dataset_; }
    void set_dataset(Dataset ds);

    ProjectSettings settings;
    std::optional<SplitAssignment> split;
    std::optional<ALState> al;
    std::optional<Lambda> lambda_star;
    std::string model;  // checkpoint ref of the current model, may be empty
    int minor_version = kProjectMinor;

    const std::vector<std::string>& embedding_names() const noexcept { return embeddings_; }
    void add_embeddings(const EmbeddingStore& store);
    EmbeddingStore embeddings(const std::string& name) const;

    // project.json, splits.csv, al_state.json and history.csv.
    void save() const;
    // Dataset files (manifest.csv, labels.csv, detections.json).
    void save_dataset_files() const;

    std::string save_checkpoint(const HeadModel& head, const std::string& name) const;
    HeadModel load_checkpoint(const std::string& ref) const;
    std::optional<HeadModel> current_model() const;

    // Toy embedder plus every saved store; a saved store named after a pixel
    // provider seeds that provider's cache instead.
    std::unique_ptr<Pipeline> make_pipeline() const;
    std::shared_ptr<const ImageSource> image_source() const;

    // Frozen test set from the split's test part (or a fresh sample), and
    // every other dataset-labeled image as initially labeled.
    ALState initial_al_state() const;
    ALConfig al_config() const;

    std::filesystem::path path(const std::string& relative) const { return dir_ / relative; }

private:
    Project(std::filesystem::path dir, Dataset ds);

    std::filesystem::path dir_;
    std::shared_ptr<Dataset> dataset_;
    std::vector<std::string> embeddings_;
};

std::string checkpoint_name(int iteration);

}  // namespace wildal
