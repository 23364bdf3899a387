#include "wildal/store.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wildal/csv.hpp"
#include "wildal/error.hpp"

namespace wildal {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kProjectFile = "project.json";
constexpr const char* kManifest = "manifest.csv";
constexpr const char* kLabels = "labels.csv";
constexpr const char* kDetections = "detections.json";
constexpr const char* kSplits = "splits.csv";
constexpr const char* kALState = "al_state.json";
constexpr const char* kHistory = "history.csv";

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::MissingFile, p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw Error(Errc::MissingFile, what + " '" + p.string() + "' is missing");
}

std::string rule_name(MergeRule r) { return r == MergeRule::aggregate ? "aggregate" : "strict_per_box"; }
MergeRule parse_rule(const std::string& s) {
    if (s == "aggregate") return MergeRule::aggregate;
    if (s == "strict_per_box") return MergeRule::strict_per_box;
    throw Error(Errc::InvalidArgument, "unknown merge rule '" + s + "'");
}

std::string filter_name(ResizeFilter f) { return f == ResizeFilter::nearest ? "nearest" : "bilinear"; }
ResizeFilter parse_filter(const std::string& s) {
    if (s == "nearest") return ResizeFilter::nearest;
    if (s == "bilinear") return ResizeFilter::bilinear;
    throw Error(Errc::InvalidArgument, "unknown resize filter '" + s + "'");
}

std::string weighting_name(ClassWeighting w) { return w == ClassWeighting::none ? "none" : "inverse_frequency"; }
ClassWeighting parse_weighting(const std::string& s) {
    if (s == "none") return ClassWeighting::none;
    if (s == "inverse_frequency") return ClassWeighting::inverse_frequency;
    throw Error(Errc::InvalidArgument, "unknown class weighting '" + s + "'");
}

json to_json(const Lambda& l) { return {{"embedder", l.embedder}, {"alpha", l.alpha}}; }
Lambda lambda_from(const json& j) { return {j.at("embedder").get<std::string>(), j.at("alpha").get<double>()}; }

json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},       {"batch_size", c.batch_size},
            {"l2", c.l2},                       {"seed", c.seed},           {"class_weighting", weighting_name(c.class_weighting)},
            {"hidden_units", c.hidden_units}};
}

TrainConfig train_from(const json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.l2 = j.value("l2", c.l2);
    c.seed = j.value("seed", c.seed);
    c.class_weighting = parse_weighting(j.value("class_weighting", weighting_name(c.class_weighting)));
    c.hidden_units = j.value("hidden_units", c.hidden_units);
    return c;
}

json to_json(const SynthSpec& s) {
    return {{"images", s.images},
            {"stations", s.stations},
            {"classes", s.classes},
            {"proportions", s.proportions},
            {"dim", s.dim},
            {"separation", s.separation},
            {"spread", s.spread},
            {"true_conf", {s.true_conf.a, s.true_conf.b}},
            {"spurious_conf", {s.spurious_conf.a, s.spurious_conf.b}},
            {"spurious_box_prob", s.spurious_box_prob},
            {"max_animals", s.max_animals},
            {"max_spurious", s.max_spurious},
            {"image_width", s.image_width},
            {"image_height", s.image_height},
            {"clutter_rects", s.clutter_rects},
            {"pixel_noise", s.pixel_noise}};
}

SynthSpec synth_from(const json& j) {
    SynthSpec s;
    s.images = j.value("images", s.images);
    s.stations = j.value("stations", s.stations);
    s.classes = j.value("classes", s.classes);
    s.proportions = j.value("proportions", s.proportions);
    s.dim = j.value("dim", s.dim);
    s.separation = j.value("separation", s.separation);
    s.spread = j.value("spread", s.spread);
    if (j.contains("true_conf")) s.true_conf = {j["true_conf"].at(0), j["true_conf"].at(1)};
    if (j.contains("spurious_conf")) s.spurious_conf = {j["spurious_conf"].at(0), j["spurious_conf"].at(1)};
    s.spurious_box_prob = j.value("spurious_box_prob", s.spurious_box_prob);
    s.max_animals = j.value("max_animals", s.max_animals);
    s.max_spurious = j.value("max_spurious", s.max_spurious);
    s.image_width = j.value("image_width", s.image_width);
    s.image_height = j.value("image_height", s.image_height);
    s.clutter_rects = j.value("clutter_rects", s.clutter_rects);
    s.pixel_noise = j.value("pixel_noise", s.pixel_noise);
    return s;
}

json to_json(const MetricReport& r) {
    json per = json::array();
    for (const auto& c : r.per_class) {
        per.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
    }
    return {{"labels", r.labels.names()},
            {"accuracy", r.accuracy},
            {"per_class", per},
            {"weighted_precision", r.weighted_precision},
            {"weighted_recall", r.weighted_recall},
            {"weighted_f1", r.weighted_f1},
            {"total", r.total}};
}

MetricReport report_from(const json& j) {
    MetricReport r;
    r.labels = LabelSpace(j.at("labels").get<std::vector<std::string>>());
    r.accuracy = j.at("accuracy");
    for (const auto& c : j.at("per_class")) {
        r.per_class.push_back({c.at("precision"), c.at("recall"), c.at("f1"), c.at("support")});
    }
    r.weighted_precision = j.at("weighted_precision");
    r.weighted_recall = j.at("weighted_recall");
    r.weighted_f1 = j.at("weighted_f1");
    r.total = j.at("total");
    return r;
}

json to_json(const IterationRecord& r) {
    return {{"iteration", r.iteration},
            {"queried", r.queried},
            {"checkpoint", r.checkpoint},
            {"lambda", to_json(r.lambda)},
            {"labeled_count", r.labeled_count},
            {"accuracy", r.accuracy},
            {"weighted_f1", r.weighted_f1},
            {"test_report", r.test_report ? to_json(*r.test_report) : json(nullptr)}};
}

IterationRecord record_from(const json& j) {
    IterationRecord r;
    r.iteration = j.at("iteration");
    r.queried = j.at("queried").get<std::vector<std::string>>();
    r.checkpoint = j.value("checkpoint", "");
    r.lambda = lambda_from(j.at("lambda"));
    r.labeled_count = j.at("labeled_count");
    r.accuracy = j.at("accuracy");
    r.weighted_f1 = j.at("weighted_f1");
    if (j.contains("test_report") && !j["test_report"].is_null()) r.test_report = report_from(j["test_report"]);
    return r;
}

json to_json(const ALState& s) {
    json history = json::array();
    for (const auto& r : s.history) history.push_back(to_json(r));
    json labels = json::object();
    for (const auto& [id, l] : s.labels) labels[id] = l;
    return {{"iteration", s.iteration},
            {"labeled", s.labeled},
            {"unlabeled", s.unlabeled},
            {"frozen_test", s.frozen_test},
            {"labels", labels},
            {"queued", s.queued},
            {"newly_labeled", s.newly_labeled},
            {"last_lambda", s.last_lambda ? to_json(*s.last_lambda) : json(nullptr)},
            {"history", history}};
}

ALState al_from(const json& j) {
    ALState s;
    s.iteration = j.at("iteration");
    s.labeled = j.at("labeled").get<std::set<std::string>>();
    s.unlabeled = j.at("unlabeled").get<std::set<std::string>>();
    s.frozen_test = j.at("frozen_test").get<std::set<std::string>>();
    for (const auto& [id, l] : j.at("labels").items()) s.labels[id] = l.get<std::string>();
    s.queued = j.value("queued", std::vector<std::string>{});
    s.newly_labeled = j.value("newly_labeled", std::vector<std::string>{});
    if (j.contains("last_lambda") && !j["last_lambda"].is_null()) s.last_lambda = lambda_from(j["last_lambda"]);
    for (const auto& r : j.at("history")) s.history.push_back(record_from(r));
    return s;
}

json settings_json(const ProjectSettings& s) {
    const auto& a = s.active;
    json j = {
        {"labels", s.labels.names()},
        {"pipeline",
         {{"alpha", s.pipeline.alpha},
          {"beta", s.pipeline.beta},
          {"embedder", s.pipeline.embedder},
          {"rule", rule_name(s.pipeline.rule)}}},
        {"crop", {{"side", s.crop.side}, {"filter", filter_name(s.crop.filter)}}},
        {"augmentation",
         {{"max_per_crop", s.augmentation.max_augmentations_per_crop},
          {"max_rotation_degrees", s.augmentation.max_rotation_degrees},
          {"contrast_min", s.augmentation.contrast_min},
          {"contrast_max", s.augmentation.contrast_max},
          {"seed", s.augmentation.seed}}},
        {"train", to_json(s.train)},
        {"grid",
         {{"alphas", s.grid.alphas}, {"embedders", s.grid.embedders}, {"metric", to_string(s.grid.metric)}}},
        {"active",
         {{"batch_size", a.batch_size},
          {"stratify", a.stratify},
          {"acquisition", to_string(a.acquisition)},
          {"skip_tuning", a.skip_tuning},
          {"augment_k", a.augment_k},
          {"test_fraction", a.test_fraction},
          {"start_mode", to_string(a.start_mode)},
          {"warm_checkpoint", a.warm_checkpoint}}},
        {"seed", s.seed},
        {"image_root", s.image_root},
    };
    if (s.synthetic) j["synthetic"] = {{"seed", s.synthetic_seed}, {"spec", to_json(*s.synthetic)}};
    return j;
}

ProjectSettings settings_from(const json& j) {
    ProjectSettings s;
    s.labels = LabelSpace(j.at("labels").get<std::vector<std::string>>());
    if (j.contains("pipeline")) {
        const auto& p = j["pipeline"];
        s.pipeline.alpha = p.value("alpha", s.pipeline.alpha);
        s.pipeline.beta = p.value("beta", s.pipeline.beta);
        s.pipeline.embedder = p.value("embedder", s.pipeline.embedder);
        s.pipeline.rule = parse_rule(p.value("rule", rule_name(s.pipeline.rule)));
    }
    if (j.contains("crop")) {
        s.crop.side = j["crop"].value("side", s.crop.side);
        s.crop.filter = parse_filter(j["crop"].value("filter", filter_name(s.crop.filter)));
    }
    if (j.contains("augmentation")) {
        const auto& a = j["augmentation"];
        auto& p = s.augmentation;
        p.max_augmentations_per_crop = a.value("max_per_crop", p.max_augmentations_per_crop);
        p.max_rotation_degrees = a.value("max_rotation_degrees", p.max_rotation_degrees);
        p.contrast_min = a.value("contrast_min", p.contrast_min);
        p.contrast_max = a.value("contrast_max", p.contrast_max);
        p.seed = a.value("seed", p.seed);
    }
    if (j.contains("train")) s.train = train_from(j["train"]);
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        s.grid.alphas = g.value("alphas", s.grid.alphas);
        s.grid.embedders = g.value("embedders", s.grid.embedders);
        s.grid.metric = parse_metric_kind(g.value("metric", to_string(s.grid.metric)));
    }
    if (j.contains("active")) {
        const auto& a = j["active"];
        auto& t = s.active;
        t.batch_size = a.value("batch_size", t.batch_size);
        t.stratify = a.value("stratify", t.stratify);
        t.acquisition = parse_acquisition(a.value("acquisition", to_string(t.acquisition)));
        t.skip_tuning = a.value("skip_tuning", t.skip_tuning);
        t.augment_k = a.value("augment_k", t.augment_k);
        t.test_fraction = a.value("test_fraction", t.test_fraction);
        t.start_mode = parse_start_mode(a.value("start_mode", to_string(t.start_mode)));
        t.warm_checkpoint = a.value("warm_checkpoint", t.warm_checkpoint);
    }
    s.seed = j.value("seed", s.seed);
    s.image_root = j.value("image_root", s.image_root);
    if (j.contains("synthetic")) {
        s.synthetic = synth_from(j["synthetic"].at("spec"));
        s.synthetic_seed = j["synthetic"].value("seed", std::uint64_t{0});
    }
    return s;
}

template <typename Fn>
auto parse_or_corrupt(const fs::path& p, Fn&& fn) {
    try {
        return fn(json::parse(read_text(p)));
    } catch (const json::exception& e) {
        throw Error(Errc::CorruptState, p.string() + ": " + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::MissingFile) throw;
        throw Error(Errc::CorruptState, p.string() + ": " + e.what());
    }
}

}  // namespace

std::string settings_to_json(const ProjectSettings& s) { return settings_json(s).dump(2); }

ProjectSettings settings_from_json(const std::string& text) {
    try {
        return settings_from(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRecord, std::string("settings: ") + e.what());
    }
}

void apply_settings_patch(ProjectSettings& s, const std::string& patch) {
    try {
        auto base = settings_json(s);
        const auto p = json::parse(patch);
        if (!p.is_object()) throw Error(Errc::MalformedRecord, "config must be a JSON object");
        base.merge_patch(p);
        s = settings_from(base);
    } catch (const json::exception& e) {
        throw Error(Errc::MalformedRecord, std::string("config: ") + e.what());
    }
}

std::string to_string(StartMode m) { return m == StartMode::cold ? "cold" : "warm"; }

StartMode parse_start_mode(const std::string& s) {
    if (s == "cold") return StartMode::cold;
    if (s == "warm") return StartMode::warm;
    throw Error(Errc::InvalidArgument, "start mode must be cold or warm, got '" + s + "'");
}

std::string checkpoint_name(int iteration) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "iter_%04d", iteration);
    return buf;
}

void atomic_write(const fs::path& path, const std::string& bytes) {
    const auto tmp = path.parent_path() / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoFailure, "cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw Error(Errc::IoFailure, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(Errc::IoFailure, "cannot replace " + path.string());
    }
}

ProjectLock::ProjectLock(const fs::path& dir) : path_(dir / ".lock") {
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd >= 0) {
            const auto pid = std::to_string(::getpid());
            const auto n = ::write(fd, pid.data(), pid.size());
            ::close(fd);
            if (n == static_cast<ssize_t>(pid.size())) return;
            fs::remove(path_);
            throw Error(Errc::IoFailure, "cannot write lock file " + path_.string());
        }
        if (errno != EEXIST) throw Error(Errc::IoFailure, "cannot create lock file " + path_.string());
        long holder = 0;
        std::ifstream(path_) >> holder;
        if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM)) {
            throw Error(Errc::ProjectLocked, "project is in use by process " + std::to_string(holder) + " (" +
                                                 path_.string() + ")");
        }
        // stale lock
        std::error_code ec;
        fs::remove(path_, ec);
    }
    throw Error(Errc::ProjectLocked, "could not take lock " + path_.string());
}

ProjectLock::~ProjectLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

Project::Project(fs::path dir, Dataset ds) : dir_(std::move(dir)), dataset_(std::make_shared<Dataset>(std::move(ds))) {}

void Project::set_dataset(Dataset ds) { dataset_ = std::make_shared<Dataset>(std::move(ds)); }

Project Project::create(const fs::path& dir, ProjectSettings settings, Dataset dataset,
                        const std::vector<EmbeddingStore>& stores) {
    if (fs::exists(dir / kProjectFile)) throw Error(Errc::IoFailure, "a project already exists in " + dir.string());
    if (!(settings.labels == dataset.label_space())) {
        throw Error(Errc::InvalidArgument, "settings and dataset disagree on the label space");
    }
    std::error_code ec;
    fs::create_directories(dir / "checkpoints", ec);
    fs::create_directories(dir / "embeddings", ec);
    if (ec) throw Error(Errc::IoFailure, "cannot create " + dir.string());
    Project p(dir, std::move(dataset));
    p.settings = std::move(settings);
    p.save_dataset_files();
    for (const auto& s : stores) p.add_embeddings(s);
    p.save();
    return p;
}

Project Project::open(const fs::path& dir) {
    const auto manifest_path = dir / kProjectFile;
    require_file(manifest_path, "project manifest");
    const json j = parse_or_corrupt(manifest_path, [](json v) { return v; });
    const int version = j.value("version", -1);
    if (version != kProjectVersion) {
        throw Error(Errc::VersionMismatch, "project version " + std::to_string(version) + ", this build reads " +
                                               std::to_string(kProjectVersion));
    }
    try {
        auto settings = settings_from(j.at("settings"));
        const auto& files = j.at("files");
        ProjectFiles pf{dir / files.value("manifest", kManifest), dir / files.value("labels", kLabels),
                        dir / files.value("detections", kDetections)};
        require_file(pf.manifest, "image manifest");
        require_file(pf.labels, "labels file");
        require_file(pf.detections, "detector output");
        Project p(dir, load_project(pf, settings.labels));
        p.settings = std::move(settings);
        p.minor_version = j.value("minor", 0);

        for (const auto& name : j.value("embeddings", std::vector<std::string>{})) {
            require_file(dir / "embeddings" / (name + ".wlemb"), "embedding store");
            p.embeddings_.push_back(name);
        }
        if (j.contains("split") && !j["split"].is_null()) {
            const auto& s = j["split"];
            const auto file = dir / s.value("file", kSplits);
            require_file(file, "split assignment");
            std::ifstream in(file, std::ios::binary);
            auto split = read_splits_csv(in);
            split.fractions = {s.at("fractions").at(0), s.at("fractions").at(1), s.at("fractions").at(2)};
            split.stratify_by_station = s.value("stratify", true);
            split.seed = s.value("seed", std::uint64_t{0});
            p.split = std::move(split);
        }
        if (j.contains("lambda_star") && !j["lambda_star"].is_null()) p.lambda_star = lambda_from(j["lambda_star"]);
        p.model = j.value("model", "");
        if (!p.model.empty()) require_file(dir / p.model, "model checkpoint");
        if (j.value("al_state", false)) {
            require_file(dir / kALState, "active-learning state");
            p.al = parse_or_corrupt(dir / kALState, [](const json& v) { return al_from(v); });
            for (const auto& r : p.al->history) {
                if (!r.checkpoint.empty()) require_file(dir / r.checkpoint, "checkpoint of iteration " + std::to_string(r.iteration));
            }
        }
        if (!p.settings.active.warm_checkpoint.empty()) {
            require_file(dir / p.settings.active.warm_checkpoint, "warm-start checkpoint");
        }
        return p;
    } catch (const json::exception& e) {
        throw Error(Errc::CorruptState, manifest_path.string() + ": " + e.what());
    }
}

void Project::save_dataset_files() const {
    std::ostringstream m, l, d;
    write_manifest(m, *dataset_);
    write_labels(l, *dataset_);
    write_detector_output(d, *dataset_);
    atomic_write(dir_ / kManifest, m.str());
    atomic_write(dir_ / kLabels, l.str());
    atomic_write(dir_ / kDetections, d.str());
}

void Project::save() const {
    // Data files first, the manifest that references them last.
    if (split) {
        std::ostringstream out;
        write_splits_csv(out, *split);
        atomic_write(dir_ / kSplits, out.str());
    }
    if (al) {
        atomic_write(dir_ / kALState, to_json(*al).dump(1) + "\n");
        std::ostringstream out;
        write_history_csv(out, al->history);
        atomic_write(dir_ / kHistory, out.str());
    }
    json j = {{"format", "wildal-project"},
              {"version", kProjectVersion},
              {"minor", std::max(minor_version, kProjectMinor)},
              {"files", {{"manifest", kManifest}, {"labels", kLabels}, {"detections", kDetections}}},
              {"settings", settings_json(settings)},
              {"embeddings", embeddings_},
              {"split", nullptr},
              {"lambda_star", lambda_star ? to_json(*lambda_star) : json(nullptr)},
              {"model", model},
              {"al_state", al.has_value()}};
    if (split) {
        j["split"] = {{"file", kSplits},
                      {"fractions", {split->fractions.train, split->fractions.val, split->fractions.test}},
                      {"stratify", split->stratify_by_station},
                      {"seed", split->seed}};
    }
    atomic_write(dir_ / kProjectFile, j.dump(2) + "\n");
}

void Project::add_embeddings(const EmbeddingStore& store) {
    const auto& name = store.provider().name;
    if (name.empty() || name.find_first_of("/\\.") != std::string::npos) {
        throw Error(Errc::InvalidArgument, "embedding provider name '" + name + "' is not a valid file name");
    }
    std::error_code ec;
    fs::create_directories(dir_ / "embeddings", ec);
    const auto path = dir_ / "embeddings" / (name + ".wlemb");
    const auto tmp = dir_ / "embeddings" / ("." + name + ".wlemb.tmp");
    write_store(store, tmp);
    fs::rename(tmp, path, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot write " + path.string());
    if (std::find(embeddings_.begin(), embeddings_.end(), name) == embeddings_.end()) embeddings_.push_back(name);
}

EmbeddingStore Project::embeddings(const std::string& name) const {
    return read_store(dir_ / "embeddings" / (name + ".wlemb"));
}

std::string Project::save_checkpoint(const HeadModel& head, const std::string& name) const {
    std::error_code ec;
    fs::create_directories(dir_ / "checkpoints", ec);
    const std::string ref = "checkpoints/" + name + ".head";
    const auto tmp = dir_ / "checkpoints" / ("." + name + ".head.tmp");
    wildal::save_checkpoint(head, tmp);
    fs::rename(tmp, dir_ / ref, ec);
    if (ec) throw Error(Errc::IoFailure, "cannot write " + ref);
    return ref;
}

HeadModel Project::load_checkpoint(const std::string& ref) const { return wildal::load_checkpoint(dir_ / ref); }

std::optional<HeadModel> Project::current_model() const {
    if (model.empty()) return std::nullopt;
    return load_checkpoint(model);
}

std::shared_ptr<const ImageSource> Project::image_source() const {
    if (settings.synthetic) return std::make_shared<SyntheticImageSource>(*settings.synthetic, settings.synthetic_seed);
    fs::path root = settings.image_root.empty() ? dir_ : fs::path(settings.image_root);
    if (root.is_relative()) root = dir_ / root;
    return std::make_shared<FileImageSource>(root);
}

std::unique_ptr<Pipeline> Project::make_pipeline() const {
    EmbedderRegistry reg;
    auto toy = std::make_shared<ToyEmbedder>();
    reg.add(toy);
    std::vector<EmbeddingStore> caches;
    for (const auto& name : embeddings_) {
        auto store = embeddings(name);
        if (reg.contains(name)) {
            caches.push_back(std::move(store));
        } else {
            reg.add(std::make_shared<StoreEmbedder>(std::make_shared<const EmbeddingStore>(std::move(store))));
        }
    }
    auto pipeline = std::make_unique<Pipeline>(*dataset_, image_source(), std::move(reg), settings.crop,
                                               settings.augmentation);
    for (const auto& c : caches) pipeline->preload(c.provider().name, c);
    return pipeline;
}

ALState Project::initial_al_state() const {
    std::set<std::string> test;
    if (split && split->count(Split::test) > 0) {
        for (const auto& [id, part] : split->assignment) {
            if (part == Split::test) test.insert(id);
        }
    } else {
        test = sample_test_set(*dataset_, settings.active.test_fraction, settings.seed);
    }
    std::map<std::string, std::string> initial;
    for (const auto& rec : dataset_->images()) {
        if (rec.label && !test.count(rec.image_id)) initial[rec.image_id] = *rec.label;
    }
    return init_state(*dataset_, test, initial);
}

ALConfig Project::al_config() const {
    ALConfig c;
    const auto& a = settings.active;
    c.batch_size = a.batch_size;
    c.stratify = a.stratify;
    c.acquisition = a.acquisition;
    c.skip_tuning = a.skip_tuning;
    c.grid = settings.grid;
    if (c.grid.embedders.empty()) c.grid.embedders = {settings.pipeline.embedder};
    c.default_lambda = lambda_star.value_or(Lambda{settings.pipeline.embedder, settings.pipeline.alpha});
    c.train = settings.train;
    c.beta = settings.pipeline.beta;
    c.rule = settings.pipeline.rule;
    c.augment_k = a.augment_k;
    c.seed = settings.seed;
    if (a.start_mode == StartMode::warm) {
        const std::string ref = !a.warm_checkpoint.empty() ? a.warm_checkpoint : model;
        if (!ref.empty()) {
            c.warm_source = load_checkpoint(ref);
            c.warm_ref = ref;
        }
    }
    return c;
}

}  // namespace wildal
