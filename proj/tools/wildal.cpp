#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wildal/csv.hpp"
#include "wildal/error.hpp"
#include "wildal/random.hpp"
#include "wildal/service.hpp"
#include "wildal/session.hpp"
#include "wildal/store.hpp"

using namespace wildal;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string project = ".";
    std::optional<std::uint64_t> seed;
    std::string config;
    std::optional<int> augment;
    bool quiet = false;
};

Globals g;

void info(const std::string& msg) {
    if (!g.quiet) std::cerr << msg << "\n";
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::MissingFile, "cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Applies --config and --seed to settings.
void apply_globals(ProjectSettings& s) {
    if (!g.config.empty()) apply_settings_patch(s, read_file(g.config));
    if (g.seed) s.seed = *g.seed;
    if (g.augment) s.active.augment_k = *g.augment;
}

Project open_project() {
    auto p = Project::open(g.project);
    const auto before = settings_to_json(p.settings);
    apply_globals(p.settings);
    if (settings_to_json(p.settings) != before) p.save();
    return p;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& flag) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error(Errc::InvalidArgument, flag + ": '" + item + "' is not a number");
        }
    }
    return out;
}

void write_out(const fs::path& path, const std::string& text) { atomic_write(path, text); }

Lambda current_lambda(const Project& p) { return {p.settings.pipeline.embedder, p.settings.pipeline.alpha}; }

std::vector<std::size_t> labeled_indices(const Dataset& ds) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.image(i).label) out.push_back(i);
    }
    return out;
}

SplitAssignment ensure_split(Project& p) {
    if (!p.split) {
        p.split = make_split(p.dataset(), SplitFractions{}, true, p.settings.seed);
        info("no split yet; created the default 70/15/15 station-stratified split");
    }
    return *p.split;
}

HyperGrid effective_grid(const Project& p) {
    HyperGrid grid = p.settings.grid;
    if (grid.embedders.empty()) grid.embedders = {p.settings.pipeline.embedder};
    return grid;
}

// ---- commands --------------------------------------------------------------

struct InitArgs {
    std::string classes;
    std::string image_root;
};

int cmd_init(const InitArgs& a) {
    ProjectSettings s;
    s.labels = label_space_from(split_list(a.classes));
    s.image_root = a.image_root;
    apply_globals(s);
    Project::create(g.project, s, Dataset(s.labels, {}, {}));
    info("created project in " + g.project);
    return 0;
}

struct IngestArgs {
    std::string manifest, labels, detections, image_root;
    bool force = false;
};

int cmd_ingest(const IngestArgs& a) {
    ProjectLock lock(g.project);
    auto p = open_project();
    if (p.al && !a.force) {
        throw Error(Errc::Conflict, "project already has active-learning state; pass --force to replace the data");
    }
    auto ds = load_project({a.manifest, a.labels, a.detections}, p.settings.labels);
    for (const auto& w : ds.warnings) info("warning: " + w);
    if (!a.image_root.empty()) p.settings.image_root = fs::absolute(a.image_root).string();
    p.set_dataset(std::move(ds));
    p.split.reset();
    p.al.reset();
    p.model.clear();
    p.lambda_star.reset();
    p.save_dataset_files();
    p.save();
    std::cout << "ingested " << p.dataset().size() << " images (" << p.dataset().labeled_count() << " labeled)\n";
    return 0;
}

struct SynthArgs {
    std::size_t images = 2000;
    std::size_t stations = 4;
    std::string classes = "empty,fox,deer,boar,hare";
    std::string proportions = "0.5,0.2,0.15,0.1,0.05";
    std::uint32_t dim = 16;
    double spread = 0.4;
    double labeled_fraction = 0.25;
    int crop_side = 32;
};

int cmd_synth(const SynthArgs& a) {
    SynthSpec spec;
    spec.images = a.images;
    spec.stations = a.stations;
    spec.classes = split_list(a.classes);
    spec.proportions = parse_doubles(a.proportions, "--proportions");
    spec.dim = a.dim;
    spec.spread = a.spread;
    if (!(a.labeled_fraction > 0 && a.labeled_fraction <= 1)) {
        throw Error(Errc::InvalidArgument, "--labeled-fraction must lie in (0,1]");
    }
    const std::uint64_t seed = g.seed.value_or(0);
    auto proj = generate_synthetic_project(spec, seed);

    ProjectSettings s;
    s.labels = proj.dataset.label_space();
    s.crop.side = a.crop_side;
    s.synthetic = spec;
    s.synthetic_seed = seed;
    s.seed = seed;
    s.grid.embedders = {"toy"};
    apply_globals(s);

    // Keep ground truth for a station-stratified fraction; the rest is for labeling.
    std::set<std::string> keep;
    if (a.labeled_fraction >= 1) {
        for (const auto& rec : proj.dataset.images()) keep.insert(rec.image_id);
    } else {
        const auto part = make_split(proj.dataset, {a.labeled_fraction, 0.0, 1.0 - a.labeled_fraction}, true,
                                     mix_seed(seed, 0x1AB));
        for (const auto& [id, sp] : part.assignment) {
            if (sp == Split::train) keep.insert(id);
        }
    }
    std::ostringstream oracle;
    csv::write_row(oracle, {"image_id", "label"});
    std::vector<ImageRecord> images = proj.dataset.images();
    for (auto& rec : images) {
        csv::write_row(oracle, {rec.image_id, *rec.label});
        if (!keep.count(rec.image_id)) rec.label.reset();
    }
    Dataset ds(proj.dataset.label_space(), images, proj.dataset.detections());
    auto p = Project::create(g.project, s, std::move(ds), {proj.embeddings});
    write_out(p.path("oracle.csv"), oracle.str());
    std::cout << "generated " << spec.images << " images (" << keep.size() << " labeled); ground truth in "
              << p.path("oracle.csv").string() << "\n";
    return 0;
}

struct EmbedArgs {
    std::string provider = "toy";
    std::string import_path;
};

int cmd_embed(const EmbedArgs& a) {
    ProjectLock lock(g.project);
    auto p = open_project();
    if (!a.import_path.empty()) {
        auto store = read_store(a.import_path);
        p.add_embeddings(store);
        p.save();
        std::cout << "imported " << store.rows() << " vectors for provider '" << store.provider().name << "'\n";
        return 0;
    }
    if (a.provider != "toy") throw Error(Errc::UnknownProvider, "--provider: only 'toy' runs in-process; use --import for stores");
    auto pipeline = p.make_pipeline();
    const auto& ds = p.dataset();
    EmbeddingStore store({"toy", ToyEmbedder::kDim});
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& dets = ds.detection_set(i).detections;
        for (std::size_t b = 0; b < dets.size(); ++b) {
            if (dets[b].category != DetectorCategory::animal) continue;
            store.add(make_crop_id(ds.image(i).image_id, b, 0), pipeline->box_embedding(i, b, "toy"));
        }
    }
    p.add_embeddings(store);
    p.save();
    std::cout << "embedded " << store.rows() << " crops with 'toy'\n";
    return 0;
}

struct SplitArgs {
    std::string fractions = "0.7,0.15,0.15";
    bool no_stratify = false;
    std::optional<double> stations;
};

int cmd_split(const SplitArgs& a) {
    ProjectLock lock(g.project);
    auto p = open_project();
    if (a.stations) {
        const auto part = make_station_partition(p.dataset(), *a.stations, p.settings.seed);
        std::ostringstream out;
        csv::write_row(out, {"station_id", "partition"});
        for (const auto& s : part.in_sample) csv::write_row(out, {s, "in_sample"});
        for (const auto& s : part.out_of_sample) csv::write_row(out, {s, "out_of_sample"});
        write_out(p.path("stations.csv"), out.str());
        std::cout << part.in_sample.size() << " in-sample / " << part.out_of_sample.size()
                  << " out-of-sample stations\n";
        return 0;
    }
    const auto f = parse_doubles(a.fractions, "--fractions");
    if (f.size() != 3) throw Error(Errc::InvalidFractions, "--fractions needs three values");
    if (p.al && !p.al->history.empty()) info("note: the active-learning test set keeps its original membership");
    p.split = make_split(p.dataset(), {f[0], f[1], f[2]}, !a.no_stratify, p.settings.seed);
    p.save();
    std::cout << "train " << p.split->count(Split::train) << ", val " << p.split->count(Split::val) << ", test "
              << p.split->count(Split::test) << "\n";
    return 0;
}

struct TuneArgs {
    std::string alphas;
    std::string embedders;
    std::string metric;
};

int cmd_tune(const TuneArgs& a) {
    ProjectLock lock(g.project);
    auto p = open_project();
    if (!a.alphas.empty()) p.settings.grid.alphas = parse_doubles(a.alphas, "--alphas");
    if (!a.embedders.empty()) p.settings.grid.embedders = split_list(a.embedders);
    if (!a.metric.empty()) p.settings.grid.metric = parse_metric_kind(a.metric);
    const auto split = ensure_split(p);
    const auto grid = effective_grid(p);
    auto pipeline = p.make_pipeline();
    const auto& ds = p.dataset();
    const auto train = dataset_labels(ds, split.indices(ds, Split::train));
    const auto val = dataset_labels(ds, split.indices(ds, Split::val));
    TrainConfig tc = p.settings.train;
    tc.seed = mix_seed(p.settings.seed, 0x7E);
    const auto res = tune(*pipeline, train, val, grid, tc,
                          {p.settings.pipeline.beta, p.settings.pipeline.rule, p.settings.active.augment_k});
    std::ostringstream report;
    write_tuning_report(report, res, grid);
    write_out(p.path("tuning.csv"), report.str());
    std::cout << report.str();

    const auto& best = res.best_record();
    p.lambda_star = best.lambda;
    p.settings.pipeline.alpha = best.lambda.alpha;
    p.settings.pipeline.embedder = best.lambda.embedder;
    if (best.model) p.model = p.save_checkpoint(*best.model, "tune_best");
    p.save();
    info("lambda* = (" + best.lambda.embedder + ", alpha " + csv::format_double(best.lambda.alpha) + ")");
    return 0;
}

struct TrainArgs {
    std::optional<double> alpha;
    std::string embedder;
};

int cmd_train(const TrainArgs& a) {
    ProjectLock lock(g.project);
    auto p = open_project();
    if (a.alpha) p.settings.pipeline.alpha = *a.alpha;
    if (!a.embedder.empty()) p.settings.pipeline.embedder = a.embedder;
    const auto& ds = p.dataset();
    std::vector<std::size_t> idx = p.split ? p.split->indices(ds, Split::train) : labeled_indices(ds);
    auto pipeline = p.make_pipeline();
    const auto lambda = current_lambda(p);
    TrainConfig tc = p.settings.train;
    tc.seed = mix_seed(p.settings.seed, 0x7A);
    const auto res = fit_head(*pipeline, dataset_labels(ds, idx), lambda, tc, std::nullopt, p.settings.active.augment_k);
    p.model = p.save_checkpoint(res.model, "train");
    p.save();
    std::cout << "trained on " << idx.size() << " images; final loss " << csv::format_double(res.loss_curve.back())
              << "; checkpoint " << p.model << "\n";
    return 0;
}

struct EvalArgs {
    std::string part = "test";
    bool collapse_empty = false;
    std::string checkpoint;
};

int cmd_eval(const EvalArgs& a) {
    auto p = open_project();
    const auto ref = a.checkpoint.empty() ? p.model : a.checkpoint;
    if (ref.empty()) throw Error(Errc::NoModel, "no model yet; run train, tune or al-iterate first");
    const auto head = p.load_checkpoint(ref);
    const auto& ds = p.dataset();
    std::vector<std::size_t> idx;
    if (a.part == "all" || !p.split) {
        idx = labeled_indices(ds);
    } else {
        idx = p.split->indices(ds, parse_split(a.part));
    }
    auto pipeline = p.make_pipeline();
    const auto ev = evaluate(*pipeline, dataset_labels(ds, idx), current_lambda(p), head, p.settings.pipeline.beta,
                             p.settings.pipeline.rule);
    if (ev.box_level) {
        std::cout << "bounding-box level (" << ev.box_confusion->total() << " crops)\n"
                  << format_report(*ev.box_level) << "\n";
    }
    std::cout << "image level (" << ev.evaluated - ev.abstained << " of " << ev.evaluated << " images, "
              << ev.abstained << " abstained)\n";
    if (ev.image_level) {
        std::cout << format_report(*ev.image_level) << "\n" << format_confusion(ev.image_confusion);
        std::ostringstream rep, cm;
        write_report_csv(rep, *ev.image_level);
        write_confusion_csv(cm, ev.image_confusion);
        write_out(p.path("eval_report.csv"), rep.str());
        write_out(p.path("eval_confusion.csv"), cm.str());
    }
    if (a.collapse_empty) {
        const auto c = collapse_empty(ev.image_confusion);
        std::cout << "\nempty vs. non-empty\n" << format_confusion(c);
        if (c.total() > 0) std::cout << format_report(report(c));
        std::ostringstream out;
        write_confusion_csv(out, c);
        write_out(p.path("eval_collapsed.csv"), out.str());
    }
    return 0;
}

struct SelectArgs {
    std::optional<std::size_t> batch;
    bool stratify = false;
};

int cmd_al_select(const SelectArgs& a) {
    ProjectLock lock(g.project);
    Session s(open_project());
    const auto ids = s.select(a.batch, a.stratify ? std::optional<bool>(true) : std::nullopt);
    std::ostringstream out;
    csv::write_row(out, {"image_id"});
    for (const auto& id : ids) csv::write_row(out, {id});
    write_out(s.project().path("queue.csv"), out.str());
    for (const auto& id : ids) std::cout << id << "\n";
    info("queued " + std::to_string(ids.size()) + " images (queue.csv)");
    return 0;
}

struct LabelArgs {
    std::string file;
    bool queued_only = false;
};

int cmd_al_label(const LabelArgs& a) {
    ProjectLock lock(g.project);
    Session s(open_project());
    const auto table = csv::read_file(a.file);
    const int id_col = table.column("image_id"), label_col = table.column("label");
    if (id_col < 0 || label_col < 0) throw Error(Errc::MalformedRecord, a.file + ": needs columns image_id,label");
    std::set<std::string> queued(s.state().queued.begin(), s.state().queued.end());
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& row : table.rows) {
        if (a.queued_only && !queued.count(row[id_col])) continue;
        pairs.emplace_back(row[id_col], row[label_col]);
    }
    const auto r = s.submit(pairs);
    for (const auto& [id, code] : r.rejected) info("rejected " + id + ": " + std::string(to_string(code)));
    std::cout << "accepted " << r.accepted.size() << ", rejected " << r.rejected.size() << "; labeled pool "
              << s.state().labeled.size() << "\n";
    return 0;
}

struct IterateArgs {
    bool skip_tuning = false;
    std::string start_mode;
};

int cmd_al_iterate(const IterateArgs& a) {
    ProjectLock lock(g.project);
    Session s(open_project());
    IterateOptions opt;
    if (a.skip_tuning) opt.skip_tuning = true;
    if (!a.start_mode.empty()) opt.start_mode = parse_start_mode(a.start_mode);
    const auto rec = s.iterate(opt);
    std::cout << "iteration " << rec.iteration << ": " << rec.labeled_count << " labeled, accuracy "
              << csv::format_double(rec.accuracy) << ", weighted F1 " << csv::format_double(rec.weighted_f1)
              << ", lambda (" << rec.lambda.embedder << ", " << csv::format_double(rec.lambda.alpha) << ")\n";
    return 0;
}

int cmd_al_finalize() {
    ProjectLock lock(g.project);
    Session s(open_project());
    const auto preds = s.finalize();
    std::size_t abstained = 0;
    for (const auto& p : preds) abstained += p.abstained;
    std::cout << preds.size() << " predictions (" << abstained << " abstained) in "
              << s.project().path("predictions.csv").string() << "\n";
    return 0;
}

struct PredictArgs {
    std::string out;
    bool unlabeled_only = false;
};

int cmd_predict(const PredictArgs& a) {
    auto p = open_project();
    const auto head = p.current_model();
    if (!head) throw Error(Errc::NoModel, "no model yet; run train, tune or al-iterate first");
    const auto& ds = p.dataset();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& id = ds.image(i).image_id;
        if (a.unlabeled_only && (ds.image(i).label || (p.al && !p.al->unlabeled.count(id)))) continue;
        idx.push_back(i);
    }
    auto pipeline = p.make_pipeline();
    Lambda lambda = p.al && p.al->last_lambda ? *p.al->last_lambda : current_lambda(p);
    const auto preds = pipeline->predict_dataset(idx, *head, pipeline_config(lambda, p.settings.pipeline.beta, p.settings.pipeline.rule));
    std::ostringstream out;
    write_predictions_csv(out, preds, ds.label_space());
    const fs::path target = a.out.empty() ? p.path("predictions_all.csv") : fs::path(a.out);
    write_out(target, out.str());
    std::cout << preds.size() << " predictions in " << target.string() << "\n";
    return 0;
}

int cmd_status() {
    auto p = Project::open(g.project);
    const auto& ds = p.dataset();
    std::cout << "images " << ds.size() << ", labeled " << ds.labeled_count() << ", classes";
    for (const auto& n : ds.label_space().names()) std::cout << " " << n;
    std::cout << "\n";
    if (p.split) {
        std::cout << "split train " << p.split->count(Split::train) << " / val " << p.split->count(Split::val)
                  << " / test " << p.split->count(Split::test) << "\n";
    }
    if (p.lambda_star) {
        std::cout << "lambda* (" << p.lambda_star->embedder << ", " << csv::format_double(p.lambda_star->alpha) << ")\n";
    }
    if (p.al) {
        std::cout << "active learning: iteration " << p.al->iteration << ", labeled " << p.al->labeled.size()
                  << ", unlabeled " << p.al->unlabeled.size() << ", test " << p.al->frozen_test.size() << ", queued "
                  << p.al->queued.size() << "\n";
    }
    if (!p.model.empty()) std::cout << "model " << p.model << "\n";
    return 0;
}

Service* g_service = nullptr;

extern "C" void on_signal(int) {
    if (g_service) g_service->stop();
}

int cmd_serve(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::InvalidArgument, "--bind expects host:port");
    const std::string host = bind.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(bind.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error(Errc::InvalidArgument, "--bind: bad port in '" + bind + "'");
    }
    ProjectLock lock(g.project);
    Session session(open_project());
    Service service(session);
    const int bound = service.bind(host, port);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "serving " << g.project << " on http://" << host << ":" << bound << "/api" << std::endl;
    service.listen();
    g_service = nullptr;
    service.wait_idle();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wildal: active learning for camera-trap image classification"};
    app.require_subcommand(1);
    app.add_option("-p,--project", g.project, "Project directory")->capture_default_str();
    app.add_option("--seed", g.seed, "Seed for generation, splits, training and selection");
    app.add_option("--config", g.config, "JSON file merged into the project settings")->check(CLI::ExistingFile);
    app.add_option("--augment", g.augment, "Augmented variants per training crop (0 disables)")
        ->check(CLI::Range(0, 64));
    app.add_flag("-q,--quiet", g.quiet, "Only print results");

    std::function<int()> action;

    InitArgs init;
    auto* c_init = app.add_subcommand("init", "Create an empty project");
    c_init->add_option("--classes", init.classes, "Comma-separated class names (\"empty\" is added)")->required();
    c_init->add_option("--image-root", init.image_root, "Directory that manifest file paths are relative to");
    c_init->callback([&] { action = [&] { return cmd_init(init); }; });

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Load manifest, labels and detector output");
    c_ingest->add_option("--manifest", ingest.manifest, "image_id,station_id,file_path[,capture_time] CSV")->required()->check(CLI::ExistingFile);
    c_ingest->add_option("--labels", ingest.labels, "image_id,label CSV")->check(CLI::ExistingFile);
    c_ingest->add_option("--detections", ingest.detections, "Detector batch output JSON")->required()->check(CLI::ExistingFile);
    c_ingest->add_option("--image-root", ingest.image_root, "Directory that file paths are relative to");
    c_ingest->add_flag("--force", ingest.force, "Replace data even if active learning has started");
    c_ingest->callback([&] { action = [&] { return cmd_ingest(ingest); }; });

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic camera-trap project");
    c_synth->add_option("--images", synth.images, "Number of images")->capture_default_str();
    c_synth->add_option("--stations", synth.stations, "Number of camera stations")->capture_default_str();
    c_synth->add_option("--classes", synth.classes, "Class names including empty")->capture_default_str();
    c_synth->add_option("--proportions", synth.proportions, "Class proportions (sum to 1)")->capture_default_str();
    c_synth->add_option("--dim", synth.dim, "Dimension of the synthetic embeddings")->capture_default_str();
    c_synth->add_option("--spread", synth.spread, "Embedding noise half-width")->capture_default_str();
    c_synth->add_option("--labeled-fraction", synth.labeled_fraction, "Share of images that keep their label")->capture_default_str();
    c_synth->add_option("--crop-side", synth.crop_side, "Crop side in pixels")->capture_default_str();
    c_synth->callback([&] { action = [&] { return cmd_synth(synth); }; });

    EmbedArgs embed;
    auto* c_embed = app.add_subcommand("embed", "Run the toy embedder or import an embedding store");
    c_embed->add_option("--provider", embed.provider, "In-process provider")->capture_default_str();
    c_embed->add_option("--import", embed.import_path, "Embedding store file to import")->check(CLI::ExistingFile);
    c_embed->callback([&] { action = [&] { return cmd_embed(embed); }; });

    SplitArgs split;
    auto* c_split = app.add_subcommand("split", "Train/val/test split or station partition");
    c_split->add_option("--fractions", split.fractions, "train,val,test")->capture_default_str();
    c_split->add_flag("--no-stratify", split.no_stratify, "One global shuffle instead of per-station");
    c_split->add_option("--stations", split.stations, "In-sample station fraction (writes stations.csv)");
    c_split->callback([&] { action = [&] { return cmd_split(split); }; });

    TuneArgs tune_args;
    auto* c_tune = app.add_subcommand("tune", "Grid search over embedder and detector threshold");
    c_tune->add_option("--alphas", tune_args.alphas, "Comma-separated thresholds");
    c_tune->add_option("--embedders", tune_args.embedders, "Comma-separated providers");
    c_tune->add_option("--metric", tune_args.metric, "f1, recall, precision or accuracy");
    c_tune->callback([&] { action = [&] { return cmd_tune(tune_args); }; });

    TrainArgs train_args;
    auto* c_train = app.add_subcommand("train", "Train a head for one (embedder, alpha)");
    c_train->add_option("--alpha", train_args.alpha, "Detector threshold");
    c_train->add_option("--embedder", train_args.embedder, "Embedding provider");
    c_train->callback([&] { action = [&] { return cmd_train(train_args); }; });

    EvalArgs eval_args;
    auto* c_eval = app.add_subcommand("eval", "Box-level and image-level reports");
    c_eval->add_option("--part", eval_args.part, "train, val, test or all")->capture_default_str();
    c_eval->add_flag("--collapse-empty", eval_args.collapse_empty, "Also print the empty vs. non-empty table");
    c_eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint ref relative to the project");
    c_eval->callback([&] { action = [&] { return cmd_eval(eval_args); }; });

    SelectArgs sel;
    auto* c_sel = app.add_subcommand("al-select", "Queue the next batch for labeling");
    c_sel->add_option("--batch", sel.batch, "Batch size");
    c_sel->add_flag("--stratify", sel.stratify, "Per-station quotas");
    c_sel->callback([&] { action = [&] { return cmd_al_select(sel); }; });

    LabelArgs lab;
    auto* c_lab = app.add_subcommand("al-label", "Submit labels from an image_id,label CSV");
    c_lab->add_option("--file", lab.file, "Labels CSV")->required()->check(CLI::ExistingFile);
    c_lab->add_flag("--queued-only", lab.queued_only, "Ignore rows for images not in the current queue");
    c_lab->callback([&] { action = [&] { return cmd_al_label(lab); }; });

    IterateArgs it;
    auto* c_it = app.add_subcommand("al-iterate", "Tune, train and evaluate on the labeled pool");
    c_it->add_flag("--skip-tuning", it.skip_tuning, "Reuse the previous (embedder, alpha)");
    c_it->add_option("--start-mode", it.start_mode, "cold or warm");
    c_it->callback([&] { action = [&] { return cmd_al_iterate(it); }; });

    auto* c_fin = app.add_subcommand("al-finalize", "Predict the remaining unlabeled images");
    c_fin->callback([&] { action = [] { return cmd_al_finalize(); }; });

    std::string bind = "127.0.0.1:8080";
    auto* c_serve = app.add_subcommand("serve", "HTTP API for the labeling console");
    c_serve->add_option("--bind", bind, "host:port")->capture_default_str();
    c_serve->callback([&] { action = [&] { return cmd_serve(bind); }; });

    PredictArgs pred;
    auto* c_pred = app.add_subcommand("predict", "Export predictions CSV with the current model");
    c_pred->add_option("--out", pred.out, "Output CSV (default predictions_all.csv in the project)");
    c_pred->add_flag("--unlabeled-only", pred.unlabeled_only, "Skip labeled and test images");
    c_pred->callback([&] { action = [&] { return cmd_predict(pred); }; });

    auto* c_status = app.add_subcommand("status", "Summarize the project");
    c_status->callback([&] { action = [] { return cmd_status(); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return action();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_validation_error(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
