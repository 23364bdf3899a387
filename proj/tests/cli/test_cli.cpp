#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "../unit/project_fixture.hpp"
#include "wildal/csv.hpp"
#include "wildal/imaging.hpp"
#include "wildal/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

// Runs the CLI with stdout captured; stderr is discarded.
Run cli(const fs::path& project, const std::string& args) {
    const std::string cmd = std::string(WILDAL_CLI) + " -q -p '" + project.string() + "' " + args + " 2>/dev/null";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    std::array<char, 4096> buf{};
    while (auto n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("exit codes separate usage and input errors from runtime failures") {
    fixture::TempDir tmp;
    CHECK(cli(tmp.path, "status").code == 2);  // no project
    CHECK(cli(tmp.path, "").code == 2);        // no subcommand
    CHECK(cli(tmp.path, "frobnicate").code == 2);
    CHECK(cli(tmp.path, "synth --images 120 --proportions 0.5,0.5").code == 2);

    REQUIRE(cli(tmp.path, "--seed 1 synth --images 200 --stations 2").code == 0);
    CHECK(cli(tmp.path, "split --fractions 0.6,0.6,0.1").code == 2);
    CHECK(cli(tmp.path, "al-iterate --start-mode tepid").code == 2);
    CHECK(cli(tmp.path, "eval").code == 1);  // no model yet
    CHECK(cli(tmp.path, "synth --images 50").code == 1);  // project exists

    std::ofstream(tmp.path / ".lock") << ::getpid();
    CHECK(cli(tmp.path, "al-select").code == 1);
    fs::remove(tmp.path / ".lock");
    CHECK(cli(tmp.path, "al-select --batch 4").code == 0);
}

TEST_CASE("tune ranks the grid best first and records lambda*") {
    fixture::TempDir tmp;
    REQUIRE(cli(tmp.path, "--seed 5 synth --images 300 --labeled-fraction 0.6").code == 0);
    REQUIRE(cli(tmp.path, "split").code == 0);
    const auto run = cli(tmp.path, "tune --alphas 0.1,0.5,0.9");
    REQUIRE(run.code == 0);
    CHECK(run.out == slurp(tmp.path / "tuning.csv"));

    std::istringstream in(run.out);
    const auto table = wildal::csv::read(in);
    REQUIRE(table.rows.size() == 3);
    const int metric = table.column("metric");
    REQUIRE(metric >= 0);
    double best = -1;
    for (const auto& row : table.rows) best = std::max(best, std::stod(row[metric]));
    CHECK(std::stod(table.rows[0][metric]) == best);
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        CHECK(std::stod(table.rows[i - 1][metric]) >= std::stod(table.rows[i][metric]));
    }

    const auto manifest = nlohmann::json::parse(slurp(tmp.path / "project.json"));
    CHECK(manifest["lambda_star"]["alpha"].get<double>() == std::stod(table.rows[0][table.column("confidence")]));
    CHECK(manifest["model"] == "checkpoints/tune_best.head");
    CHECK(manifest["settings"]["grid"]["alphas"].size() == 3);
}

TEST_CASE("eval --collapse-empty keeps the image totals") {
    fixture::TempDir tmp;
    REQUIRE(cli(tmp.path, "--seed 2 synth --images 300 --labeled-fraction 0.6").code == 0);
    REQUIRE(cli(tmp.path, "train").code == 0);
    REQUIRE(cli(tmp.path, "eval --part all --collapse-empty").code == 0);

    auto total = [](const wildal::csv::Table& t) {
        long sum = 0;
        for (const auto& row : t.rows) {
            for (std::size_t c = 1; c < row.size(); ++c) sum += std::stol(row[c]);
        }
        return sum;
    };
    const auto full = wildal::csv::read_file(tmp.path / "eval_confusion.csv");
    const auto collapsed = wildal::csv::read_file(tmp.path / "eval_collapsed.csv");
    CHECK(full.rows.size() == 5);
    CHECK(collapsed.rows.size() == 2);
    CHECK(total(full) == total(collapsed));
    CHECK(total(full) > 0);
}

TEST_CASE("--config patches persist in project.json") {
    fixture::TempDir tmp;
    REQUIRE(cli(tmp.path, "synth --images 100").code == 0);
    const auto cfg = tmp.path / "patch.json";
    std::ofstream(cfg) << R"({"active": {"batch_size": 9, "stratify": true}})";
    REQUIRE(cli(tmp.path, "--config '" + cfg.string() + "' status").code == 0);
    // status only reads; the next writer applies the patch
    REQUIRE(cli(tmp.path, "--config '" + cfg.string() + "' al-select").code == 0);
    const auto manifest = nlohmann::json::parse(slurp(tmp.path / "project.json"));
    CHECK(manifest["settings"]["active"]["batch_size"] == 9);
    CHECK(manifest["settings"]["active"]["stratify"] == true);
    const auto queue = wildal::csv::read_file(tmp.path / "queue.csv");
    CHECK(queue.rows.size() == 9);

    std::ofstream(cfg) << "{oops";
    CHECK(cli(tmp.path, "--config '" + cfg.string() + "' al-select").code == 2);
}

TEST_CASE("al-label --queued-only ignores rows outside the queue") {
    fixture::TempDir tmp;
    REQUIRE(cli(tmp.path, "--seed 4 synth --images 200").code == 0);
    REQUIRE(cli(tmp.path, "al-select --batch 6").code == 0);
    const auto r = cli(tmp.path, "al-label --queued-only --file '" + (tmp.path / "oracle.csv").string() + "'");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("accepted 6, rejected 0") != std::string::npos);
}

TEST_CASE("real-data path: ingest image files, embed, train, evaluate") {
    fixture::TempDir tmp;
    const auto data = tmp.path / "data";
    fs::create_directories(data / "images");
    wildal::SynthSpec spec;
    spec.images = 160;
    spec.stations = 2;
    const auto gen = wildal::generate_synthetic_project(spec, 21);
    std::vector<wildal::ImageRecord> images;
    for (std::size_t i = 0; i < gen.dataset.size(); ++i) {
        auto rec = gen.dataset.image(i);
        const auto png = wildal::encode_png(wildal::render_synthetic_image(spec, 21, rec, gen.dataset.detection_set(i)));
        rec.file_path = "images/" + rec.image_id + ".png";
        std::ofstream(data / rec.file_path, std::ios::binary).write(reinterpret_cast<const char*>(png.data()),
                                                                    static_cast<std::streamsize>(png.size()));
        images.push_back(rec);
    }
    std::vector<wildal::DetectionSet> dets;
    for (std::size_t i = 0; i < images.size(); ++i) dets.push_back({images[i].image_id, gen.dataset.detection_set(i).detections});
    const auto files = wildal::save_dataset(wildal::Dataset(gen.dataset.label_space(), images, dets), data);

    const auto proj = tmp.path / "proj";
    REQUIRE(cli(proj, "init --classes fox,deer,boar,hare").code == 0);
    const auto in = cli(proj, "ingest --manifest '" + files.manifest.string() + "' --labels '" + files.labels.string() +
                                  "' --detections '" + files.detections.string() + "' --image-root '" + data.string() + "'");
    REQUIRE(in.code == 0);
    CHECK(in.out.find("ingested 160 images (160 labeled)") != std::string::npos);
    const auto emb = cli(proj, "embed --provider toy");
    REQUIRE(emb.code == 0);
    REQUIRE(cli(proj, "split").code == 0);
    REQUIRE(cli(proj, "train --alpha 0.5").code == 0);
    const auto ev = cli(proj, "eval --part test");
    REQUIRE(ev.code == 0);
    CHECK(ev.out.find("image level") != std::string::npos);
    const auto report = wildal::csv::read_file(proj / "eval_report.csv");
    CHECK_FALSE(report.rows.empty());
    REQUIRE(cli(proj, "predict --out '" + (tmp.path / "all.csv").string() + "'").code == 0);
    CHECK(wildal::csv::read_file(tmp.path / "all.csv").rows.size() == 160);

    // Stored embeddings stand in for pixels; a fresh project needs the file.
    fs::remove(data / images[0].file_path);
    CHECK(cli(proj, "embed --provider toy").code == 0);
    const auto fresh = tmp.path / "fresh";
    REQUIRE(cli(fresh, "init --classes fox,deer,boar,hare").code == 0);
    REQUIRE(cli(fresh, "ingest --manifest '" + files.manifest.string() + "' --detections '" + files.detections.string() +
                           "' --image-root '" + data.string() + "'").code == 0);
    CHECK(cli(fresh, "embed --provider toy").code == 2);
}
