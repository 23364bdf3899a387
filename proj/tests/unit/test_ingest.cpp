#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "wildal/csv.hpp"
#include "wildal/error.hpp"
#include "wildal/ingest.hpp"
#include "wildal/synthetic.hpp"

using namespace wildal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path write(const std::string& name, const std::string& text) const {
        std::ofstream(path / name, std::ios::binary) << text;
        return path / name;
    }
};

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return Errc::Conflict;
}

const char* kDetections = R"({
  "info": {"detector": "md_v5a"},
  "detection_categories": {"1": "animal", "2": "person", "3": "vehicle"},
  "images": [
    {"file": "s1/a.jpg", "detections": [{"category": "1", "conf": 0.95, "bbox": [0.1, 0.2, 0.3, 0.4]}]},
    {"file": "s1/b.jpg", "detections": [], "extra": 1},
    {"file": "s2/c.jpg", "detections": [{"category": "2", "conf": 0.5, "bbox": [0.5, 0.5, 0.2, 0.2]},
                                        {"category": "1", "conf": 0.3, "bbox": [0.9, 0.9, 0.2, 0.2]}]}
  ]
})";

}  // namespace

TEST_CASE("csv quoting round trip") {
    std::istringstream in("\xEF\xBB\xBFid,text\r\n1,\"a, \"\"b\"\"\"\r\n2,\r\n3,\"multi\nline\"\n");
    auto t = csv::read(in);
    CHECK(t.header == csv::Row{"id", "text"});
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[0][1] == "a, \"b\"");
    CHECK(t.rows[1][1] == "");
    CHECK(t.rows[2][1] == "multi\nline");
    CHECK(t.column("text") == 1);
    CHECK(t.column("nope") == -1);
    std::ostringstream out;
    csv::write_row(out, t.rows[0]);
    CHECK(out.str() == "1,\"a, \"\"b\"\"\"\n");
    std::istringstream wide("a,b\n1,2,3\n");
    CHECK_THROWS_AS(csv::read(wide), Error);
    CHECK(csv::format_double(0.1) == "0.1");
    CHECK(csv::format_double(1.0) == "1");
}

TEST_CASE("label space rules") {
    LabelSpace s({"fox", "empty", "deer"});
    CHECK(s.empty_index() == 1);
    CHECK(s.require("deer") == 2);
    CHECK(code_of([&] { s.require("wolf"); }) == Errc::UnknownLabel);
    CHECK_THROWS_AS(LabelSpace({"fox", "deer"}), Error);
    CHECK_THROWS_AS(LabelSpace({"empty"}), Error);
    CHECK_THROWS_AS(LabelSpace({"empty", "fox", "fox"}), Error);
    CHECK(label_space_from({"fox", "deer", "fox"}).names() == std::vector<std::string>{"empty", "deer", "fox"});
}

TEST_CASE("load a small project") {
    TempDir dir("wildal_ingest_load");
    auto m = dir.write("manifest.csv",
                       "image_id,station_id,file_path,capture_time\n"
                       "a,S1,s1/a.jpg,2020-01-01T00:00:00\nb,S1,s1/b.jpg,\nc,S2,s2/c.jpg,\n");
    auto l = dir.write("labels.csv", "image_id,label\na,fox\n");
    auto d = dir.write("detections.json", kDetections);
    LabelSpace labels({"empty", "fox", "deer"});
    auto ds = load_project({m, l, d}, labels);
    CHECK(ds.size() == 3);
    CHECK(ds.labeled_count() == 1);
    CHECK(ds.image(0).capture_time == "2020-01-01T00:00:00");
    CHECK_FALSE(ds.image(1).capture_time);
    CHECK(ds.detection_set(2).detections.size() == 2);
    CHECK(ds.detection_set(2).detections[0].category == DetectorCategory::person);
    // second box of c spills past the frame and is clamped
    CHECK(ds.detection_set(2).detections[1].bbox.w == doctest::Approx(0.1));
    CHECK(ds.warnings.size() == 1);
    CHECK(ds.stations() == std::vector<std::string>{"S1", "S2"});

    auto wolf = dir.write("wolf.csv", "image_id,label\nb,wolf\n");
    CHECK(code_of([&] { load_project({m, wolf, d}, labels); }) == Errc::UnknownLabel);
    auto dup = dir.write("dup.csv", "image_id,station_id,file_path\na,S1,x\na,S1,y\n");
    CHECK(code_of([&] { load_project({dup, {}, d}, labels); }) == Errc::DuplicateImageId);
    CHECK(code_of([&] { load_project({dir.path / "none.csv", {}, d}, labels); }) == Errc::MissingFile);
}

TEST_CASE("detector file validation") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_detector_output(in);
    };
    CHECK(code_of([&] { parse(R"({"images":[{"file":"a","detections":[{"category":"1","bbox":[0,0,1,1]}]}]})"); }) ==
          Errc::MalformedRecord);
    CHECK(code_of([&] { parse(R"({"images":[{"file":"a","detections":[{"category":"1","conf":1.5,"bbox":[0,0,1,1]}]}]})"); }) ==
          Errc::MalformedRecord);
    CHECK(code_of([&] { parse(R"({"images":[{"file":"a","detections":[{"category":"1","conf":0.5,"bbox":[0,0,1]}]}]})"); }) ==
          Errc::MalformedRecord);
    CHECK(code_of([&] { parse("{not json"); }) == Errc::MalformedRecord);
    auto ok = parse(R"({"images":[{"file":"a","detections":null},{"file":"b","detections":[{"category":3,"conf":0.2,"bbox":[0,0,0.5,0.5]}]}]})");
    REQUIRE(ok.size() == 2);
    CHECK(ok[0].second.empty());
    CHECK(ok[1].second[0].category == DetectorCategory::vehicle);
}

TEST_CASE("missing detector entries become empty sets with a warning") {
    TempDir dir("wildal_ingest_missing");
    auto m = dir.write("manifest.csv", "image_id,station_id,file_path\na,S1,s1/a.jpg\nz,S1,s1/z.jpg\n");
    auto d = dir.write("detections.json", R"({"images":[{"file":"s1/a.jpg","detections":[]}]})");
    auto ds = load_project({m, {}, d}, LabelSpace({"empty", "fox"}));
    CHECK(ds.detection_set(1).detections.empty());
    CHECK(ds.warnings.size() == 1);
    auto extra = dir.write("extra.json", R"({"images":[{"file":"s1/q.jpg","detections":[]}]})");
    CHECK(code_of([&] { load_project({m, {}, extra}, LabelSpace({"empty", "fox"})); }) == Errc::MalformedRecord);
}

TEST_CASE("threshold filter") {
    auto det = [](double c) { return Detection{{0, 0, 0.1, 0.1}, c, DetectorCategory::animal}; };
    DetectionSet ds{"a", {det(0.95), det(0.40), det(0.05)}};
    auto s = filter_high_conf(ds, 0.5);
    CHECK(s.high.size() == 1);
    CHECK(s.high[0].confidence == 0.95);
    CHECK(s.low.size() == 2);
    CHECK(s.low_index == std::vector<std::size_t>{1, 2});

    CHECK(filter_high_conf(DetectionSet{"e", {}}, 0.3).high.empty());
    DetectionSet grid{"g", {det(0.1), det(0.3), det(0.5), det(0.7), det(0.9)}};
    CHECK(filter_high_conf(grid, 0.1).high.size() == 5);

    DetectionSet person{"p", {{{0, 0, 1, 1}, 0.99, DetectorCategory::person}}};
    CHECK(filter_high_conf(person, 0.0).high.empty());
}

TEST_CASE("filter partitions and is monotone in alpha") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 500; ++t) {
        DetectionSet ds{"x", {}};
        const int n = static_cast<int>(rng() % 6);
        for (int j = 0; j < n; ++j)
            ds.detections.push_back({{0, 0, 0.1, 0.1}, std::round(u(rng) * 10) / 10,
                                     static_cast<DetectorCategory>(1 + rng() % 3)});
        std::vector<std::size_t> prev;
        for (double a : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
            auto s = filter_high_conf(ds, a);
            std::vector<std::size_t> all = s.high_index;
            all.insert(all.end(), s.low_index.begin(), s.low_index.end());
            std::sort(all.begin(), all.end());
            CHECK(all.size() == ds.detections.size());
            for (std::size_t j = 0; j < all.size(); ++j) CHECK(all[j] == j);
            if (a > 0.0) CHECK(std::includes(prev.begin(), prev.end(), s.high_index.begin(), s.high_index.end()));
            prev = s.high_index;
        }
    }
}

TEST_CASE("serialize and reload gives the same dataset") {
    SynthSpec spec;
    spec.images = 60;
    auto proj = generate_synthetic_project(spec, 3);
    TempDir dir("wildal_ingest_roundtrip");
    auto files = save_dataset(proj.dataset, dir.path);
    auto back = load_project(files, proj.dataset.label_space());
    CHECK(back == proj.dataset);
}
