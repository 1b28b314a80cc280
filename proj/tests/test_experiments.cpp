#include "eitml/error.hpp"
#include "eitml/experiments.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace eitml;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("eitml_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentOptions tiny(ModelKind model) {
    ExperimentOptions o;
    o.scale = 1e-3;  // 10 samples per class
    o.seed = 11;
    o.model = model;
    o.target_max_edge = 0.03;
    return o;
}

}  // namespace

TEST_CASE("confusion matrix counts") {
    const std::vector<int> actual{1, 1, 2, 2};
    const std::vector<int> predicted{1, 2, 2, 2};
    const auto c = confusion(actual, predicted, 2);
    CHECK(c.counts(0, 0) == 1);
    CHECK(c.counts(0, 1) == 1);
    CHECK(c.counts(1, 0) == 0);
    CHECK(c.counts(1, 1) == 2);
    CHECK(c.total() == 4);
    CHECK(c.accuracy() == doctest::Approx(0.75).epsilon(1e-15));

    const std::vector<int> same{3, 1, 4, 1, 5, 9, 2, 6};
    const auto id = confusion(same, same, 9);
    CHECK(id.accuracy() == 1.0);
    CHECK(id.counts.sum() == id.counts.trace());

    const std::vector<int> empty;
    CHECK_THROWS_AS(confusion(empty, empty, 2), InvalidArgument);
    const std::vector<int> bad{1, 3};
    CHECK_THROWS_AS(confusion(bad, bad, 2), InvalidArgument);
    const std::vector<int> shorter{1};
    CHECK_THROWS_AS(confusion(bad, shorter, 3), InvalidArgument);
}

TEST_CASE("confusion csv and svg") {
    const std::vector<int> actual{1, 1, 2, 3, 3, 3};
    const std::vector<int> predicted{1, 3, 2, 3, 2, 3};
    const auto c = confusion(actual, predicted, 3);
    const std::string csv = confusion_csv(c);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "actual\\predicted,1,2,3");
    std::vector<int> column_sum(3, 0);
    int rows = 0;
    while (std::getline(in, line)) {
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ',');
        for (int j = 0; j < 3; ++j) {
            std::getline(cells, cell, ',');
            column_sum[j] += std::stoi(cell);
        }
        ++rows;
    }
    CHECK(rows == 3);
    CHECK(column_sum == std::vector<int>{1, 2, 3});

    const std::string svg = confusion_svg(c, "a <b> & c");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("a &lt;b&gt; &amp; c") != std::string::npos);
    CHECK(svg.find("accuracy 66.7% (4/6)") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("confusion json round trip") {
    const std::vector<int> actual{2, 4, 4};
    const std::vector<int> predicted{4, 4, 2};
    const std::vector<int> labels{2, 4};
    const auto c = confusion(actual, predicted, labels);
    const auto back = confusion_from_json(to_json(c));
    CHECK(back.labels == c.labels);
    CHECK(back.counts == c.counts);
}

TEST_CASE("task defaults") {
    CHECK(default_model(Task::Presence) == ModelKind::Svm);
    CHECK(default_model(Task::CountLarge) == ModelKind::Svm);
    CHECK(default_model(Task::Radii) == ModelKind::Ann);
    CHECK(default_model(Task::IsoVsSpatial) == ModelKind::Ann);
    CHECK(task_pattern(Task::Radii) == PatternKind::Opposite);
    CHECK(task_pattern(Task::Presence) == PatternKind::Trig);
    CHECK(scaled_count(Task::Presence, 0.2) == 480);
    CHECK(scaled_count(Task::Radii, 0.25) == 1500);
    CHECK(scaled_count(Task::IsoVsAnisoBoth, 1e-4) == 10);
    CHECK_THROWS_AS(scaled_count(Task::Radii, 0.0), InvalidArgument);
    CHECK(parse_model("svm") == ModelKind::Svm);
    CHECK_THROWS_AS(parse_model("tree"), InvalidArgument);

    ExperimentOptions o;
    o.model = ModelKind::Svm;
    const auto cfg = experiment_dataset_config(Task::CountSmall, o);
    CHECK(cfg.counts == std::vector<int>{400, 400, 400});
}

TEST_CASE("test isolation") {
    Dataset ds;
    for (int i = 0; i < 4; ++i) ds.samples.push_back({{double(i)}, 1, {}});
    Split ok{{0, 1}, {2}, {3}};
    CHECK_NOTHROW(check_test_isolation(ds, ok));
    Split leak{{0, 3}, {2}, {3}};
    CHECK_THROWS_AS(check_test_isolation(ds, leak), Error);
    Split range{{0}, {1}, {7}};
    CHECK_THROWS_AS(check_test_isolation(ds, range), Error);
}

TEST_CASE("small ANN run is deterministic and round trips") {
    const auto opts = tiny(ModelKind::Ann);
    const auto a = run_task(Task::Presence, opts);
    const auto b = run_task(Task::Presence, opts);
    CHECK(to_json(a.report).dump() == to_json(b.report).dump());
    CHECK(a.model.to_json().dump() == b.model.to_json().dump());
    CHECK(a.report.train_size + a.report.validation_size + a.report.test_size == 20);
    CHECK(a.report.test.total() == static_cast<long>(a.report.test_size));

    const auto back = report_from_json(to_json(a.report));
    CHECK(to_json(back).dump() == to_json(a.report).dump());

    const auto model = model_from_json(a.model.to_json());
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 256);
    CHECK(model.predict(x) == a.model.predict(x));

    const auto dir = scratch("experiment_ann");
    emit_report(a.report, dir);
    emit_timing(a.wall_seconds, dir);
    for (const char* f : {"report.json", "confusion_validation.csv", "confusion_test.csv", "confusion_test.svg", "timing.json"}) {
        CHECK(std::filesystem::exists(dir / f));
    }
    CHECK(slurp(dir / "report.json").find("wall") == std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("small SVM run uses pooled folds for validation") {
    const auto r = run_task(Task::CountSmall, tiny(ModelKind::Svm));
    CHECK(r.report.model == ModelKind::Svm);
    CHECK(r.report.validation_size == 0);
    CHECK(r.report.validation.total() == static_cast<long>(r.report.train_size));
    CHECK(r.report.test.labels == std::vector<int>{1, 2, 3});
    CHECK(r.model.svm.pairs.size() == 3);
}

TEST_CASE("radii reports carry the simulated-analog note") {
    const auto r = run_task(Task::Radii, tiny(ModelKind::Ann));
    REQUIRE(!r.report.notes.empty());
    CHECK(r.report.notes.front().find("simulated analog") != std::string::npos);
    CHECK(r.report.manifest.at("pattern") == "opposite");
}

TEST_CASE("electrode sweep marks M > E invalid") {
    auto o = tiny(ModelKind::Ann);
    const std::vector<int> es{2, 4};
    const std::vector<int> ms{1, 4};
    const auto s = run_electrode_sweep(es, ms, o);
    REQUIRE(s.cells.size() == 4);
    CHECK(s.cells[0].valid);
    CHECK(!s.cells[1].valid);
    CHECK(s.cells[3].valid);
    CHECK_THROWS_AS(s.accuracy(2, 4), InvalidArgument);
    CHECK(s.accuracy(4, 4) >= 0.0);
    const std::vector<int> odd{3};
    CHECK_THROWS_AS(run_electrode_sweep(odd, ms, o), InvalidArgument);

    const auto dir = scratch("sweep");
    emit_sweep(s, dir);
    const std::string csv = slurp(dir / "sweep.csv");
    CHECK(csv.find("2,4,0,,") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "heatmap.svg"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("report does not depend on the thread count") {
    auto one = tiny(ModelKind::Svm);
    auto three = one;
    three.threads = 3;
    const auto a = run_task(Task::CountLarge, one);
    const auto b = run_task(Task::CountLarge, three);
    CHECK(to_json(a.report).dump() == to_json(b.report).dump());
    CHECK(a.report.dataset_digest.size() == 16);
}

TEST_CASE("identity confusion renders two shaded diagonal cells") {
    const std::vector<int> y{1, 2, 2};
    const std::string svg = confusion_svg(confusion(y, y, 2), "identity");
    std::size_t shaded = 0, white = 0;
    for (std::size_t at = svg.find("<rect x="); at != std::string::npos; at = svg.find("<rect x=", at + 1)) {
        const std::string fill = svg.substr(svg.find("fill=\"", at) + 6, 7);
        (fill == "#ffffff" ? white : shaded) += 1;
    }
    CHECK(shaded == 2);
    CHECK(white == 2);
}
