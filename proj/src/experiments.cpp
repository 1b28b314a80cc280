#include "eitml/experiments.hpp"

#include "eitml/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <exception>
#include <map>
#include <thread>
#include <unordered_set>

namespace eitml {

namespace {

void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

std::string escape_xml(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Blend white towards `rgb` by t in [0, 1].
std::string shade(std::array<int, 3> rgb, double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto mix = [&](int c) { return static_cast<int>(std::lround(255.0 + (c - 255.0) * t)); };
    return fmt::format("#{:02x}{:02x}{:02x}", mix(rgb[0]), mix(rgb[1]), mix(rgb[2]));
}

constexpr std::array<int, 3> kBlue = {33, 102, 172};
constexpr std::array<int, 3> kRed = {178, 24, 43};

std::vector<int> predict_labels(const TrainedModel& m, const Dataset& ds, std::span<const std::size_t> idx) {
    return m.predict(ds.features(idx));
}

// Runs fn(0..n-1) on up to `threads` workers. The exception of the lowest
// failing index is rethrown so failures do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

SweepCell evaluate_cell(const Dataset& full, int e, int m, const ExperimentOptions& options) {
    const Dataset block = m == full.manifest.measurement_count ? full : leading_block(full, m);
    const ExperimentResult r = evaluate_dataset(block, ModelKind::Ann, options, "radii");
    return {e, m, true, r.report.test_accuracy(), r.report.test_size, r.report.dataset_digest};
}

}  // namespace

double ConfusionMatrix::accuracy() const {
    const long n = total();
    return n > 0 ? static_cast<double>(correct()) / static_cast<double>(n) : 0.0;
}

ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted, std::span<const int> labels) {
    if (actual.size() != predicted.size()) {
        throw InvalidArgument(fmt::format("{} actual labels but {} predictions", actual.size(), predicted.size()));
    }
    if (actual.empty()) throw InvalidArgument("confusion matrix of an empty label list");
    if (labels.empty()) throw InvalidArgument("confusion matrix needs at least one class");
    std::map<int, int> slot;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (!slot.emplace(labels[k], static_cast<int>(k)).second) throw InvalidArgument(fmt::format("duplicate class label {}", labels[k]));
    }
    ConfusionMatrix c;
    c.labels.assign(labels.begin(), labels.end());
    c.counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(labels.size()));
    auto at = [&](int label) {
        const auto it = slot.find(label);
        if (it == slot.end()) throw InvalidArgument(fmt::format("label {} is not one of the {} classes", label, labels.size()));
        return it->second;
    };
    for (std::size_t i = 0; i < actual.size(); ++i) ++c.counts(at(actual[i]), at(predicted[i]));
    return c;
}

ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted, int n) {
    if (n < 1) throw InvalidArgument(fmt::format("class count must be positive, got {}", n));
    std::vector<int> labels(n);
    for (int k = 0; k < n; ++k) labels[k] = k + 1;
    return confusion(actual, predicted, labels);
}

nlohmann::json to_json(const ConfusionMatrix& c) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < c.counts.rows(); ++i) {
        std::vector<int> r(c.counts.cols());
        for (Eigen::Index j = 0; j < c.counts.cols(); ++j) r[j] = c.counts(i, j);
        rows.push_back(r);
    }
    return {{"labels", c.labels}, {"counts", rows}, {"accuracy", c.accuracy()}, {"total", c.total()}};
}

ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
    ConfusionMatrix c;
    c.labels = j.at("labels").get<std::vector<int>>();
    const auto n = static_cast<Eigen::Index>(c.labels.size());
    const auto& rows = j.at("counts");
    if (static_cast<Eigen::Index>(rows.size()) != n) throw ParseError(0, "confusion matrix is not square");
    c.counts.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = rows[i].get<std::vector<int>>();
        if (static_cast<Eigen::Index>(r.size()) != n) throw ParseError(0, "confusion matrix is not square");
        for (Eigen::Index k = 0; k < n; ++k) {
            if (r[k] < 0) throw ParseError(0, "confusion counts must be non-negative");
            c.counts(i, k) = r[k];
        }
    }
    return c;
}

std::string_view model_name(ModelKind m) { return m == ModelKind::Ann ? "ann" : "svm"; }

ModelKind parse_model(std::string_view name) {
    if (name == "ann") return ModelKind::Ann;
    if (name == "svm") return ModelKind::Svm;
    throw InvalidArgument(fmt::format("unknown model '{}' (expected ann or svm)", name));
}

ModelKind default_model(Task task) {
    switch (task) {
        case Task::Presence:
        case Task::CountSmall:
        case Task::CountLarge: return ModelKind::Svm;
        default: return ModelKind::Ann;
    }
}

int full_class_count(Task task) {
    switch (task) {
        case Task::Presence: return 2400;
        case Task::CountSmall:
        case Task::CountLarge: return 2000;
        case Task::Radii: return 6000;
        case Task::IsoVsAnisoBoth:
        case Task::IsoVsAnisoInclusion: return 1000;
        case Task::DiagVsOffdiag:
        case Task::IsoVsSpatial: return 4000;
    }
    return 0;
}

double default_scale(ModelKind model) { return model == ModelKind::Svm ? 0.2 : 0.25; }

PatternKind task_pattern(Task task) { return task == Task::Radii ? PatternKind::Opposite : PatternKind::Trig; }

int scaled_count(Task task, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument(fmt::format("scale must be positive, got {}", scale));
    return std::max(10, static_cast<int>(std::llround(full_class_count(task) * scale)));
}

namespace {

double resolved_scale(Task task, const ExperimentOptions& o) {
    return o.scale < 0.0 ? default_scale(o.model.value_or(default_model(task))) : o.scale;
}

}  // namespace

DatasetConfig experiment_dataset_config(Task task, const ExperimentOptions& o) {
    DatasetConfig cfg;
    cfg.task = task;
    cfg.counts.assign(class_count(task), scaled_count(task, resolved_scale(task, o)));
    cfg.pattern = task_pattern(task);
    cfg.noise_scale = o.noise_scale;
    cfg.base_seed = o.seed;
    cfg.target_max_edge = o.target_max_edge;
    cfg.threads = o.threads;
    return cfg;
}

void check_test_isolation(const Dataset& dataset, const Split& split) {
    std::unordered_set<std::size_t> test;
    for (std::size_t i : split.test) {
        if (i >= dataset.size()) throw Error("isolation_error", fmt::format("test index {} is out of range", i));
        if (!test.insert(i).second) throw Error("isolation_error", fmt::format("test index {} is listed twice", i));
    }
    for (const auto* part : {&split.train, &split.validation}) {
        for (std::size_t i : *part) {
            if (i >= dataset.size()) throw Error("isolation_error", fmt::format("index {} is out of range", i));
            if (test.count(i)) throw Error("isolation_error", fmt::format("test sample {} also appears in a fitting list", i));
        }
    }
}

std::vector<int> TrainedModel::predict(const Eigen::MatrixXd& x) const {
    return kind == ModelKind::Ann ? predict_batch(ann, x) : svm.predict(x);
}

nlohmann::json TrainedModel::to_json() const { return kind == ModelKind::Ann ? eitml::to_json(ann) : eitml::to_json(svm); }

TrainedModel model_from_json(const nlohmann::json& j) {
    TrainedModel m;
    const std::string kind = j.value("kind", "");
    if (kind == "mlp") {
        m.kind = ModelKind::Ann;
        m.ann = mlp_from_json(j);
    } else if (kind == "svm") {
        m.kind = ModelKind::Svm;
        m.svm = svm_from_json(j);
    } else {
        throw ParseError(0, fmt::format("unknown model kind '{}'", kind));
    }
    return m;
}

ExperimentResult evaluate_dataset(const Dataset& ds, ModelKind model, const ExperimentOptions& o, std::string task_label) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<int> classes = ds.class_labels();
    ExperimentResult res;
    ExperimentReport& rep = res.report;
    rep.task = std::move(task_label);
    rep.model = model;
    rep.seed = o.seed;
    rep.manifest = to_json(ds.manifest);
    rep.dataset_digest = dataset_digest(ds);
    res.model.kind = model;

    const Split sp = split(ds, model == ModelKind::Ann ? SplitPolicy::Ann80_10_10 : SplitPolicy::Svm90_10, o.seed);
    check_test_isolation(ds, sp);
    rep.train_size = sp.train.size();
    rep.validation_size = sp.validation.size();
    rep.test_size = sp.test.size();

    if (model == ModelKind::Ann) {
        TrainConfig cfg = o.ann;
        cfg.seed = o.seed;
        const LabeledData train{ds.features(sp.train), ds.labels(sp.train)};
        const LabeledData val{ds.features(sp.validation), ds.labels(sp.validation)};
        TrainResult tr = train_scg(train, val, classes, cfg);
        res.model.ann = std::move(tr.model);
        rep.validation = confusion(val.labels, res.model.predict(val.x), classes);
        rep.training = {{"epochs", tr.history.epochs.size()},
                        {"best_epoch", tr.history.best_epoch},
                        {"best_validation_loss", tr.history.best_validation_loss},
                        {"stop_reason", tr.history.stop_reason},
                        {"scaling", scaling_name(cfg.scaling)}};
    } else {
        SvmConfig cfg = o.svm;
        cfg.threads = o.threads;
        std::vector<int> actual, pooled;
        for (const Fold& f : kfold(sp.train, o.folds)) {
            const MulticlassSvm m = train_ovo(ds.features(f.fit), ds.labels(f.fit), cfg);
            const auto p = m.predict(ds.features(f.holdout));
            const auto a = ds.labels(f.holdout);
            actual.insert(actual.end(), a.begin(), a.end());
            pooled.insert(pooled.end(), p.begin(), p.end());
        }
        rep.validation = confusion(actual, pooled, classes);
        res.model.svm = train_ovo(ds.features(sp.train), ds.labels(sp.train), cfg);
        nlohmann::json sv = nlohmann::json::array();
        for (const auto& p : res.model.svm.pairs) sv.push_back({{"pair", {p.positive, p.negative}}, {"support_vectors", p.svm.coefficients.size()}});
        rep.training = {{"kernel", kernel_name(cfg.smo.kernel)},
                        {"C", cfg.smo.c},
                        {"folds", o.folds},
                        {"scaling", scaling_name(cfg.scaling)},
                        {"pairs", sv}};
    }
    rep.test = confusion(ds.labels(sp.test), predict_labels(res.model, ds, sp.test), classes);
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

ExperimentResult run_task(Task task, const ExperimentOptions& o) {
    const auto start = std::chrono::steady_clock::now();
    const ModelKind model = o.model.value_or(default_model(task));
    const DatasetConfig cfg = experiment_dataset_config(task, o);
    const Dataset ds = generate_dataset(cfg);
    ExperimentResult res = evaluate_dataset(ds, model, o, std::string(task_name(task)));
    res.report.scale = resolved_scale(task, o);
    if (task == Task::Radii) {
        res.report.notes.push_back(
            "simulated analog: the measured saline-tank radii data is replaced by simulated opposite-injection "
            "D-N matrices with the same four radius classes");
    }
    if (!ds.regenerations.empty()) {
        res.report.notes.push_back(fmt::format("{} samples were regenerated after failed attempts", ds.regenerations.size()));
    }
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

nlohmann::json to_json(const ExperimentReport& r) {
    return {{"task", r.task},
            {"model", model_name(r.model)},
            {"seed", r.seed},
            {"scale", r.scale},
            {"manifest", r.manifest},
            {"dataset_digest", r.dataset_digest},
            {"split", {{"train", r.train_size}, {"validation", r.validation_size}, {"test", r.test_size}}},
            {"validation", to_json(r.validation)},
            {"test", to_json(r.test)},
            {"validation_accuracy", r.validation_accuracy()},
            {"test_accuracy", r.test_accuracy()},
            {"training", r.training},
            {"notes", r.notes}};
}

ExperimentReport report_from_json(const nlohmann::json& j) {
    ExperimentReport r;
    r.task = j.at("task").get<std::string>();
    r.model = parse_model(j.at("model").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.scale = j.at("scale").get<double>();
    r.manifest = j.at("manifest");
    r.dataset_digest = j.at("dataset_digest").get<std::string>();
    r.train_size = j.at("split").at("train").get<std::size_t>();
    r.validation_size = j.at("split").at("validation").get<std::size_t>();
    r.test_size = j.at("split").at("test").get<std::size_t>();
    r.validation = confusion_from_json(j.at("validation"));
    r.test = confusion_from_json(j.at("test"));
    r.training = j.at("training");
    r.notes = j.at("notes").get<std::vector<std::string>>();
    return r;
}

double SweepReport::accuracy(int electrodes, int measurements) const {
    for (const auto& c : cells) {
        if (c.electrodes == electrodes && c.measurements == measurements) {
            if (!c.valid) throw InvalidArgument(fmt::format("cell E={} M={} is invalid (M > E)", electrodes, measurements));
            return c.accuracy;
        }
    }
    throw InvalidArgument(fmt::format("sweep has no cell E={} M={}", electrodes, measurements));
}

nlohmann::json to_json(const SweepReport& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json j{{"electrodes", c.electrodes}, {"measurements", c.measurements}, {"valid", c.valid}};
        if (c.valid) j["accuracy"] = c.accuracy, j["test_size"] = c.test_size, j["dataset_digest"] = c.dataset_digest;
        cells.push_back(std::move(j));
    }
    return {{"kind", r.kind}, {"seed", r.seed}, {"scale", r.scale}, {"cells", cells}};
}

SweepReport run_measurement_sweep(std::span<const int> measurements, const ExperimentOptions& o) {
    if (measurements.empty()) throw InvalidArgument("measurement sweep needs at least one M");
    for (int m : measurements) {
        if (m < 1 || m > 16) throw InvalidArgument(fmt::format("M = {} is outside 1..16", m));
    }
    ExperimentOptions opts = o;
    opts.model = ModelKind::Ann;
    const DatasetConfig cfg = experiment_dataset_config(Task::Radii, opts);
    const Dataset full = generate_dataset(cfg);
    SweepReport rep;
    rep.kind = "measurements";
    rep.seed = o.seed;
    rep.scale = resolved_scale(Task::Radii, opts);
    rep.cells.resize(measurements.size());
    parallel_for(measurements.size(), o.threads, [&](std::size_t k) { rep.cells[k] = evaluate_cell(full, 16, measurements[k], opts); });
    return rep;
}

SweepReport run_electrode_sweep(std::span<const int> electrodes, std::span<const int> measurements, const ExperimentOptions& o) {
    if (electrodes.empty() || measurements.empty()) throw InvalidArgument("electrode sweep needs at least one E and one M");
    for (int e : electrodes) {
        if (e < 2 || e % 2 != 0) throw InvalidArgument(fmt::format("opposite injection needs an even E >= 2, got {}", e));
    }
    ExperimentOptions opts = o;
    opts.model = ModelKind::Ann;
    SweepReport rep;
    rep.kind = "electrodes";
    rep.seed = o.seed;
    rep.scale = resolved_scale(Task::Radii, opts);
    // 12000 samples per electrode configuration at scale 1.
    const int per_class = std::max(10, static_cast<int>(std::llround(3000 * rep.scale)));
    for (int m : measurements) {
        if (m < 1) throw InvalidArgument(fmt::format("M = {} must be positive", m));
    }
    std::vector<Dataset> full(electrodes.size());
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t i = 0; i < electrodes.size(); ++i) {
        const int e = electrodes[i];
        for (int m : measurements) {
            rep.cells.push_back({e, m, m <= e, 0.0, 0, {}});
            if (m <= e) jobs.emplace_back(rep.cells.size() - 1, i);
        }
        if (std::none_of(measurements.begin(), measurements.end(), [&](int m) { return m <= e; })) continue;
        DatasetConfig cfg = experiment_dataset_config(Task::Radii, opts);
        cfg.counts.assign(4, per_class);
        cfg.electrode_count = e;
        cfg.measurement_count = e;
        full[i] = generate_dataset(cfg);
    }
    parallel_for(jobs.size(), o.threads, [&](std::size_t k) {
        auto& cell = rep.cells[jobs[k].first];
        cell = evaluate_cell(full[jobs[k].second], cell.electrodes, cell.measurements, opts);
    });
    return rep;
}

std::string confusion_csv(const ConfusionMatrix& c) {
    std::string out = "actual\\predicted";
    for (int l : c.labels) out += fmt::format(",{}", l);
    out += '\n';
    for (Eigen::Index i = 0; i < c.counts.rows(); ++i) {
        out += fmt::format("{}", c.labels[i]);
        for (Eigen::Index j = 0; j < c.counts.cols(); ++j) out += fmt::format(",{}", c.counts(i, j));
        out += '\n';
    }
    return out;
}

std::string confusion_svg(const ConfusionMatrix& c, std::string_view title) {
    const int n = static_cast<int>(c.labels.size());
    const int cell = 72, left = 90, top = 70;
    const int width = std::max(left + n * cell + 30, 380), height = top + n * cell + 60;
    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"sans-serif\" font-size=\"13\">\n"
        "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
        "<text x=\"{2}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{3}</text>\n"
        "<text x=\"{2}\" y=\"42\" text-anchor=\"middle\">accuracy {4:.1f}% ({5}/{6})</text>\n",
        width, height, width / 2, escape_xml(title), 100.0 * c.accuracy(), c.correct(), c.total());
    for (int i = 0; i < n; ++i) {
        const long row_total = c.counts.row(i).sum();
        for (int j = 0; j < n; ++j) {
            const int v = c.counts(i, j);
            const double t = row_total > 0 ? static_cast<double>(v) / static_cast<double>(row_total) : 0.0;
            const std::string fill = v == 0 ? "#ffffff" : shade(i == j ? kBlue : kRed, 0.15 + 0.85 * t);
            const int x = left + j * cell, y = top + i * cell;
            s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"#888\"/>\n", x, y, cell, cell, fill);
            s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{}\">{}</text>\n", x + cell / 2, y + cell / 2 + 5,
                             t > 0.6 ? "white" : "black", v);
        }
        s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 8, top + i * cell + cell / 2 + 5, c.labels[i]);
        s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + i * cell + cell / 2, top + n * cell + 20, c.labels[i]);
    }
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">predicted class</text>\n", left + n * cell / 2, top + n * cell + 45);
    s += fmt::format("<text x=\"20\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {0})\">actual class</text>\n",
                     top + n * cell / 2);
    s += "</svg>\n";
    return s;
}

namespace {

std::string curve_svg(const SweepReport& r) {
    std::vector<const SweepCell*> pts;
    for (const auto& c : r.cells) {
        if (!c.valid) continue;
        if (r.kind == "electrodes" && c.measurements != c.electrodes) continue;
        pts.push_back(&c);
    }
    const bool by_e = r.kind == "electrodes";
    const int w = 480, h = 320, left = 60, right = 20, top = 40, bottom = 50;
    const double xmax = 16.0;
    auto px = [&](double v) { return left + (w - left - right) * v / xmax; };
    auto py = [&](double a) { return top + (h - top - bottom) * (1.0 - a); };
    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
        "<text x=\"{2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">test accuracy vs {3}</text>\n",
        w, h, w / 2, by_e ? "electrodes E (M = E)" : "measurements M (E = 16)");
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", left, top, h - bottom);
    s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", left, h - bottom, w - right);
    for (int k = 0; k <= 4; ++k) {
        const double a = 0.25 * k;
        s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", left - 6, py(a) + 4, a);
        s += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", left, py(a), w - right, py(a));
    }
    std::string path;
    for (const auto* c : pts) {
        const double x = px(by_e ? c->electrodes : c->measurements), y = py(c->accuracy);
        path += fmt::format("{}{:.1f},{:.1f}", path.empty() ? "" : " ", x, y);
        s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"4\" fill=\"#2166ac\"/>\n", x, y);
        s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x, h - bottom + 18,
                         by_e ? c->electrodes : c->measurements);
    }
    if (!path.empty()) s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"#2166ac\" stroke-width=\"2\"/>\n", path);
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (left + w - right) / 2, h - 12, by_e ? "E" : "M");
    s += "</svg>\n";
    return s;
}

std::string heatmap_svg(const SweepReport& r) {
    std::vector<int> es, ms;
    for (const auto& c : r.cells) {
        if (std::find(es.begin(), es.end(), c.electrodes) == es.end()) es.push_back(c.electrodes);
        if (std::find(ms.begin(), ms.end(), c.measurements) == ms.end()) ms.push_back(c.measurements);
    }
    std::sort(es.begin(), es.end());
    std::sort(ms.begin(), ms.end());
    const int cell = 64, left = 70, top = 50;
    const int w = std::max(left + static_cast<int>(ms.size()) * cell + 20, 460), h = top + static_cast<int>(es.size()) * cell + 50;
    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
        "<text x=\"{2}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">test accuracy by electrodes E and measurements M</text>\n",
        w, h, w / 2);
    for (std::size_t i = 0; i < es.size(); ++i) {
        const int y = top + static_cast<int>(i) * cell;
        s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">E={}</text>\n", left - 8, y + cell / 2 + 4, es[i]);
        for (std::size_t j = 0; j < ms.size(); ++j) {
            const int x = left + static_cast<int>(j) * cell;
            const SweepCell* found = nullptr;
            for (const auto& c : r.cells) {
                if (c.electrodes == es[i] && c.measurements == ms[j]) found = &c;
            }
            if (!found || !found->valid) {
                s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#eeeeee\" stroke=\"#bbb\"/>\n", x, y, cell, cell);
                continue;
            }
            s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"#888\"/>\n", x, y, cell, cell,
                             shade(kBlue, found->accuracy));
            s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{}\">{:.1f}</text>\n", x + cell / 2, y + cell / 2 + 4,
                             found->accuracy > 0.6 ? "white" : "black", 100.0 * found->accuracy);
        }
    }
    for (std::size_t j = 0; j < ms.size(); ++j) {
        s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">M={}</text>\n", left + static_cast<int>(j) * cell + cell / 2,
                         top + static_cast<int>(es.size()) * cell + 20, ms[j]);
    }
    s += "</svg>\n";
    return s;
}

}  // namespace

void emit_report(const ExperimentReport& report, const std::filesystem::path& dir) {
    ensure_dir(dir);
    write_file(dir / "report.json", to_json(report).dump(2) + "\n");
    write_file(dir / "confusion_validation.csv", confusion_csv(report.validation));
    write_file(dir / "confusion_test.csv", confusion_csv(report.test));
    write_file(dir / "confusion_test.svg",
               confusion_svg(report.test, fmt::format("{} ({}), test set", report.task, model_name(report.model))));
}

void emit_timing(double wall_seconds, const std::filesystem::path& dir) {
    ensure_dir(dir);
    write_file(dir / "timing.json", nlohmann::json{{"wall_seconds", wall_seconds}}.dump(2) + "\n");
}

void emit_sweep(const SweepReport& report, const std::filesystem::path& dir) {
    ensure_dir(dir);
    write_file(dir / "sweep.json", to_json(report).dump(2) + "\n");
    std::string csv = "electrodes,measurements,valid,accuracy,test_size\n";
    for (const auto& c : report.cells) {
        csv += c.valid ? fmt::format("{},{},1,{:.17g},{}\n", c.electrodes, c.measurements, c.accuracy, c.test_size)
                       : fmt::format("{},{},0,,\n", c.electrodes, c.measurements);
    }
    write_file(dir / "sweep.csv", csv);
    write_file(dir / "sweep.svg", curve_svg(report));
    if (report.kind == "electrodes") write_file(dir / "heatmap.svg", heatmap_svg(report));
}

}  // namespace eitml
