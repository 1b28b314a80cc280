// Command-line front end: dataset simulation and ingestion, training,
// evaluation and the classification experiments.

#include "eitml/error.hpp"
#include "eitml/experiments.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

using namespace eitml;
using nlohmann::json;

namespace {

// JSON config reader. Nested objects address subcommands; a top-level key
// that is not a root option is applied to every subcommand that has it.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(const CLI::App* app) : app_(app) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override {
        throw CLI::ConversionError("writing JSON config files is not supported");
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw CLI::ConversionError(fmt::format("config is not valid JSON: {}", e.what()));
        }
        if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            const std::string name = normalise(key);
            if (value.is_object()) {
                for (const auto& [k, v] : value.items()) items.push_back(item({key}, normalise(k), v));
                continue;
            }
            if (has_option(app_, name)) {
                items.push_back(item({}, name, value));
                continue;
            }
            bool used = false;
            for (const auto* sub : app_->get_subcommands({})) {
                if (has_option(sub, name)) {
                    items.push_back(item({sub->get_name()}, name, value));
                    used = true;
                }
            }
            if (!used) throw CLI::ConversionError(fmt::format("config key '{}' matches no option", key));
        }
        return items;
    }

private:
    static std::string normalise(std::string s) {
        std::replace(s.begin(), s.end(), '_', '-');
        return s;
    }

    static bool has_option(const CLI::App* app, const std::string& name) {
        return app->get_option_no_throw("--" + name) != nullptr;
    }

    static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

    static CLI::ConfigItem item(std::vector<std::string> parents, std::string name, const json& v) {
        CLI::ConfigItem it;
        it.parents = std::move(parents);
        it.name = std::move(name);
        if (v.is_array()) {
            for (const auto& e : v) it.inputs.push_back(scalar(e));
        } else {
            it.inputs.push_back(scalar(v));
        }
        return it;
    }

    const CLI::App* app_;
};

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << j.dump(2) << '\n')) throw IoError(fmt::format("cannot write {}", path.string()));
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(0, fmt::format("{}: {}", path.string(), e.what()));
    }
}

struct CommonOptions {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
};

struct ModelOptions {
    std::string model = "ann";
    int max_epochs = TrainConfig{}.max_epochs;
    int patience = TrainConfig{}.patience;
    std::string ann_scaling = "minmax";
    std::string kernel = "quadratic";
    double c = 1.0;
    double tolerance = 1e-3;
    std::string svm_scaling = "none";
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
    cmd->add_option("--max-epochs", m.max_epochs, "ANN epoch limit")->check(CLI::PositiveNumber);
    cmd->add_option("--patience", m.patience, "ANN early-stopping patience")->check(CLI::PositiveNumber);
    cmd->add_option("--ann-scaling", m.ann_scaling, "ANN input scaling: none, minmax, zscore");
    cmd->add_option("--kernel", m.kernel, "SVM kernel: linear, quadratic");
    cmd->add_option("--C", m.c, "SVM box constraint")->check(CLI::PositiveNumber);
    cmd->add_option("--tolerance", m.tolerance, "SMO stopping tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--svm-scaling", m.svm_scaling, "SVM input scaling: none, minmax, zscore");
}

ExperimentOptions experiment_options(const CommonOptions& c, const ModelOptions& m) {
    ExperimentOptions o;
    o.seed = c.seed;
    o.threads = c.threads;
    o.ann.max_epochs = m.max_epochs;
    o.ann.patience = m.patience;
    o.ann.scaling = parse_scaling(m.ann_scaling);
    o.svm.smo.kernel = parse_kernel(m.kernel);
    o.svm.smo.c = m.c;
    o.svm.smo.tolerance = m.tolerance;
    o.svm.scaling = parse_scaling(m.svm_scaling);
    return o;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json summary(const ExperimentReport& r) {
    return {{"task", r.task},
            {"model", model_name(r.model)},
            {"seed", r.seed},
            {"validation_accuracy", r.validation_accuracy()},
            {"test_accuracy", r.test_accuracy()},
            {"test_size", r.test_size}};
}

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Classification of conductivity phantoms from simulated EIT boundary data"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<JsonConfig>(&app));
    app.set_config("--config", "", "JSON file overriding option defaults");

    CommonOptions common;
    ModelOptions model_opts;
    auto add_common = [&](CLI::App* cmd, bool out_required) {
        cmd->add_option("--seed", common.seed, "base seed");
        cmd->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
        auto* out = cmd->add_option("--out", common.out, "output directory");
        if (out_required) out->required();
    };

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a simulated dataset");
    std::string sim_task;
    double sim_scale = 0.0;
    int sim_count = 0, sim_e = 16, sim_m = 0;
    std::string sim_pattern;
    double sim_noise = kDefaultNoiseScale, sim_edge = kDefaultMaxEdge;
    sim->add_option("--task", sim_task, "classification task")->required();
    auto* scale_opt = sim->add_option("--scale", sim_scale, "fraction of the full per-class counts")->check(CLI::PositiveNumber);
    sim->add_option("--count", sim_count, "samples per class")->check(CLI::PositiveNumber)->excludes(scale_opt);
    sim->add_option("--electrodes", sim_e, "electrode count E")->check(CLI::PositiveNumber);
    sim->add_option("--measurements", sim_m, "leading block size M (default E)")->check(CLI::PositiveNumber);
    sim->add_option("--pattern", sim_pattern, "trig or opposite (default depends on the task)");
    sim->add_option("--noise", sim_noise, "noise standard deviation")->check(CLI::NonNegativeNumber);
    sim->add_option("--max-edge", sim_edge, "target mesh edge length in metres")->check(CLI::PositiveNumber);
    add_common(sim, true);

    // ingest
    auto* ing = app.add_subcommand("ingest", "convert measured N-D records into a dataset");
    std::string ing_input;
    ing->add_option("--input", ing_input, "record file")->required()->check(CLI::ExistingFile);
    add_common(ing, true);

    // train
    auto* trn = app.add_subcommand("train", "train and evaluate a classifier on a dataset");
    std::string trn_data;
    trn->add_option("--data", trn_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    trn->add_option("--model", model_opts.model, "ann or svm");
    add_model_options(trn, model_opts);
    add_common(trn, true);

    // eval
    auto* evl = app.add_subcommand("eval", "apply a trained model to every sample of a dataset");
    std::string evl_data, evl_model;
    evl->add_option("--data", evl_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    evl->add_option("--model-file", evl_model, "model JSON written by train")->required()->check(CLI::ExistingFile);
    add_common(evl, false);

    // experiment
    auto* exp = app.add_subcommand("experiment", "run a task or sweep end to end");
    std::string exp_name;
    double exp_scale = -1.0;
    std::optional<std::string> exp_model;
    double exp_noise = kDefaultNoiseScale, exp_edge = kDefaultMaxEdge;
    std::vector<int> exp_es(std::begin(kSweepElectrodes), std::end(kSweepElectrodes));
    std::vector<int> exp_ms(std::begin(kSweepMeasurements), std::end(kSweepMeasurements));
    exp->add_option("name", exp_name, "task name, measurement_sweep or electrode_sweep")->required();
    exp->add_option("--scale", exp_scale, "fraction of the full per-class counts")->check(CLI::PositiveNumber);
    exp->add_option("--model", exp_model, "override the task's default model (ann or svm)");
    exp->add_option("--noise", exp_noise, "noise standard deviation")->check(CLI::NonNegativeNumber);
    exp->add_option("--max-edge", exp_edge, "target mesh edge length in metres")->check(CLI::PositiveNumber);
    exp->add_option("--electrodes", exp_es, "electrode counts for electrode_sweep")->delimiter(',');
    exp->add_option("--measurements", exp_ms, "block sizes for the sweeps")->delimiter(',');
    add_model_options(exp, model_opts);
    add_common(exp, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage_error", e.what(), 2);
    }

    try {
        const auto t0 = std::chrono::steady_clock::now();
        const std::filesystem::path out = common.out;
        json result;

        if (sim->parsed()) {
            const Task task = parse_task(sim_task);
            DatasetConfig cfg;
            cfg.task = task;
            const int per_class = sim_count > 0 ? sim_count : scaled_count(task, sim_scale > 0.0 ? sim_scale : 1.0);
            cfg.counts.assign(class_count(task), per_class);
            cfg.electrode_count = sim_e;
            cfg.measurement_count = sim_m > 0 ? sim_m : sim_e;
            cfg.pattern = sim_pattern.empty() ? task_pattern(task) : parse_pattern(sim_pattern);
            cfg.noise_scale = sim_noise;
            cfg.target_max_edge = sim_edge;
            cfg.base_seed = common.seed;
            cfg.threads = common.threads;
            const Dataset ds = generate_dataset(cfg);
            write_dataset(ds, out);
            result = {{"samples", ds.size()}, {"regenerations", ds.regenerations.size()}, {"out", out.string()}};
        } else if (ing->parsed()) {
            const IngestResult r = ingest_nd_records(std::filesystem::path(ing_input));
            json diags = json::array();
            for (const auto& d : r.diagnostics) diags.push_back({{"line", d.line}, {"kind", d.kind}, {"message", d.message}});
            write_dataset(r.dataset, out);
            write_json(out / "diagnostics.json", diags);
            result = {{"samples", r.dataset.size()}, {"rejected", r.diagnostics.size()}, {"out", out.string()}};
        } else if (trn->parsed()) {
            const Dataset ds = read_dataset(trn_data);
            const ExperimentOptions o = experiment_options(common, model_opts);
            const ExperimentResult r = evaluate_dataset(ds, parse_model(model_opts.model), o, ds.manifest.task);
            emit_report(r.report, out);
            emit_timing(r.wall_seconds, out);
            write_json(out / "model.json", r.model.to_json());
            result = summary(r.report);
        } else if (evl->parsed()) {
            const Dataset ds = read_dataset(evl_data);
            const TrainedModel model = model_from_json(read_json(evl_model));
            std::vector<std::size_t> all(ds.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            const auto c = confusion(ds.labels(all), model.predict(ds.features(all)), ds.class_labels());
            result = {{"samples", ds.size()}, {"accuracy", c.accuracy()}, {"confusion", to_json(c)}};
            if (!common.out.empty()) {
                std::filesystem::create_directories(out);
                write_json(out / "eval.json", result);
                std::ofstream(out / "confusion.csv") << confusion_csv(c);
                std::ofstream(out / "confusion.svg") << confusion_svg(c, fmt::format("{} on {}", model_name(model.kind), evl_data));
            }
        } else if (exp->parsed()) {
            ExperimentOptions o = experiment_options(common, model_opts);
            o.scale = exp_scale;
            o.noise_scale = exp_noise;
            o.target_max_edge = exp_edge;
            if (exp_model) o.model = parse_model(*exp_model);
            if (exp_name == "measurement_sweep" || exp_name == "electrode_sweep") {
                const SweepReport s = exp_name == "measurement_sweep" ? run_measurement_sweep(exp_ms, o)
                                                                      : run_electrode_sweep(exp_es, exp_ms, o);
                emit_sweep(s, out);
                emit_timing(seconds_since(t0), out);
                result = to_json(s);
            } else {
                const ExperimentResult r = run_task(parse_task(exp_name), o);
                emit_report(r.report, out);
                emit_timing(r.wall_seconds, out);
                write_json(out / "model.json", r.model.to_json());
                result = summary(r.report);
            }
        }
        result["status"] = "ok";
        result["wall_seconds"] = seconds_since(t0);
        std::cout << result.dump(2) << '\n';
        return 0;
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), 1);
    } catch (const std::exception& e) {
        return fail("internal_error", e.what(), 1);
    }
}
