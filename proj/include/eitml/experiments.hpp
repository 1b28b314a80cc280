#pragma once

#include "eitml/ann.hpp"
#include "eitml/dataset.hpp"
#include "eitml/svm.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eitml {

/// Rows are actual classes, columns predicted, both in `labels` order.
struct ConfusionMatrix {
    std::vector<int> labels;
    Eigen::MatrixXi counts;

    long total() const { return counts.sum(); }
    long correct() const { return counts.trace(); }
    double accuracy() const;
};

ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted, std::span<const int> labels);
/// Labels 1..n.
ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted, int n);

nlohmann::json to_json(const ConfusionMatrix& c);
ConfusionMatrix confusion_from_json(const nlohmann::json& j);

enum class ModelKind { Ann, Svm };

std::string_view model_name(ModelKind m);
ModelKind parse_model(std::string_view name);

/// SVM for the presence and count tasks, ANN otherwise.
ModelKind default_model(Task task);
/// Samples per class at scale 1.
int full_class_count(Task task);
/// 0.2 for SVM runs, 0.25 for ANN runs.
double default_scale(ModelKind model);
/// Radii uses opposite injection, every other task trigonometric patterns.
PatternKind task_pattern(Task task);

struct ExperimentOptions {
    /// Negative selects default_scale(model).
    double scale = -1.0;
    std::uint64_t seed = 0;
    int threads = 1;
    std::optional<ModelKind> model;
    double target_max_edge = kDefaultMaxEdge;
    double noise_scale = kDefaultNoiseScale;
    TrainConfig ann;
    SvmConfig svm;
    /// Folds used for the SVM validation estimate.
    int folds = 5;
};

/// Per-class sample count for `task` at `scale`, at least 10.
int scaled_count(Task task, double scale);

DatasetConfig experiment_dataset_config(Task task, const ExperimentOptions& options);

struct ExperimentReport {
    std::string task;
    ModelKind model = ModelKind::Ann;
    std::uint64_t seed = 0;
    double scale = 0.0;
    nlohmann::json manifest;
    std::string dataset_digest;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
    std::size_t test_size = 0;
    /// ANN: the validation split. SVM: pooled k-fold hold-out predictions.
    ConfusionMatrix validation;
    ConfusionMatrix test;
    /// Training summary (epochs and stop reason, or support vector counts).
    nlohmann::json training;
    std::vector<std::string> notes;

    double validation_accuracy() const { return validation.accuracy(); }
    double test_accuracy() const { return test.accuracy(); }
};

nlohmann::json to_json(const ExperimentReport& r);
ExperimentReport report_from_json(const nlohmann::json& j);

/// Throws Error when a test index also appears in the training or
/// validation lists, or any list indexes past the dataset.
void check_test_isolation(const Dataset& dataset, const Split& split);

struct TrainedModel {
    ModelKind kind = ModelKind::Ann;
    MlpModel ann;
    MulticlassSvm svm;

    std::vector<int> predict(const Eigen::MatrixXd& x) const;
    nlohmann::json to_json() const;
};

TrainedModel model_from_json(const nlohmann::json& j);

struct ExperimentResult {
    ExperimentReport report;
    TrainedModel model;
    double wall_seconds = 0.0;
};

/// Splits, trains and evaluates `model` on an existing dataset.
ExperimentResult evaluate_dataset(const Dataset& dataset, ModelKind model, const ExperimentOptions& options,
                                  std::string task_label);

/// Generates the task's dataset at the requested scale and evaluates it.
ExperimentResult run_task(Task task, const ExperimentOptions& options);

struct SweepCell {
    int electrodes = 0;
    int measurements = 0;
    /// False when M > E; such cells carry no accuracy.
    bool valid = true;
    double accuracy = 0.0;
    std::size_t test_size = 0;
    /// Digest of the M x M block the cell was trained on.
    std::string dataset_digest;
};

struct SweepReport {
    /// "measurements" or "electrodes".
    std::string kind;
    std::uint64_t seed = 0;
    double scale = 0.0;
    std::vector<SweepCell> cells;

    /// Accuracy of the cell (E, M); throws InvalidArgument when absent or invalid.
    double accuracy(int electrodes, int measurements) const;
};

nlohmann::json to_json(const SweepReport& r);

inline constexpr int kSweepMeasurements[] = {1, 2, 4, 8, 12, 16};
inline constexpr int kSweepElectrodes[] = {2, 4, 8, 12, 16};

/// Radii task at E = 16 with opposite injection; one ANN per M, trained on
/// the leading M x M block of the same simulated matrices.
SweepReport run_measurement_sweep(std::span<const int> measurements, const ExperimentOptions& options);

/// One simulated radii dataset per E; one ANN per (E, M) with M <= E and M in
/// `measurements`. Cells with M > E are listed as invalid.
SweepReport run_electrode_sweep(std::span<const int> electrodes, std::span<const int> measurements,
                                const ExperimentOptions& options);

/// Writes report.json, confusion_{validation,test}.csv and confusion_test.svg
/// into `dir`, creating it if needed.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);
/// Writes timing.json; kept apart from report.json so reports stay
/// reproducible.
void emit_timing(double wall_seconds, const std::filesystem::path& dir);
/// Writes sweep.json, sweep.csv, and sweep.svg (accuracy curve) plus
/// heatmap.svg for electrode sweeps.
void emit_sweep(const SweepReport& report, const std::filesystem::path& dir);

std::string confusion_csv(const ConfusionMatrix& c);
std::string confusion_svg(const ConfusionMatrix& c, std::string_view title);

}  // namespace eitml
