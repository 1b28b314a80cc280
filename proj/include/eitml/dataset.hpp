#pragma once

#include "eitml/forward.hpp"
#include "eitml/phantom.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace eitml {

inline constexpr int kDatasetFormatVersion = 1;

struct ClassCount {
    int label = 0;
    int count = 0;
};

struct Manifest {
    int format_version = kDatasetFormatVersion;
    /// Task name, or "ingested" for measured data.
    std::string task;
    int electrode_count = 16;
    int measurement_count = 16;
    PatternKind pattern = PatternKind::Trig;
    double noise_scale = kDefaultNoiseScale;
    std::uint64_t base_seed = 0;
    std::vector<ClassCount> classes;
    double target_max_edge = kDefaultMaxEdge;
    double tank_radius = kTankRadius;

    int feature_length() const { return measurement_count * measurement_count; }
    std::size_t total() const;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

struct Sample {
    std::vector<double> features;
    int label = 0;
    /// Scenario, seeds and attempt number; null for ingested records.
    nlohmann::json provenance;
};

/// A sample that failed and was drawn again from a fresh derived seed.
struct Regeneration {
    std::size_t index = 0;
    std::uint64_t failed_seed = 0;
    std::uint64_t next_seed = 0;
    std::string error;
};

struct Dataset {
    Manifest manifest;
    std::vector<Sample> samples;
    std::vector<Regeneration> regenerations;

    std::size_t size() const { return samples.size(); }
    /// Rows are the samples at `indices`.
    Eigen::MatrixXd features(std::span<const std::size_t> indices) const;
    std::vector<int> labels(std::span<const std::size_t> indices) const;
    std::vector<int> class_labels() const;
};

struct DatasetConfig {
    Task task = Task::Presence;
    /// Samples per class, in label order.
    std::vector<int> counts;
    int electrode_count = 16;
    int measurement_count = 16;
    PatternKind pattern = PatternKind::Trig;
    double noise_scale = kDefaultNoiseScale;
    std::uint64_t base_seed = 0;
    double target_max_edge = kDefaultMaxEdge;
    double tank_radius = kTankRadius;
    int threads = 1;
    /// Attempts per sample before generation gives up.
    int max_attempts = 8;
};

/// Seed of stream `stream` for attempt `attempt` of a sample.
std::uint64_t derive_seed(std::uint64_t sample_seed, std::uint64_t attempt, std::uint64_t stream);

/// Samples are laid out class by class; sample i uses seed base_seed + i.
/// Where the task leaves the inclusion radius free, radius classes cycle
/// through 1..4 within each class. The result does not depend on `threads`.
Dataset generate_dataset(const DatasetConfig& config);

/// FNV-1a over every label and the bit pattern of every feature, as 16 hex
/// digits. Equal digests mean bit-identical samples.
std::string dataset_digest(const Dataset& dataset);

/// Dataset restricted to the leading m x m block of every D-N matrix.
Dataset leading_block(const Dataset& dataset, int m);

/// Writes manifest.json, samples.csv and provenance.jsonl into `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

enum class SplitPolicy { Ann80_10_10, Svm90_10 };

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Stratified split; per class the test and validation shares are rounded
/// to the nearest sample. Throws InvalidArgument for classes with fewer than
/// ten samples.
Split split(const Dataset& dataset, SplitPolicy policy, std::uint64_t seed);

struct Fold {
    std::vector<std::size_t> fit;
    std::vector<std::size_t> holdout;
};

/// Contiguous folds over `items`; the first size % k folds get one extra.
std::vector<Fold> kfold(std::span<const std::size_t> items, int k = 5);

struct IngestDiagnostic {
    int line = 0;
    std::string kind;
    std::string message;
};

struct IngestResult {
    Dataset dataset;
    std::vector<IngestDiagnostic> diagnostics;
};

/// Parses `label, M, r_11, ..., r_MM` records, inverts each N-D matrix and
/// keeps the flattened D-N matrix. Bad records become diagnostics; blank
/// lines and lines starting with '#' are skipped.
IngestResult ingest_nd_records(std::istream& in);
IngestResult ingest_nd_records(const std::filesystem::path& file);

}  // namespace eitml
