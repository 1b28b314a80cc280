#pragma once

#include "eitml/scaling.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <span>
#include <string_view>
#include <vector>

namespace eitml {

enum class KernelKind { Linear, Quadratic };

std::string_view kernel_name(KernelKind k);
KernelKind parse_kernel(std::string_view name);

/// Linear: x.y. Quadratic: (x.y + 1)^2.
double kernel(std::span<const double> x, std::span<const double> y, KernelKind kind);

/// Explicit quadratic features: x_i, x_i^2 and sqrt(2) x_i x_j for i < j,
/// so that (x.y + 1)^2 = phi(x).phi(y) + x.y + 1. Length 2l + l(l-1)/2.
std::vector<double> quadratic_feature_map(std::span<const double> x);

/// Kernel matrix between the rows of `a` and the rows of `b`.
Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, KernelKind kind);

struct BinarySvm {
    KernelKind kernel = KernelKind::Quadratic;
    /// One support vector per row.
    Eigen::MatrixXd support_vectors;
    /// alpha_i * y_i for each support vector.
    Eigen::VectorXd coefficients;
    double bias = 0.0;

    double decision(std::span<const double> x) const;
    /// Decision values for every row of `x`.
    Eigen::VectorXd decision(const Eigen::MatrixXd& x) const;
    /// sign(f) with f = 0 mapped to +1.
    int classify(std::span<const double> x) const;
};

struct SmoConfig {
    KernelKind kernel = KernelKind::Quadratic;
    double c = 1.0;
    /// Stop when the maximal KKT violation m - M drops below this.
    double tolerance = 1e-3;
    /// Pair updates before giving up; 0 selects 10 N passes of N updates,
    /// but never fewer than 10^6.
    long max_iterations = 0;
    bool record_objective = false;
};

struct SmoResult {
    BinarySvm model;
    /// Multipliers for every training point, in input order.
    Eigen::VectorXd alpha;
    /// Decision values on the training points.
    Eigen::VectorXd training_decision;
    long iterations = 0;
    /// Dual objective sum(alpha) - 1/2 alpha'Q alpha after each update.
    std::vector<double> objective;
};

/// Soft-margin SMO with maximal-violating-pair selection on a precomputed
/// Gram matrix. `y` holds +1 / -1. Throws TrainingError on non-convergence.
SmoResult train_smo(const Eigen::MatrixXd& x, std::span<const int> y, const SmoConfig& config);

struct SvmConfig {
    SmoConfig smo;
    /// Inputs are used raw by default.
    InputScaling scaling = InputScaling::None;
    int threads = 1;
};

struct PairModel {
    /// Predicted when the binary decision is >= 0.
    int positive = 0;
    int negative = 0;
    BinarySvm svm;
};

/// One-vs-one multiclass SVM with majority vote. Vote ties go to the
/// smallest label.
struct MulticlassSvm {
    std::vector<int> labels;
    FeatureScaler scaler;
    double c = 1.0;
    std::vector<PairModel> pairs;

    int predict(std::span<const double> x) const;
    std::vector<int> predict(const Eigen::MatrixXd& x) const;
};

/// One binary model per unordered pair of labels, positive = smaller label.
MulticlassSvm train_ovo(const Eigen::MatrixXd& x, std::span<const int> labels, const SvmConfig& config);

nlohmann::json to_json(const MulticlassSvm& model);
MulticlassSvm svm_from_json(const nlohmann::json& j);

}  // namespace eitml
