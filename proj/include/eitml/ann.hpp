#pragma once

#include "eitml/scaling.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace eitml {

inline constexpr int kHiddenUnits = 64;

/// d -> 64 sigmoid -> n softmax. All parameters live in one flat vector
/// laid out as [W1 (d x 64) | B1 (64) | W2 (64 x n) | B2 (n)], matrices
/// column-major.
class MlpModel {
public:
    MlpModel() = default;
    MlpModel(int input_dim, int classes, int hidden = kHiddenUnits);

    int input_dim() const { return input_dim_; }
    int hidden() const { return hidden_; }
    int classes() const { return classes_; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }

    Eigen::Map<const Eigen::MatrixXd> w1() const;
    Eigen::Map<const Eigen::VectorXd> b1() const;
    Eigen::Map<const Eigen::MatrixXd> w2() const;
    Eigen::Map<const Eigen::VectorXd> b2() const;
    Eigen::Map<Eigen::MatrixXd> w1();
    Eigen::Map<Eigen::VectorXd> b1();
    Eigen::Map<Eigen::MatrixXd> w2();
    Eigen::Map<Eigen::VectorXd> b2();

    /// Glorot-uniform weights, zero biases.
    void initialize(std::uint64_t seed);

    /// Class label reported for output k (defaults to k + 1).
    std::vector<int> labels;
    /// Applied to raw inputs before the first layer.
    FeatureScaler scaler;

private:
    int input_dim_ = 0;
    int hidden_ = kHiddenUnits;
    int classes_ = 0;
    Eigen::VectorXd params_;
};

double sigmoid(double z);

/// Class probabilities for one raw feature vector.
Eigen::VectorXd forward_pass(const MlpModel& model, std::span<const double> x);
/// Row-wise probabilities for a batch of raw feature rows.
Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& x);

/// Index of the largest entry; exact ties are broken uniformly with `rng`.
int argmax_with_ties(const Eigen::VectorXd& p, std::mt19937_64& rng);

/// Predicted class label (an element of model.labels).
int predict(const MlpModel& model, std::span<const double> x, std::mt19937_64& rng);
std::vector<int> predict_batch(const MlpModel& model, const Eigen::MatrixXd& x, std::uint64_t tie_seed = 0);

/// A batch of already-scaled inputs with 0-based class targets.
struct Batch {
    Eigen::MatrixXd x;
    std::vector<int> target;
};

/// Mean cross-entropy; probabilities are clamped below at 1e-300.
double loss(const MlpModel& model, const Batch& batch);
/// Gradient of `loss` with respect to model.parameters().
Eigen::VectorXd gradient(const MlpModel& model, const Batch& batch, double* loss_out = nullptr);

struct TrainConfig {
    int max_epochs = 1000;
    int patience = 6;
    std::uint64_t seed = 0;
    /// Finite-difference step for the curvature estimate.
    double scg_sigma = 5e-5;
    /// Initial model-trust regularisation.
    double scg_lambda = 5e-7;
    /// Stop once the gradient norm falls below this.
    double min_gradient = 1e-6;
    /// Raw D-N entries saturate the sigmoid layer; map them onto [-1, 1] first.
    InputScaling scaling = InputScaling::MinMax;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double lambda = 0.0;
    bool accepted = false;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_validation_loss = 0.0;
    std::string stop_reason;
};

/// Tracks the best validation loss and signals a stop after `patience`
/// consecutive epochs without strict improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience);

    /// Returns true when the new loss is the best seen so far.
    bool observe(int epoch, double validation_loss);
    bool should_stop() const { return stale_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int stale_ = 0;
    int best_epoch_ = 0;
    double best_loss_;
};

struct LabeledData {
    Eigen::MatrixXd x;
    std::vector<int> labels;
};

struct TrainResult {
    MlpModel model;
    TrainHistory history;
};

/// Full-batch scaled conjugate gradient with early stopping on the
/// validation loss. Returns the best-validation snapshot. Labels may be any
/// integers; `class_labels` fixes the output order.
TrainResult train_scg(const LabeledData& train, const LabeledData& validation, std::span<const int> class_labels,
                      const TrainConfig& config);

nlohmann::json to_json(const MlpModel& model);
MlpModel mlp_from_json(const nlohmann::json& j);

}  // namespace eitml
