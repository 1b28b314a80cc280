#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <string_view>

namespace eitml {

enum class InputScaling {
    None,
    /// Per-feature affine map of the training range onto [-1, 1]; constant
    /// features map to 0.
    MinMax,
    /// Per-feature zero mean, unit variance.
    ZScore,
};

std::string_view scaling_name(InputScaling s);
InputScaling parse_scaling(std::string_view name);

/// Per-feature affine preprocessing fitted on training data.
struct FeatureScaler {
    InputScaling kind = InputScaling::None;
    Eigen::RowVectorXd offset;
    Eigen::RowVectorXd gain;

    static FeatureScaler fit(const Eigen::MatrixXd& x, InputScaling kind);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

nlohmann::json to_json(const FeatureScaler& s);
/// Throws ParseError unless both vectors have `dim` entries.
FeatureScaler scaler_from_json(const nlohmann::json& j, int dim);

}  // namespace eitml
