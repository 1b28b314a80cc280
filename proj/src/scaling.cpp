#include "eitml/scaling.hpp"

#include "eitml/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace eitml {

std::string_view scaling_name(InputScaling s) {
    switch (s) {
        case InputScaling::None: return "none";
        case InputScaling::MinMax: return "minmax";
        case InputScaling::ZScore: return "zscore";
    }
    return "none";
}

InputScaling parse_scaling(std::string_view name) {
    for (auto s : {InputScaling::None, InputScaling::MinMax, InputScaling::ZScore}) {
        if (scaling_name(s) == name) return s;
    }
    throw InvalidArgument(fmt::format("unknown input scaling '{}'", name));
}

FeatureScaler FeatureScaler::fit(const Eigen::MatrixXd& x, InputScaling kind) {
    FeatureScaler s;
    s.kind = kind;
    const Eigen::Index d = x.cols();
    s.offset = Eigen::RowVectorXd::Zero(d);
    s.gain = Eigen::RowVectorXd::Ones(d);
    if (kind == InputScaling::None || x.rows() == 0) return s;
    for (Eigen::Index j = 0; j < d; ++j) {
        if (kind == InputScaling::MinMax) {
            const double lo = x.col(j).minCoeff(), hi = x.col(j).maxCoeff();
            s.offset[j] = 0.5 * (lo + hi);
            s.gain[j] = hi > lo ? 2.0 / (hi - lo) : 0.0;
        } else {
            const double mean = x.col(j).mean();
            const double var = (x.col(j).array() - mean).square().sum() / std::max<Eigen::Index>(x.rows() - 1, 1);
            s.offset[j] = mean;
            s.gain[j] = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
        }
    }
    return s;
}

Eigen::MatrixXd FeatureScaler::apply(const Eigen::MatrixXd& x) const {
    if (kind == InputScaling::None) return x;
    if (x.cols() != offset.size()) throw InvalidArgument(fmt::format("scaler fitted on {} features applied to {}", offset.size(), x.cols()));
    return (x.rowwise() - offset).array().rowwise() * gain.array();
}

nlohmann::json to_json(const FeatureScaler& s) {
    return {{"kind", scaling_name(s.kind)},
            {"offset", std::vector<double>(s.offset.data(), s.offset.data() + s.offset.size())},
            {"gain", std::vector<double>(s.gain.data(), s.gain.data() + s.gain.size())}};
}

FeatureScaler scaler_from_json(const nlohmann::json& j, int dim) {
    FeatureScaler s;
    s.kind = parse_scaling(j.at("kind").get<std::string>());
    const auto offset = j.at("offset").get<std::vector<double>>();
    const auto gain = j.at("gain").get<std::vector<double>>();
    if (static_cast<int>(offset.size()) != dim || static_cast<int>(gain.size()) != dim) {
        throw ParseError(0, fmt::format("scaling vectors must have {} entries", dim));
    }
    s.offset = Eigen::Map<const Eigen::RowVectorXd>(offset.data(), dim);
    s.gain = Eigen::Map<const Eigen::RowVectorXd>(gain.data(), dim);
    return s;
}

}  // namespace eitml
