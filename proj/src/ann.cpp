#include "eitml/ann.hpp"

#include "eitml/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace eitml {

namespace {

constexpr double kLogFloor = 1e-300;

struct Activations {
    Eigen::MatrixXd hidden;
    Eigen::MatrixXd prob;
};

Activations forward_scaled(const MlpModel& m, const Eigen::MatrixXd& x) {
    Activations a;
    a.hidden = (x * m.w1()).rowwise() + m.b1().transpose();
    a.hidden = a.hidden.unaryExpr([](double z) { return sigmoid(z); });
    Eigen::MatrixXd z = (a.hidden * m.w2()).rowwise() + m.b2().transpose();
    const Eigen::VectorXd top = z.rowwise().maxCoeff();
    z = (z.colwise() - top).array().exp().matrix();
    const Eigen::VectorXd total = z.rowwise().sum();
    a.prob = z.array().colwise() / total.array();
    return a;
}

double mean_cross_entropy(const Eigen::MatrixXd& prob, const std::vector<int>& target) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < prob.rows(); ++i) sum -= std::log(std::max(prob(i, target[i]), kLogFloor));
    return sum / static_cast<double>(prob.rows());
}

void check_batch(const MlpModel& m, const Batch& b) {
    if (b.x.rows() == 0) throw InvalidArgument("empty batch");
    if (b.x.cols() != m.input_dim()) {
        throw InvalidArgument(fmt::format("batch has {} features, model expects {}", b.x.cols(), m.input_dim()));
    }
    if (static_cast<Eigen::Index>(b.target.size()) != b.x.rows()) throw InvalidArgument("batch target count mismatch");
    for (int t : b.target) {
        if (t < 0 || t >= m.classes()) throw InvalidArgument(fmt::format("target index {} out of range", t));
    }
}

Batch make_batch(const LabeledData& data, const MlpModel& model, const std::map<int, int>& index) {
    Batch b;
    b.x = model.scaler.apply(data.x);
    b.target.reserve(data.labels.size());
    for (int label : data.labels) {
        auto it = index.find(label);
        if (it == index.end()) throw InvalidArgument(fmt::format("label {} is not among the model classes", label));
        b.target.push_back(it->second);
    }
    return b;
}

std::vector<double> row_major(const Eigen::MatrixXd& m) {
    std::vector<double> out;
    out.reserve(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    }
    return out;
}

void fill_row_major(Eigen::Map<Eigen::MatrixXd> m, const std::vector<double>& v, const char* name) {
    if (static_cast<Eigen::Index>(v.size()) != m.size()) throw ParseError(0, fmt::format("{} has {} values, expected {}", name, v.size(), m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = v[i * m.cols() + j];
    }
}

}  // namespace

MlpModel::MlpModel(int input_dim, int classes, int hidden) : input_dim_(input_dim), hidden_(hidden), classes_(classes) {
    if (input_dim < 1 || classes < 2 || hidden < 1) {
        throw InvalidArgument(fmt::format("invalid network shape d={}, hidden={}, n={}", input_dim, hidden, classes));
    }
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(input_dim) * hidden + hidden + hidden * classes + classes);
    for (int k = 1; k <= classes; ++k) labels.push_back(k);
    scaler.offset = Eigen::RowVectorXd::Zero(input_dim);
    scaler.gain = Eigen::RowVectorXd::Ones(input_dim);
}

Eigen::Map<const Eigen::MatrixXd> MlpModel::w1() const { return {params_.data(), input_dim_, hidden_}; }
Eigen::Map<const Eigen::VectorXd> MlpModel::b1() const { return {params_.data() + input_dim_ * hidden_, hidden_}; }
Eigen::Map<const Eigen::MatrixXd> MlpModel::w2() const { return {params_.data() + (input_dim_ + 1) * hidden_, hidden_, classes_}; }
Eigen::Map<const Eigen::VectorXd> MlpModel::b2() const {
    return {params_.data() + (input_dim_ + 1) * hidden_ + hidden_ * classes_, classes_};
}
Eigen::Map<Eigen::MatrixXd> MlpModel::w1() { return {params_.data(), input_dim_, hidden_}; }
Eigen::Map<Eigen::VectorXd> MlpModel::b1() { return {params_.data() + input_dim_ * hidden_, hidden_}; }
Eigen::Map<Eigen::MatrixXd> MlpModel::w2() { return {params_.data() + (input_dim_ + 1) * hidden_, hidden_, classes_}; }
Eigen::Map<Eigen::VectorXd> MlpModel::b2() { return {params_.data() + (input_dim_ + 1) * hidden_ + hidden_ * classes_, classes_}; }

void MlpModel::initialize(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1217u};
    std::mt19937_64 rng(seq);
    params_.setZero();
    const double a1 = std::sqrt(6.0 / (input_dim_ + hidden_));
    const double a2 = std::sqrt(6.0 / (hidden_ + classes_));
    std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
    auto w1m = w1();
    for (Eigen::Index j = 0; j < w1m.cols(); ++j) {
        for (Eigen::Index i = 0; i < w1m.rows(); ++i) w1m(i, j) = u1(rng);
    }
    auto w2m = w2();
    for (Eigen::Index j = 0; j < w2m.cols(); ++j) {
        for (Eigen::Index i = 0; i < w2m.rows(); ++i) w2m(i, j) = u2(rng);
    }
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& x) {
    if (x.cols() != model.input_dim()) {
        throw InvalidArgument(fmt::format("input has {} features, model expects {}", x.cols(), model.input_dim()));
    }
    return forward_scaled(model, model.scaler.apply(x)).prob;
}

Eigen::VectorXd forward_pass(const MlpModel& model, std::span<const double> x) {
    const Eigen::MatrixXd row = Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    return forward_batch(model, row).row(0).transpose();
}

int argmax_with_ties(const Eigen::VectorXd& p, std::mt19937_64& rng) {
    const double top = p.maxCoeff();
    std::vector<int> best;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (p[k] == top) best.push_back(static_cast<int>(k));
    }
    if (best.size() == 1) return best.front();
    return best[std::uniform_int_distribution<std::size_t>(0, best.size() - 1)(rng)];
}

int predict(const MlpModel& model, std::span<const double> x, std::mt19937_64& rng) {
    return model.labels.at(argmax_with_ties(forward_pass(model, x), rng));
}

std::vector<int> predict_batch(const MlpModel& model, const Eigen::MatrixXd& x, std::uint64_t tie_seed) {
    std::mt19937_64 rng(tie_seed);
    const Eigen::MatrixXd p = forward_batch(model, x);
    std::vector<int> out;
    out.reserve(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) out.push_back(model.labels.at(argmax_with_ties(p.row(i).transpose(), rng)));
    return out;
}

double loss(const MlpModel& model, const Batch& batch) {
    check_batch(model, batch);
    return mean_cross_entropy(forward_scaled(model, batch.x).prob, batch.target);
}

Eigen::VectorXd gradient(const MlpModel& model, const Batch& batch, double* loss_out) {
    check_batch(model, batch);
    const Activations a = forward_scaled(model, batch.x);
    if (loss_out) *loss_out = mean_cross_entropy(a.prob, batch.target);
    const double inv_n = 1.0 / static_cast<double>(batch.x.rows());
    Eigen::MatrixXd dz2 = a.prob;
    for (Eigen::Index i = 0; i < dz2.rows(); ++i) dz2(i, batch.target[i]) -= 1.0;
    dz2 *= inv_n;
    const Eigen::MatrixXd dz1 = ((dz2 * model.w2().transpose()).array() * a.hidden.array() * (1.0 - a.hidden.array())).matrix();

    MlpModel g(model.input_dim(), model.classes(), model.hidden());
    g.w1() = batch.x.transpose() * dz1;
    g.b1() = dz1.colwise().sum().transpose();
    g.w2() = a.hidden.transpose() * dz2;
    g.b2() = dz2.colwise().sum().transpose();
    const std::pair<const char*, bool> blocks[] = {{"W1", g.w1().allFinite()},
                                                   {"B1", g.b1().allFinite()},
                                                   {"W2", g.w2().allFinite()},
                                                   {"B2", g.b2().allFinite()}};
    for (const auto& [name, ok] : blocks) {
        if (!ok) throw TrainingError(fmt::format("non-finite gradient in parameter block {}", name));
    }
    return g.parameters();
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
    if (patience < 1) throw InvalidArgument(fmt::format("patience must be >= 1, got {}", patience));
}

bool EarlyStopper::observe(int epoch, double validation_loss) {
    if (validation_loss < best_loss_) {
        best_loss_ = validation_loss;
        best_epoch_ = epoch;
        stale_ = 0;
        return true;
    }
    ++stale_;
    return false;
}

TrainResult train_scg(const LabeledData& train, const LabeledData& validation, std::span<const int> class_labels,
                      const TrainConfig& cfg) {
    if (cfg.max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
    if (train.x.rows() == 0 || validation.x.rows() == 0) throw InvalidArgument("training and validation sets must be non-empty");
    if (train.x.cols() != validation.x.cols()) throw InvalidArgument("training and validation feature counts differ");
    std::map<int, int> index;
    for (std::size_t k = 0; k < class_labels.size(); ++k) index[class_labels[k]] = static_cast<int>(k);

    TrainResult result;
    MlpModel& model = result.model;
    model = MlpModel(static_cast<int>(train.x.cols()), static_cast<int>(class_labels.size()));
    model.labels.assign(class_labels.begin(), class_labels.end());
    model.scaler = FeatureScaler::fit(train.x, cfg.scaling);
    model.initialize(cfg.seed);
    const Batch tb = make_batch(train, model, index);
    const Batch vb = make_batch(validation, model, index);

    EarlyStopper stopper(cfg.patience);
    auto& hist = result.history;
    Eigen::VectorXd& w = model.parameters();
    MlpModel probe = model;
    auto eval = [&](const Eigen::VectorXd& at, double* e) {
        probe.parameters() = at;
        return gradient(probe, tb, e);
    };

    double err = 0.0;
    Eigen::VectorXd g = eval(w, &err);
    Eigen::VectorXd r = -g;
    Eigen::VectorXd p = r;
    Eigen::VectorXd best = w;
    double lambda = cfg.scg_lambda, lambda_bar = 0.0, delta = 0.0;
    bool success = true;
    const Eigen::Index n_params = w.size();
    hist.stop_reason = "max_epochs";

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double p2 = p.squaredNorm();
        if (p2 == 0.0) {
            hist.stop_reason = "zero_direction";
            break;
        }
        if (success) {
            const double step = cfg.scg_sigma / std::sqrt(p2);
            const Eigen::VectorXd gs = eval(w + step * p, nullptr);
            delta = p.dot(gs - g) / step;
        }
        delta += (lambda - lambda_bar) * p2;
        if (delta <= 0.0) {
            lambda_bar = 2.0 * (lambda - delta / p2);
            delta = -delta + lambda * p2;
            lambda = lambda_bar;
        }
        const double mu = p.dot(r);
        const double alpha = mu / delta;
        double err_new = 0.0;
        const Eigen::VectorXd w_new = w + alpha * p;
        const Eigen::VectorXd g_new = eval(w_new, &err_new);
        if (!std::isfinite(err_new)) throw TrainingError(fmt::format("non-finite training loss at epoch {}", epoch));
        const double comparison = 2.0 * delta * (err - err_new) / (mu * mu);
        const bool accepted = comparison >= 0.0;
        if (accepted) {
            w = w_new;
            err = err_new;
            g = g_new;
            const Eigen::VectorXd r_new = -g;
            lambda_bar = 0.0;
            success = true;
            if (epoch % n_params == 0) {
                p = r_new;
            } else {
                const double beta = (r_new.squaredNorm() - r_new.dot(r)) / mu;
                p = r_new + beta * p;
            }
            r = r_new;
            if (comparison >= 0.75) lambda *= 0.25;
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if (comparison < 0.25) lambda += delta * (1.0 - comparison) / p2;
        lambda = std::clamp(lambda, 1e-15, 1e100);

        probe.parameters() = w;
        const double val = loss(probe, vb);
        if (!std::isfinite(val)) throw TrainingError(fmt::format("non-finite validation loss at epoch {}", epoch));
        hist.epochs.push_back({epoch, err, val, lambda, accepted});
        if (stopper.observe(epoch, val)) best = w;
        if (stopper.should_stop()) {
            hist.stop_reason = "validation_patience";
            break;
        }
        if (g.norm() < cfg.min_gradient) {
            hist.stop_reason = "min_gradient";
            break;
        }
    }
    w = best;
    hist.best_epoch = stopper.best_epoch();
    hist.best_validation_loss = stopper.best_loss();
    return result;
}

nlohmann::json to_json(const MlpModel& m) {
    return {{"kind", "mlp"},
            {"input_dim", m.input_dim()},
            {"hidden", m.hidden()},
            {"classes", m.classes()},
            {"labels", m.labels},
            {"scaling", to_json(m.scaler)},
            {"W1", row_major(m.w1())},
            {"B1", std::vector<double>(m.b1().data(), m.b1().data() + m.hidden())},
            {"W2", row_major(m.w2())},
            {"B2", std::vector<double>(m.b2().data(), m.b2().data() + m.classes())}};
}

MlpModel mlp_from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "mlp") throw ParseError(0, "model JSON is not an mlp model");
    MlpModel m(j.at("input_dim").get<int>(), j.at("classes").get<int>(), j.at("hidden").get<int>());
    m.labels = j.at("labels").get<std::vector<int>>();
    m.scaler = scaler_from_json(j.at("scaling"), m.input_dim());
    fill_row_major(m.w1(), j.at("W1").get<std::vector<double>>(), "W1");
    fill_row_major(m.w2(), j.at("W2").get<std::vector<double>>(), "W2");
    const auto b1 = j.at("B1").get<std::vector<double>>();
    const auto b2 = j.at("B2").get<std::vector<double>>();
    if (static_cast<int>(b1.size()) != m.hidden() || static_cast<int>(b2.size()) != m.classes()) {
        throw ParseError(0, "bias vectors do not match the network shape");
    }
    m.b1() = Eigen::Map<const Eigen::VectorXd>(b1.data(), m.hidden());
    m.b2() = Eigen::Map<const Eigen::VectorXd>(b2.data(), m.classes());
    if (!m.parameters().allFinite()) throw ParseError(0, "model parameters must be finite");
    return m;
}

}  // namespace eitml
