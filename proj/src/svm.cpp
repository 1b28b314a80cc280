#include "eitml/svm.hpp"

#include "eitml/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

namespace eitml {

namespace {

constexpr double kTinyCurvature = 1e-12;

std::vector<double> row_major(const Eigen::MatrixXd& m) {
    std::vector<double> out;
    out.reserve(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    }
    return out;
}

Eigen::MatrixXd from_rows(const nlohmann::json& rows, Eigen::Index cols) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const auto r = rows[i].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(r.size()) != cols) throw ParseError(0, fmt::format("support vector {} has {} entries, expected {}", i, r.size(), cols));
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r[j];
    }
    return m;
}

}  // namespace

std::string_view kernel_name(KernelKind k) { return k == KernelKind::Linear ? "linear" : "quadratic"; }

KernelKind parse_kernel(std::string_view name) {
    if (name == "linear") return KernelKind::Linear;
    if (name == "quadratic") return KernelKind::Quadratic;
    throw InvalidArgument(fmt::format("unknown kernel '{}'", name));
}

double kernel(std::span<const double> x, std::span<const double> y, KernelKind kind) {
    if (x.size() != y.size()) throw InvalidArgument(fmt::format("kernel arguments have lengths {} and {}", x.size(), y.size()));
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
    return kind == KernelKind::Linear ? dot : (dot + 1.0) * (dot + 1.0);
}

std::vector<double> quadratic_feature_map(std::span<const double> x) {
    const std::size_t l = x.size();
    std::vector<double> phi(x.begin(), x.end());
    phi.reserve(2 * l + l * (l - 1) / 2);
    for (double v : x) phi.push_back(v * v);
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = i + 1; j < l; ++j) phi.push_back(std::sqrt(2.0) * x[i] * x[j]);
    }
    return phi;
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, KernelKind kind) {
    if (a.cols() != b.cols()) throw InvalidArgument(fmt::format("gram operands have {} and {} features", a.cols(), b.cols()));
    Eigen::MatrixXd k = a * b.transpose();
    if (kind == KernelKind::Quadratic) k = (k.array() + 1.0).square().matrix();
    return k;
}

double BinarySvm::decision(std::span<const double> x) const {
    const Eigen::Map<const Eigen::RowVectorXd> row(x.data(), static_cast<Eigen::Index>(x.size()));
    return decision(Eigen::MatrixXd(row))[0];
}

Eigen::VectorXd BinarySvm::decision(const Eigen::MatrixXd& x) const {
    if (x.cols() != support_vectors.cols()) {
        throw InvalidArgument(fmt::format("input has {} features, model expects {}", x.cols(), support_vectors.cols()));
    }
    return (gram(x, support_vectors, kernel) * coefficients).array() + bias;
}

int BinarySvm::classify(std::span<const double> x) const { return decision(x) >= 0.0 ? 1 : -1; }

SmoResult train_smo(const Eigen::MatrixXd& x, std::span<const int> y, const SmoConfig& cfg) {
    const Eigen::Index n = x.rows();
    if (static_cast<Eigen::Index>(y.size()) != n) throw InvalidArgument(fmt::format("{} points but {} labels", n, y.size()));
    if (!(cfg.c > 0.0)) throw InvalidArgument(fmt::format("C must be positive, got {}", cfg.c));
    bool pos = false, neg = false;
    for (int v : y) {
        if (v != 1 && v != -1) throw InvalidArgument(fmt::format("binary labels must be +1 or -1, got {}", v));
        (v == 1 ? pos : neg) = true;
    }
    if (!pos || !neg) throw InvalidArgument("training set must contain both classes");

    const double c = cfg.c;
    const Eigen::MatrixXd k = gram(x, x, cfg.kernel);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    // Gradient of 1/2 a'Qa - e'a with Q_ij = y_i y_j K_ij.
    Eigen::VectorXd g = -Eigen::VectorXd::Ones(n);
    const long cap = cfg.max_iterations > 0 ? cfg.max_iterations : std::max(10L * n * n, 1000000L);

    SmoResult res;
    auto in_up = [&](Eigen::Index t) { return y[t] == 1 ? alpha[t] < c : alpha[t] > 0.0; };
    auto in_low = [&](Eigen::Index t) { return y[t] == 1 ? alpha[t] > 0.0 : alpha[t] < c; };
    double m_up = 0.0, m_low = 0.0;
    for (;;) {
        Eigen::Index i = -1, j = -1;
        m_up = -std::numeric_limits<double>::infinity();
        m_low = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t < n; ++t) {
            const double v = -y[t] * g[t];
            if (in_up(t) && v > m_up) m_up = v, i = t;
            if (in_low(t) && v < m_low) m_low = v, j = t;
        }
        if (i < 0 || j < 0 || m_up - m_low < cfg.tolerance) break;
        if (res.iterations >= cap) {
            long violations = 0;
            for (Eigen::Index t = 0; t < n; ++t) {
                const double v = -y[t] * g[t];
                if ((in_up(t) && v - m_low >= cfg.tolerance) || (in_low(t) && m_up - v >= cfg.tolerance)) ++violations;
            }
            throw TrainingError(fmt::format("SMO did not converge after {} updates: {} points violate KKT (gap {:.3g})",
                                            res.iterations, violations, m_up - m_low));
        }
        const double eta = std::max(k(i, i) + k(j, j) - 2.0 * k(i, j), kTinyCurvature);
        double step = (m_up - m_low) / eta;
        const double room_i = y[i] == 1 ? c - alpha[i] : alpha[i];
        const double room_j = y[j] == 1 ? alpha[j] : c - alpha[j];
        bool hit_i = false, hit_j = false;
        if (step >= room_i) step = room_i, hit_i = true;
        if (step >= room_j) step = room_j, hit_j = true, hit_i = hit_i && room_i == room_j;
        alpha[i] += y[i] * step;
        alpha[j] -= y[j] * step;
        if (hit_i) alpha[i] = y[i] == 1 ? c : 0.0;
        if (hit_j) alpha[j] = y[j] == 1 ? 0.0 : c;
        g += (step * (k.col(i) - k.col(j))).cwiseProduct(Eigen::Map<const Eigen::VectorXi>(y.data(), n).cast<double>());
        ++res.iterations;
        if (cfg.record_objective) res.objective.push_back(-0.5 * alpha.dot(g - Eigen::VectorXd::Ones(n)));
    }

    double free_sum = 0.0;
    int free_count = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        if (alpha[t] > 0.0 && alpha[t] < c) free_sum += -y[t] * g[t], ++free_count;
    }
    const double bias = free_count > 0 ? free_sum / free_count : 0.5 * (m_up + m_low);

    std::vector<Eigen::Index> sv;
    for (Eigen::Index t = 0; t < n; ++t) {
        if (alpha[t] > 0.0) sv.push_back(t);
    }
    BinarySvm& m = res.model;
    m.kernel = cfg.kernel;
    m.bias = bias;
    m.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
    m.coefficients.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t s = 0; s < sv.size(); ++s) {
        m.support_vectors.row(s) = x.row(sv[s]);
        m.coefficients[s] = alpha[sv[s]] * y[sv[s]];
    }
    res.training_decision.resize(n);
    for (Eigen::Index t = 0; t < n; ++t) res.training_decision[t] = y[t] * (g[t] + 1.0) + bias;
    res.alpha = std::move(alpha);
    return res;
}

int MulticlassSvm::predict(std::span<const double> x) const {
    const Eigen::Map<const Eigen::RowVectorXd> row(x.data(), static_cast<Eigen::Index>(x.size()));
    return predict(Eigen::MatrixXd(row)).front();
}

std::vector<int> MulticlassSvm::predict(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd z = scaler.apply(x);
    std::map<int, int> slot;
    for (std::size_t k = 0; k < labels.size(); ++k) slot[labels[k]] = static_cast<int>(k);
    Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(x.rows(), static_cast<Eigen::Index>(labels.size()));
    for (const auto& p : pairs) {
        const Eigen::VectorXd f = p.svm.decision(z);
        for (Eigen::Index r = 0; r < x.rows(); ++r) ++votes(r, slot.at(f[r] >= 0.0 ? p.positive : p.negative));
    }
    // labels are sorted, so the first maximum is the smallest tied label.
    std::vector<int> out;
    out.reserve(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Eigen::Index best = 0;
        votes.row(r).maxCoeff(&best);
        out.push_back(labels[best]);
    }
    return out;
}

MulticlassSvm train_ovo(const Eigen::MatrixXd& x, std::span<const int> labels, const SvmConfig& cfg) {
    if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
        throw InvalidArgument(fmt::format("{} points but {} labels", x.rows(), labels.size()));
    }
    std::map<int, std::vector<Eigen::Index>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Eigen::Index>(i));
    if (members.size() < 2) throw InvalidArgument("at least two classes are required");
    for (const auto& [label, idx] : members) {
        if (idx.size() < 2) throw InvalidArgument(fmt::format("class {} has {} points, at least 2 required", label, idx.size()));
    }

    MulticlassSvm model;
    model.c = cfg.smo.c;
    for (const auto& entry : members) model.labels.push_back(entry.first);
    model.scaler = FeatureScaler::fit(x, cfg.scaling);
    const Eigen::MatrixXd z = model.scaler.apply(x);
    for (std::size_t a = 0; a < model.labels.size(); ++a) {
        for (std::size_t b = a + 1; b < model.labels.size(); ++b) model.pairs.push_back({model.labels[a], model.labels[b], {}});
    }

    auto train_pair = [&](PairModel& p) {
        const auto& pi = members.at(p.positive);
        const auto& ni = members.at(p.negative);
        Eigen::MatrixXd px(static_cast<Eigen::Index>(pi.size() + ni.size()), z.cols());
        std::vector<int> py;
        py.reserve(pi.size() + ni.size());
        Eigen::Index r = 0;
        // Points keep their original relative order.
        std::vector<std::pair<Eigen::Index, int>> rows;
        for (auto i : pi) rows.emplace_back(i, 1);
        for (auto i : ni) rows.emplace_back(i, -1);
        std::sort(rows.begin(), rows.end());
        for (const auto& [i, s] : rows) px.row(r++) = z.row(i), py.push_back(s);
        p.svm = train_smo(px, py, cfg.smo).model;
    };

    const std::size_t n_pairs = model.pairs.size();
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(cfg.threads, 1)), 1, n_pairs);
    if (workers == 1) {
        for (auto& p : model.pairs) train_pair(p);
        return model;
    }
    std::vector<std::exception_ptr> errors(n_pairs);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t k = w; k < n_pairs; k += workers) {
                try {
                    train_pair(model.pairs[k]);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return model;
}

nlohmann::json to_json(const MulticlassSvm& m) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : m.pairs) {
        nlohmann::json sv = nlohmann::json::array();
        for (Eigen::Index i = 0; i < p.svm.support_vectors.rows(); ++i) {
            sv.push_back(row_major(p.svm.support_vectors.row(i)));
        }
        pairs.push_back({{"positive", p.positive},
                         {"negative", p.negative},
                         {"bias", p.svm.bias},
                         {"coefficients", std::vector<double>(p.svm.coefficients.data(), p.svm.coefficients.data() + p.svm.coefficients.size())},
                         {"support_vectors", std::move(sv)}});
    }
    const KernelKind kind = m.pairs.empty() ? KernelKind::Quadratic : m.pairs.front().svm.kernel;
    return {{"kind", "svm"},
            {"kernel", kernel_name(kind)},
            {"C", m.c},
            {"input_dim", m.scaler.offset.size()},
            {"labels", m.labels},
            {"scaling", to_json(m.scaler)},
            {"pairs", std::move(pairs)}};
}

MulticlassSvm svm_from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "svm") throw ParseError(0, "model JSON is not an svm model");
    MulticlassSvm m;
    const KernelKind kind = parse_kernel(j.at("kernel").get<std::string>());
    const int dim = j.at("input_dim").get<int>();
    m.c = j.at("C").get<double>();
    m.labels = j.at("labels").get<std::vector<int>>();
    if (!std::is_sorted(m.labels.begin(), m.labels.end())) throw ParseError(0, "svm labels must be sorted");
    m.scaler = scaler_from_json(j.at("scaling"), dim);
    for (const auto& p : j.at("pairs")) {
        PairModel pm;
        pm.positive = p.at("positive").get<int>();
        pm.negative = p.at("negative").get<int>();
        pm.svm.kernel = kind;
        pm.svm.bias = p.at("bias").get<double>();
        const auto coef = p.at("coefficients").get<std::vector<double>>();
        pm.svm.coefficients = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
        pm.svm.support_vectors = from_rows(p.at("support_vectors"), dim);
        if (pm.svm.support_vectors.rows() != pm.svm.coefficients.size()) {
            throw ParseError(0, fmt::format("pair {}/{} has mismatched support vectors", pm.positive, pm.negative));
        }
        m.pairs.push_back(std::move(pm));
    }
    const std::size_t n = m.labels.size();
    if (m.pairs.size() != n * (n - 1) / 2) throw ParseError(0, fmt::format("{} classes need {} pairs, found {}", n, n * (n - 1) / 2, m.pairs.size()));
    return m;
}

}  // namespace eitml
