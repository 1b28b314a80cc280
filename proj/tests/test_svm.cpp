#include "eitml/error.hpp"
#include "eitml/svm.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace eitml;

namespace {

struct Toy {
    Eigen::MatrixXd x;
    std::vector<int> y;
};

// Two Gaussian clouds in the plane; `gap` is the distance between their means.
Toy clouds(int n, double gap, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Toy t;
    t.x.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        const int s = i % 2 == 0 ? 1 : -1;
        t.x(i, 0) = g(rng) + 0.5 * s * gap;
        t.x(i, 1) = g(rng);
        t.y.push_back(s);
    }
    return t;
}

std::vector<double> row(const Eigen::MatrixXd& m, Eigen::Index i) {
    std::vector<double> out(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[j] = m(i, j);
    return out;
}

// Margin conditions y f(x) against the multipliers, as stated for soft-margin SVMs.
void check_kkt(const SmoResult& r, const Toy& t, double c, double tol) {
    for (Eigen::Index i = 0; i < t.x.rows(); ++i) {
        const double yf = t.y[i] * r.model.decision(row(t.x, i));
        CAPTURE(i);
        CAPTURE(r.alpha[i]);
        if (r.alpha[i] == 0.0) CHECK(yf >= 1.0 - tol);
        else if (r.alpha[i] == c) CHECK(yf <= 1.0 + tol);
        else CHECK(std::abs(yf - 1.0) <= tol);
    }
}

}  // namespace

TEST_CASE("kernel values") {
    const std::vector<double> e1{1.0, 0.0}, e2{0.0, 1.0};
    CHECK(kernel(e1, e1, KernelKind::Quadratic) == 4.0);
    CHECK(kernel(e1, e2, KernelKind::Quadratic) == 1.0);
    CHECK(kernel(e1, e2, KernelKind::Linear) == 0.0);
    CHECK_THROWS_AS(kernel(e1, std::vector<double>{1.0}, KernelKind::Linear), InvalidArgument);
    CHECK(parse_kernel(kernel_name(KernelKind::Linear)) == KernelKind::Linear);
    CHECK_THROWS_AS(parse_kernel("rbf"), InvalidArgument);
}

TEST_CASE("quadratic kernel equals the explicit feature map") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t l = 1 + rng() % 10;
        std::vector<double> x(l), y(l);
        for (std::size_t i = 0; i < l; ++i) x[i] = g(rng), y[i] = g(rng);
        const auto px = quadratic_feature_map(x);
        const auto py = quadratic_feature_map(y);
        REQUIRE(px.size() == 2 * l + l * (l - 1) / 2);
        const double phi = std::inner_product(px.begin(), px.end(), py.begin(), 0.0);
        const double dot = std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
        worst = std::max(worst, std::abs(kernel(x, y, KernelKind::Quadratic) - (phi + dot + 1.0)));
    }
    CHECK(worst <= 1e-10);
    CHECK(quadratic_feature_map(std::vector<double>(5, 1.0)).size() == 20);
    CHECK(quadratic_feature_map(std::vector<double>(256, 1.0)).size() == 33152);
}

TEST_CASE("gram matrices are positive semidefinite") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 10; ++t) {
        const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(20, 4, [&] { return std::normal_distribution<double>(0.0, 2.0)(rng); });
        for (auto kind : {KernelKind::Linear, KernelKind::Quadratic}) {
            const Eigen::MatrixXd k = gram(x, x, kind);
            CHECK((k - k.transpose()).norm() == 0.0);
            const double scale = k.cwiseAbs().maxCoeff();
            CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff() >= -1e-8 * std::max(1.0, scale));
        }
    }
}

TEST_CASE("two-point hard margin") {
    Eigen::MatrixXd x(2, 2);
    x << 1, 0, -1, 0;
    SmoConfig cfg;
    cfg.kernel = KernelKind::Linear;
    cfg.c = 1e6;
    cfg.tolerance = 1e-9;
    const std::vector<int> y{1, -1};
    const SmoResult r = train_smo(x, y, cfg);
    // w = sum alpha_i y_i x_i
    const Eigen::Vector2d w = r.model.support_vectors.transpose() * r.model.coefficients;
    CHECK(w.x() == doctest::Approx(1.0));
    CHECK(w.y() == doctest::Approx(0.0));
    CHECK(r.model.bias == doctest::Approx(0.0).scale(1.0));
    CHECK(r.alpha[0] == doctest::Approx(0.5));
    CHECK(r.model.decision(std::vector<double>{2.0, 0.0}) == doctest::Approx(2.0));
    CHECK(r.model.classify(std::vector<double>{2.0, 0.0}) == 1);
    CHECK(r.model.decision(std::vector<double>{1.0, 0.0}) == doctest::Approx(1.0));
    CHECK(r.model.decision(std::vector<double>{-1.0, 0.0}) == doctest::Approx(-1.0));

    BinarySvm tie;
    tie.kernel = KernelKind::Linear;
    tie.support_vectors = Eigen::MatrixXd::Zero(1, 2);
    tie.coefficients = Eigen::VectorXd::Ones(1);
    CHECK(tie.decision(std::vector<double>{0.0, 0.0}) == 0.0);
    CHECK(tie.classify(std::vector<double>{0.0, 0.0}) == 1);
}

TEST_CASE("XOR needs the quadratic kernel") {
    Eigen::MatrixXd x(4, 2);
    x << 1, 1, -1, -1, 1, -1, -1, 1;
    const std::vector<int> y{1, 1, -1, -1};
    SmoConfig cfg;
    cfg.c = 10.0;
    const SmoResult r = train_smo(x, y, cfg);
    for (int i = 0; i < 4; ++i) CHECK(r.model.classify(row(x, i)) == y[i]);

    // No line separates XOR: the best linear model misclassifies a point.
    cfg.kernel = KernelKind::Linear;
    const SmoResult lin = train_smo(x, y, cfg);
    int ok = 0;
    for (int i = 0; i < 4; ++i) ok += lin.model.classify(row(x, i)) == y[i];
    CHECK(ok < 4);
}

TEST_CASE("KKT conditions and dual feasibility on random sets") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        const bool separable = t % 2 == 0;
        const Toy toy = clouds(30, separable ? 12.0 : 1.0, rng);
        SmoConfig cfg;
        cfg.kernel = t % 4 < 2 ? KernelKind::Linear : KernelKind::Quadratic;
        cfg.c = separable ? 100.0 : 1.0;
        cfg.record_objective = true;
        const SmoResult r = train_smo(toy.x, toy.y, cfg);
        CAPTURE(t);
        double balance = 0.0;
        for (int i = 0; i < 30; ++i) {
            CHECK(r.alpha[i] >= 0.0);
            CHECK(r.alpha[i] <= cfg.c);
            balance += r.alpha[i] * toy.y[i];
        }
        CHECK(std::abs(balance) <= 1e-8);
        check_kkt(r, toy, cfg.c, cfg.tolerance);
        for (std::size_t k = 1; k < r.objective.size(); ++k) CHECK(r.objective[k] >= r.objective[k - 1] - 1e-12 * std::abs(r.objective[k]));
        for (int i = 0; i < 30; ++i) {
            CHECK(r.training_decision[i] == doctest::Approx(r.model.decision(row(toy.x, i))).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("SMO preconditions and iteration cap") {
    Eigen::MatrixXd x(3, 1);
    x << 0, 1, 2;
    CHECK_THROWS_AS(train_smo(x, std::vector<int>{1, 1, 1}, {}), InvalidArgument);
    CHECK_THROWS_AS(train_smo(x, std::vector<int>{1, 0, -1}, {}), InvalidArgument);
    CHECK_THROWS_AS(train_smo(x, std::vector<int>{1, -1}, {}), InvalidArgument);
    SmoConfig bad;
    bad.c = 0.0;
    CHECK_THROWS_AS(train_smo(x, std::vector<int>{1, -1, 1}, bad), InvalidArgument);

    std::mt19937_64 rng(4);
    const Toy toy = clouds(40, 0.5, rng);
    SmoConfig capped;
    capped.max_iterations = 2;
    CHECK_THROWS_WITH_AS(train_smo(toy.x, toy.y, capped), doctest::Contains("violate KKT"), TrainingError);
}

TEST_CASE("one-vs-one voting") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    const double cx[4] = {0, 8, 0, 8}, cy[4] = {0, 0, 8, 8};
    Eigen::MatrixXd x(200, 2);
    std::vector<int> labels;
    for (int i = 0; i < 200; ++i) {
        const int c = i % 4;
        x(i, 0) = cx[c] + g(rng);
        x(i, 1) = cy[c] + g(rng);
        labels.push_back(c + 3);
    }
    SvmConfig cfg;
    const MulticlassSvm m = train_ovo(x, labels, cfg);
    CHECK(m.pairs.size() == 6);
    CHECK(m.labels == std::vector<int>{3, 4, 5, 6});
    const auto pred = m.predict(x);
    int ok = 0, centroid_agree = 0;
    for (int i = 0; i < 200; ++i) {
        ok += pred[i] == labels[i];
        int nearest = 0;
        for (int c = 1; c < 4; ++c) {
            if (std::hypot(x(i, 0) - cx[c], x(i, 1) - cy[c]) < std::hypot(x(i, 0) - cx[nearest], x(i, 1) - cy[nearest])) nearest = c;
        }
        centroid_agree += pred[i] == nearest + 3;
    }
    CHECK(ok >= 190);
    CHECK(centroid_agree >= 190);

    cfg.threads = 3;
    const MulticlassSvm par = train_ovo(x, labels, cfg);
    CHECK(to_json(par) == to_json(m));

    // Three classes with one vote each: the smallest label wins.
    MulticlassSvm cycle;
    cycle.labels = {1, 2, 3};
    cycle.scaler.offset = Eigen::RowVectorXd::Zero(1);
    cycle.scaler.gain = Eigen::RowVectorXd::Ones(1);
    auto constant = [](double f) {
        BinarySvm s;
        s.kernel = KernelKind::Linear;
        s.support_vectors = Eigen::MatrixXd::Zero(1, 1);
        s.coefficients = Eigen::VectorXd::Zero(1);
        s.bias = f;
        return s;
    };
    cycle.pairs = {{1, 2, constant(1.0)}, {1, 3, constant(-1.0)}, {2, 3, constant(1.0)}};
    CHECK(cycle.predict(std::vector<double>{0.0}) == 1);
    cycle.pairs = {{1, 2, constant(-1.0)}, {1, 3, constant(1.0)}, {2, 3, constant(-1.0)}};
    CHECK(cycle.predict(std::vector<double>{0.0}) == 1);
}

TEST_CASE("two classes reduce to the binary machine") {
    std::mt19937_64 rng(6);
    const Toy toy = clouds(40, 3.0, rng);
    std::vector<int> labels;
    for (int s : toy.y) labels.push_back(s == 1 ? 1 : 2);
    const MulticlassSvm m = train_ovo(toy.x, labels, {});
    REQUIRE(m.pairs.size() == 1);
    const SmoResult b = train_smo(toy.x, toy.y, {});
    for (int i = 0; i < 40; ++i) CHECK(m.predict(row(toy.x, i)) == (b.model.classify(row(toy.x, i)) == 1 ? 1 : 2));
}

TEST_CASE("training order does not change accuracy") {
    std::mt19937_64 rng(7);
    const Toy train = clouds(60, 3.0, rng), test = clouds(60, 3.0, rng);
    std::vector<int> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Toy shuffled;
    shuffled.x.resize(60, 2);
    for (int i = 0; i < 60; ++i) shuffled.x.row(i) = train.x.row(perm[i]), shuffled.y.push_back(train.y[perm[i]]);
    auto accuracy = [](const BinarySvm& m, const Toy& t) {
        int ok = 0;
        for (Eigen::Index i = 0; i < t.x.rows(); ++i) ok += m.classify(row(t.x, i)) == t.y[i];
        return ok;
    };
    SmoConfig cfg;
    cfg.tolerance = 1e-8;
    const SmoResult a = train_smo(train.x, train.y, cfg);
    const SmoResult b = train_smo(shuffled.x, shuffled.y, cfg);
    CHECK(accuracy(a.model, test) == accuracy(b.model, test));
    CHECK(accuracy(a.model, train) == accuracy(b.model, train));
}

TEST_CASE("multiclass preconditions") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 2);
    CHECK_THROWS_AS(train_ovo(x, std::vector<int>{1, 1, 1, 1, 1}, {}), InvalidArgument);
    CHECK_THROWS_WITH_AS(train_ovo(x, std::vector<int>{1, 1, 2, 2, 3}, {}), doctest::Contains("class 3"), InvalidArgument);
    CHECK_THROWS_AS(train_ovo(x, std::vector<int>{1, 2}, {}), InvalidArgument);
}

TEST_CASE("standardised inputs and json round trip") {
    std::mt19937_64 rng(8);
    Toy toy = clouds(40, 4.0, rng);
    toy.x.col(0) *= 1e3;
    std::vector<int> labels;
    for (int s : toy.y) labels.push_back(s == 1 ? 7 : 9);
    SvmConfig cfg;
    cfg.scaling = InputScaling::ZScore;
    const MulticlassSvm m = train_ovo(toy.x, labels, cfg);
    CHECK(m.scaler.kind == InputScaling::ZScore);
    const MulticlassSvm back = svm_from_json(nlohmann::json::parse(to_json(m).dump()));
    CHECK(back.predict(toy.x) == m.predict(toy.x));
    CHECK(to_json(back) == to_json(m));

    nlohmann::json bad = to_json(m);
    bad["pairs"] = nlohmann::json::array();
    CHECK_THROWS_AS(svm_from_json(bad), ParseError);
    bad = to_json(m);
    bad["kind"] = "mlp";
    CHECK_THROWS_AS(svm_from_json(bad), ParseError);
}
