#include "eitml/error.hpp"
#include "eitml/forward.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <random>

using namespace eitml;

namespace {

constexpr double kPi = std::numbers::pi;

const TriMesh& default_mesh() {
    static const TriMesh mesh = generate_disk_mesh(kTankRadius, kDefaultMaxEdge, 0);
    return mesh;
}

ConductivitySpec homogeneous(double gamma) {
    ConductivitySpec spec;
    spec.tank = TensorSpec::iso(gamma);
    return spec;
}

Eigen::VectorXd boundary_data(const TriMesh& mesh, auto&& f) {
    Eigen::VectorXd v(mesh.boundary_nodes.size());
    for (std::size_t k = 0; k < mesh.boundary_nodes.size(); ++k) v[k] = f(mesh.boundary_angle(k));
    return v;
}

// Cotangent-formula Laplace stiffness of one triangle.
Eigen::Matrix3d cotangent_stiffness(const std::array<Point, 3>& p) {
    Eigen::Matrix3d k = Eigen::Matrix3d::Zero();
    for (int i = 0; i < 3; ++i) {
        const Point& a = p[(i + 1) % 3];
        const Point& b = p[(i + 2) % 3];
        const Point u = a - p[i], v = b - p[i];
        const double cot = u.dot(v) / std::abs(u.x() * v.y() - u.y() * v.x());
        // Angle at vertex i couples the opposite pair.
        const int j = (i + 1) % 3, l = (i + 2) % 3;
        k(j, l) -= 0.5 * cot;
        k(l, j) -= 0.5 * cot;
    }
    for (int i = 0; i < 3; ++i) k(i, i) = -(k.row(i).sum() - k(i, i));
    return k;
}

}  // namespace

TEST_CASE("element stiffness matches the cotangent formula") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> coord(-1.0, 1.0);
    int done = 0;
    while (done < 5) {
        std::array<Point, 3> p{Point(coord(rng), coord(rng)), Point(coord(rng), coord(rng)), Point(coord(rng), coord(rng))};
        const double area2 = (p[1] - p[0]).x() * (p[2] - p[0]).y() - (p[1] - p[0]).y() * (p[2] - p[0]).x();
        if (std::abs(area2) < 0.1) continue;
        if (area2 < 0) std::swap(p[1], p[2]);
        TriMesh m;
        m.vertices = {p[0], p[1], p[2]};
        m.triangles = {{0, 1, 2}};
        ConductivitySpec spec = homogeneous(1.0);
        spec.tank_radius = 10.0;
        const FemSystem sys = assemble_stiffness(m, spec);
        const Eigen::Matrix3d dense = Eigen::MatrixXd(sys.stiffness);
        CHECK((dense - cotangent_stiffness(p)).cwiseAbs().maxCoeff() <= 1e-12 * cotangent_stiffness(p).norm());
        ++done;
    }
}

TEST_CASE("stiffness kernel, symmetry and linearity") {
    const auto& mesh = default_mesh();
    const auto spec = sample_scenario(Task::DiagVsOffdiag, 2, 3);
    const FemSystem sys = assemble_stiffness(mesh, spec);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.vertex_count());
    CHECK((sys.stiffness * ones).cwiseAbs().maxCoeff() <= 1e-12 * sys.stiffness.coeffs().cwiseAbs().maxCoeff());
    const Eigen::SparseMatrix<double> t = sys.stiffness.transpose();
    CHECK((sys.stiffness - t).norm() <= 1e-14 * sys.stiffness.norm());

    const FemSystem one = assemble_stiffness(mesh, homogeneous(1.0));
    const FemSystem two = assemble_stiffness(mesh, homogeneous(2.0));
    CHECK((two.stiffness - 2.0 * one.stiffness).norm() <= 1e-14 * two.stiffness.norm());
}

TEST_CASE("reduced stiffness is positive definite") {
    const TriMesh mesh = generate_disk_mesh(kTankRadius, 0.03, 1);
    REQUIRE(mesh.vertex_count() <= 500);
    for (const auto& spec : {homogeneous(1.45), sample_scenario(Task::IsoVsSpatial, 2, 8, 4)}) {
        const FemSystem sys = assemble_stiffness(mesh, spec);
        Eigen::MatrixXd reduced(sys.interior_count, sys.interior_count);
        const Eigen::MatrixXd full = Eigen::MatrixXd(sys.stiffness);
        for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
            for (std::size_t j = 0; j < mesh.vertex_count(); ++j) {
                const int a = sys.interior_index[i], b = sys.interior_index[j];
                if (a >= 0 && b >= 0) reduced(a, b) = full(i, j);
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(reduced);
        CHECK(eig.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("degenerate element is reported with its id") {
    TriMesh m;
    m.vertices = {Point(0, 0), Point(1e-8, 0), Point(0, 1e-8), Point(0.1, 0)};
    m.triangles = {{0, 3, 2}, {0, 1, 2}};
    try {
        assemble_stiffness(m, homogeneous(1.0));
        FAIL("expected DegenerateElement");
    } catch (const DegenerateElement& e) {
        CHECK(e.element() == 1);
    }
}

TEST_CASE("Dirichlet solves") {
    const auto& mesh = default_mesh();
    const double r = mesh.radius;
    const FemSystem sys = assemble_stiffness(mesh, homogeneous(1.45));
    const DirichletSolver solver(sys);

    SUBCASE("constants") {
        const Eigen::VectorXd u = solver.solve(Eigen::VectorXd::Ones(mesh.boundary_nodes.size()).eval());
        CHECK((u.array() - 1.0).abs().maxCoeff() <= 1e-12);
    }
    SUBCASE("harmonic cos") {
        const Eigen::VectorXd bc = boundary_data(mesh, [](double t) { return std::cos(t); });
        const Eigen::VectorXd u = solver.solve(bc);
        double err = 0.0;
        for (std::size_t v = 0; v < mesh.vertex_count(); ++v) err = std::max(err, std::abs(u[v] - mesh.vertices[v].x() / r));
        CHECK(err <= 0.01);
        for (std::size_t k = 0; k < mesh.boundary_nodes.size(); ++k) CHECK(u[mesh.boundary_nodes[k]] == bc[k]);
        // Maximum principle.
        CHECK(u.maxCoeff() <= bc.maxCoeff() + 1e-9);
        CHECK(u.minCoeff() >= bc.minCoeff() - 1e-9);
        // Residual of the interior equations, relative to the load.
        const Eigen::VectorXd full = sys.stiffness * u;
        double res = 0.0, load = 0.0;
        for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
            if (sys.interior_index[v] >= 0) res += full[v] * full[v];
        }
        Eigen::VectorXd ub = Eigen::VectorXd::Zero(mesh.vertex_count());
        for (int b : mesh.boundary_nodes) ub[b] = u[b];
        const Eigen::VectorXd f = sys.stiffness * ub;
        for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
            if (sys.interior_index[v] >= 0) load += f[v] * f[v];
        }
        CHECK(std::sqrt(res / load) <= 1e-10);
    }
    SUBCASE("odd data vanishes at the centre") {
        const Eigen::VectorXd u = solver.solve(boundary_data(mesh, [](double t) { return std::sin(t); }));
        bool found = false;
        for (const auto& tri : mesh.triangles) {
            const Point& a = mesh.vertices[tri[0]];
            const Point& b = mesh.vertices[tri[1]];
            const Point& c = mesh.vertices[tri[2]];
            Eigen::Matrix2d m;
            m << b - a, c - a;
            const Eigen::Vector2d w = m.inverse() * (-a);
            if (w.minCoeff() < 0.0 || w.sum() > 1.0) continue;
            const double value = (1 - w.sum()) * u[tri[0]] + w[0] * u[tri[1]] + w[1] * u[tri[2]];
            CHECK(std::abs(value) <= 1e-3);
            found = true;
            break;
        }
        CHECK(found);
    }
    SUBCASE("shape errors") {
        CHECK_THROWS_AS(solver.solve(Eigen::VectorXd::Ones(3).eval()), InvalidArgument);
        Eigen::VectorXd bad = Eigen::VectorXd::Ones(mesh.boundary_nodes.size());
        bad[0] = std::nan("");
        CHECK_THROWS_AS(solver.solve(bad), InvalidArgument);
    }
}

TEST_CASE("boundary flux") {
    const auto& mesh = default_mesh();
    const auto layout = electrode_layout(16);
    const double gamma = 1.45, r = mesh.radius;
    const FemSystem sys = assemble_stiffness(mesh, homogeneous(gamma));
    const DirichletSolver solver(sys);

    SUBCASE("constant potential carries no current") {
        const Eigen::VectorXd u = solver.solve(Eigen::VectorXd::Ones(mesh.boundary_nodes.size()).eval());
        for (auto method : {FluxMethod::Variational, FluxMethod::ElementAverage}) {
            CHECK(boundary_flux(mesh, sys, u, method).cwiseAbs().maxCoeff() <= 1e-9);
        }
    }
    SUBCASE("analytic disk oracle for n = 1..7") {
        for (int n = 1; n <= 7; ++n) {
            for (int phase = 0; phase < 2; ++phase) {
                auto f = [&](double t) { return phase == 0 ? std::cos(n * t) : std::sin(n * t); };
                const Eigen::VectorXd u = solver.solve(boundary_data(mesh, f));
                const Eigen::VectorXd jhat = electrode_average_flux(boundary_flux(mesh, sys, u), mesh, layout);
                const double x = n * kPi / 16.0;
                const double factor = gamma * n / r * std::sin(x) / x;
                double err = 0.0;
                for (int l = 1; l <= 16; ++l) err = std::max(err, std::abs(jhat[l - 1] - factor * f(layout.center(l))));
                CHECK_MESSAGE(err <= 0.02 * factor, "n=" << n << " phase=" << phase);
            }
        }
    }
    SUBCASE("conservation") {
        const auto spec = sample_scenario(Task::CountSmall, 3, 21);
        MeshOptions opt;
        opt.refine = refinement_for(spec);
        const TriMesh refined = generate_disk_mesh(opt);
        const FemSystem s2 = assemble_stiffness(refined, spec);
        const DirichletSolver solver2(s2);
        Eigen::VectorXd w(refined.boundary_nodes.size());
        for (std::size_t k = 0; k < refined.boundary_nodes.size(); ++k) {
            const std::size_t prev = (k + refined.boundary_nodes.size() - 1) % refined.boundary_nodes.size();
            const std::size_t next = (k + 1) % refined.boundary_nodes.size();
            const Point& p = refined.vertices[refined.boundary_nodes[k]];
            w[k] = 0.5 * ((p - refined.vertices[refined.boundary_nodes[prev]]).norm() +
                          (p - refined.vertices[refined.boundary_nodes[next]]).norm());
        }
        for (const auto& pattern : standard_patterns(PatternKind::Trig, 16)) {
            const Eigen::VectorXd bc = boundary_data(refined, [&](double t) { return pattern.value(t, layout); });
            const Eigen::VectorXd j = boundary_flux(refined, s2, solver2.solve(bc));
            const double total = std::abs(w.dot(j));
            const double mass = w.dot(j.cwiseAbs());
            if (mass > 0.0) CHECK(total <= 0.02 * mass);
        }
    }
    SUBCASE("flux is linear in the conductivity") {
        const FemSystem doubled = assemble_stiffness(mesh, homogeneous(2 * gamma));
        const Eigen::VectorXd bc = boundary_data(mesh, [](double t) { return std::cos(3 * t); });
        const Eigen::VectorXd j1 = boundary_flux(mesh, sys, solver.solve(bc));
        const Eigen::VectorXd j2 = boundary_flux(mesh, doubled, DirichletSolver(doubled).solve(bc));
        CHECK((j2 - 2 * j1).cwiseAbs().maxCoeff() <= 1e-8 * j1.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("pattern discretisation") {
    const auto layout = electrode_layout(16);
    const Eigen::VectorXd v1 = discretize_pattern(VoltagePattern::trig(1), layout);
    CHECK(v1[15] == doctest::Approx(0.564190).epsilon(1e-6));
    const Eigen::VectorXd v16 = discretize_pattern(VoltagePattern::trig(16), layout);
    for (int l = 0; l < 16; ++l) CHECK(v16[l] == 0.0);
    const Eigen::VectorXd op = discretize_pattern(VoltagePattern::opposite(1), layout);
    for (int l = 0; l < 16; ++l) CHECK(op[l] == (l == 0 ? 1.0 : l == 8 ? -1.0 : 0.0));
    // Discrete orthogonality used by the D-N oracle.
    for (int i = 1; i <= 14; ++i) {
        for (int j = 1; j <= 14; ++j) {
            const double dot = discretize_pattern(VoltagePattern::trig(i), layout).dot(discretize_pattern(VoltagePattern::trig(j), layout));
            CHECK(dot == doctest::Approx(i == j ? 8.0 / kPi : 0.0));
        }
    }
    CHECK_THROWS_AS(discretize_pattern(VoltagePattern::opposite(5), electrode_layout(4)), InvalidArgument);
    CHECK_THROWS_AS(VoltagePattern::trig(0), InvalidArgument);
}

TEST_CASE("electrode averages") {
    const auto& mesh = default_mesh();
    const auto layout = electrode_layout(16);
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(mesh.boundary_nodes.size(), 2.5);
    const Eigen::VectorXd avg = electrode_average_flux(c, mesh, layout);
    for (int l = 0; l < 16; ++l) CHECK(avg[l] == doctest::Approx(2.5).epsilon(1e-12));

    const double gamma = 1.45, r = mesh.radius;
    const Eigen::VectorXd j = boundary_data(mesh, [&](double t) { return gamma / r * std::cos(t); });
    const Eigen::VectorXd jhat = electrode_average_flux(j, mesh, layout);
    const double sinc = std::sin(kPi / 16) / (kPi / 16);
    for (int l = 1; l <= 16; ++l) {
        CHECK(std::abs(jhat[l - 1] - gamma / r * std::cos(layout.center(l)) * sinc) <= 0.01 * gamma / r);
    }

    const Eigen::VectorXd odd = boundary_data(mesh, [](double t) { return std::sin(t) + 0.3 * std::sin(5 * t); });
    const Eigen::VectorXd oh = electrode_average_flux(odd, mesh, layout);
    for (int l = 1; l < 16; ++l) CHECK(oh[l - 1] == doctest::Approx(-oh[16 - l - 1]).epsilon(1e-9).scale(1.0));

    CHECK_THROWS_AS(electrode_average_flux(c, mesh, electrode_layout(128)), MeshError);
    CHECK_THROWS_AS(electrode_average_flux(Eigen::VectorXd::Ones(4), mesh, layout), InvalidArgument);
}

TEST_CASE("D-N matrix of the homogeneous disk") {
    const auto& mesh = default_mesh();
    const auto layout = electrode_layout(16);
    const auto patterns = standard_patterns(PatternKind::Trig, 16);
    const DNMatrix dn = dn_matrix(mesh, homogeneous(1.45), layout, patterns);
    REQUIRE(dn.size() == 16);
    CHECK(dn.entries(0, 0) == doctest::Approx(1.45 / 0.28 * 8 / kPi * std::sin(kPi / 16) / (kPi / 16)).epsilon(0.03));
    CHECK(dn.entries(0, 0) == doctest::Approx(13.19).epsilon(0.03));
    CHECK(std::abs(dn.entries(0, 1)) <= 0.02 * dn.entries(0, 0));
    for (int j = 0; j < 16; ++j) CHECK(dn.entries(15, j) == 0.0);
    int zero_rows = 0;
    for (int i = 0; i < 16; ++i) zero_rows += dn.entries.row(i).cwiseAbs().maxCoeff() == 0.0;
    CHECK(zero_rows == 1);

    const auto spec = sample_scenario(Task::IsoVsAnisoBoth, 2, 6);
    const DNMatrix aniso = dn_matrix(mesh, spec, layout, patterns);
    for (int j = 0; j < 16; ++j) CHECK(aniso.entries(15, j) == 0.0);

    ConductivitySpec scaled = spec;
    scaled.tank.scale *= 3.0;
    scaled.inclusions[0].conductivity.scale *= 3.0;
    const DNMatrix tripled = dn_matrix(mesh, scaled, layout, patterns);
    CHECK((tripled.entries - 3.0 * aniso.entries).norm() <= 1e-8 * tripled.entries.norm());

    CHECK_THROWS_AS(dn_matrix(mesh, spec, electrode_layout(8), patterns), InvalidArgument);
}

TEST_CASE("opposite patterns on the homogeneous disk") {
    const auto& mesh = default_mesh();
    for (int e : {2, 4, 16}) {
        const auto layout = electrode_layout(e);
        const auto op = VoltagePattern::opposite(1);
        CHECK(op.nodal_value(layout.center(1), layout) == 1.0);
        CHECK(op.nodal_value(layout.arc_start(1), layout) == doctest::Approx(e == 2 ? 0.0 : 0.5));
        CHECK(op.nodal_value(layout.arc_start(1) + layout.width(), layout) == doctest::Approx(e == 2 ? 0.0 : 0.5));

        const DNMatrix dn = dn_matrix(mesh, homogeneous(1.45), layout, standard_patterns(PatternKind::Opposite, e));
        // Reciprocity of the D-N map holds up to the flux recovery; antipodal
        // pairs differ in sign only.
        CHECK((dn.entries - dn.entries.transpose()).cwiseAbs().maxCoeff() <= 1e-4 * dn.entries.cwiseAbs().maxCoeff());
        for (int m = 1; m <= e / 2; ++m) {
            CHECK((dn.entries.row(m - 1) + dn.entries.row(m - 1 + e / 2)).cwiseAbs().maxCoeff() <= 1e-9 * dn.entries(0, 0));
        }
        // Rotating by one electrode is a symmetry of the disk up to the mesh.
        for (int m = 2; m <= e; ++m) CHECK(dn.entries(m - 1, m - 1) == doctest::Approx(dn.entries(0, 0)).epsilon(0.02));
    }
}

TEST_CASE("flatten and leading block") {
    DNMatrix dn;
    dn.entries.resize(2, 2);
    dn.entries << 1, 2, 3, 4;
    CHECK(dn.flatten() == std::vector<double>{1, 2, 3, 4});
    CHECK(dn.leading(1).flatten() == std::vector<double>{1});
    CHECK_THROWS_AS(dn.leading(3), InvalidArgument);
}

TEST_CASE("measurement noise") {
    DNMatrix clean;
    clean.entries = Eigen::MatrixXd::Constant(16, 16, 3.0);
    CHECK(add_noise(clean, 1, 0.0).entries == clean.entries);
    CHECK(add_noise(clean, 5).entries == add_noise(clean, 5).entries);
    CHECK(add_noise(clean, 5).entries != add_noise(clean, 6).entries);
    CHECK(clean.entries == Eigen::MatrixXd::Constant(16, 16, 3.0));
    CHECK(add_noise(clean, 5).noisy);

    std::vector<double> diffs;
    for (std::uint64_t s = 0; diffs.size() < 100000; ++s) {
        const DNMatrix noisy = add_noise(clean, s);
        for (Eigen::Index i = 0; i < noisy.entries.size(); ++i) diffs.push_back(noisy.entries.data()[i] - 3.0);
    }
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= diffs.size();
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    const double sd = std::sqrt(var / (diffs.size() - 1));
    CHECK(std::abs(mean) <= 3 * 1e-2 / std::sqrt(static_cast<double>(diffs.size())));
    CHECK(std::abs(sd - 1e-2) <= 0.02 * 1e-2);
}

TEST_CASE("N-D inversion") {
    CHECK(dn_from_nd(Eigen::MatrixXd::Identity(3, 3)).entries.isApprox(Eigen::MatrixXd::Identity(3, 3)));
    Eigen::MatrixXd d(2, 2);
    d << 2, 0, 0, 4;
    const DNMatrix inv = dn_from_nd(d);
    CHECK(inv.entries(0, 0) == doctest::Approx(0.5));
    CHECK(inv.entries(1, 1) == doctest::Approx(0.25));
    CHECK_FALSE(inv.noisy);
    Eigen::MatrixXd s(2, 2);
    s << 1, 1, 1, 1;
    CHECK_THROWS_AS(dn_from_nd(s, "record 3"), SingularMatrix);
    CHECK_THROWS_AS(dn_from_nd(Eigen::MatrixXd::Ones(2, 3)), InvalidArgument);
}
