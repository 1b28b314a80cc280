#include "eitml/forward.hpp"

#include "eitml/error.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

namespace eitml {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
const double kInvSqrtPi = 1.0 / std::sqrt(kPi);

// sin(pi p / q) and cos(pi p / q), exact zeros where the argument is a
// multiple of pi (sin) or an odd multiple of pi/2 (cos).
double sin_pi_frac(long p, long q) {
    p %= 2 * q;
    if (p % q == 0) return 0.0;
    return std::sin(kPi * static_cast<double>(p) / static_cast<double>(q));
}

double cos_pi_frac(long p, long q) {
    p %= 2 * q;
    if ((2 * p) % q == 0 && ((2 * p) / q) % 2 != 0) return 0.0;
    return std::cos(kPi * static_cast<double>(p) / static_cast<double>(q));
}

std::int64_t edge_key(int a, int b) { return (static_cast<std::int64_t>(a) << 32) | static_cast<std::uint32_t>(b); }

// Rows are the gradients of the three barycentric coordinates.
Eigen::Matrix<double, 2, 3> shape_gradients(const TriMesh& mesh, std::size_t t, double area) {
    const auto& tri = mesh.triangles[t];
    Eigen::Matrix<double, 2, 3> g;
    for (int i = 0; i < 3; ++i) {
        const Point& pj = mesh.vertices[tri[(i + 1) % 3]];
        const Point& pk = mesh.vertices[tri[(i + 2) % 3]];
        g(0, i) = (pj.y() - pk.y()) / (2.0 * area);
        g(1, i) = (pk.x() - pj.x()) / (2.0 * area);
    }
    return g;
}

std::vector<int> boundary_positions(const TriMesh& mesh) {
    std::vector<int> pos(mesh.vertex_count(), -1);
    for (std::size_t k = 0; k < mesh.boundary_nodes.size(); ++k) pos[mesh.boundary_nodes[k]] = static_cast<int>(k);
    return pos;
}

Eigen::MatrixXd variational_flux(const TriMesh& mesh, const FemSystem& system, const Eigen::MatrixXd& u) {
    const Eigen::MatrixXd r = system.stiffness * u;
    const auto pos = boundary_positions(mesh);
    const int nb = static_cast<int>(mesh.boundary_nodes.size());
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(4 * mesh.boundary_edges.size());
    for (const auto& [a, b] : mesh.boundary_edges) {
        const double len = (mesh.vertices[a] - mesh.vertices[b]).norm();
        const int i = pos[a], j = pos[b];
        entries.emplace_back(i, i, len / 3.0);
        entries.emplace_back(j, j, len / 3.0);
        entries.emplace_back(i, j, len / 6.0);
        entries.emplace_back(j, i, len / 6.0);
    }
    Eigen::SparseMatrix<double> mass(nb, nb);
    mass.setFromTriplets(entries.begin(), entries.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor(mass);
    if (factor.info() != Eigen::Success) throw SolverError("boundary mass matrix factorisation failed");
    Eigen::MatrixXd rb(nb, u.cols());
    for (int k = 0; k < nb; ++k) rb.row(k) = r.row(mesh.boundary_nodes[k]);
    return factor.solve(rb);
}

Eigen::MatrixXd element_average_flux(const TriMesh& mesh, const FemSystem& system, const Eigen::MatrixXd& u) {
    std::unordered_map<std::int64_t, int> owner;
    owner.reserve(2 * mesh.boundary_edges.size());
    for (const auto& [a, b] : mesh.boundary_edges) owner.emplace(edge_key(a, b), -1);
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles[t];
        for (int i = 0; i < 3; ++i) {
            auto it = owner.find(edge_key(tri[i], tri[(i + 1) % 3]));
            if (it != owner.end()) it->second = static_cast<int>(t);
        }
    }
    const auto pos = boundary_positions(mesh);
    const int nb = static_cast<int>(mesh.boundary_nodes.size());
    Eigen::MatrixXd flux = Eigen::MatrixXd::Zero(nb, u.cols());
    Eigen::VectorXi hits = Eigen::VectorXi::Zero(nb);
    for (const auto& [a, b] : mesh.boundary_edges) {
        const int t = owner.at(edge_key(a, b));
        if (t < 0) throw MeshError(fmt::format("boundary edge ({}, {}) has no adjacent triangle", a, b));
        const auto& tri = mesh.triangles[t];
        const auto g = shape_gradients(mesh, t, mesh.signed_area(t));
        Eigen::Matrix<double, 3, Eigen::Dynamic> ue(3, u.cols());
        for (int i = 0; i < 3; ++i) ue.row(i) = u.row(tri[i]);
        const Eigen::MatrixXd current = system.element_tensors[t] * (g * ue);
        for (int node : {a, b}) {
            const Point nu = mesh.vertices[node].normalized();
            flux.row(pos[node]) += nu.transpose() * current;
            ++hits[pos[node]];
        }
    }
    for (int k = 0; k < nb; ++k) {
        if (hits[k] > 0) flux.row(k) /= hits[k];
    }
    return flux;
}

}  // namespace

std::string_view pattern_name(PatternKind kind) { return kind == PatternKind::Trig ? "trig" : "opposite"; }

PatternKind parse_pattern(std::string_view name) {
    if (name == "trig") return PatternKind::Trig;
    if (name == "opposite") return PatternKind::Opposite;
    throw InvalidArgument(fmt::format("unknown pattern kind '{}'", name));
}

VoltagePattern VoltagePattern::trig(int k) {
    if (k < 1) throw InvalidArgument(fmt::format("trig pattern index must be >= 1, got {}", k));
    return {PatternKind::Trig, k};
}

VoltagePattern VoltagePattern::opposite(int m) {
    if (m < 1) throw InvalidArgument(fmt::format("opposite pattern index must be >= 1, got {}", m));
    return {PatternKind::Opposite, m};
}

double VoltagePattern::value(double theta, const ElectrodeLayout& layout) const {
    if (kind == PatternKind::Trig) {
        return index % 2 == 1 ? kInvSqrtPi * std::cos((index + 1) * theta / 2.0)
                              : kInvSqrtPi * std::sin(index * theta / 2.0);
    }
    const int l = layout.electrode_at(theta);
    if (l == index) return 1.0;
    if (l == layout.opposite(index)) return -1.0;
    return 0.0;
}

double VoltagePattern::nodal_value(double theta, const ElectrodeLayout& layout) const {
    if (kind == PatternKind::Trig) return value(theta, layout);
    const double d = 1e-6 * layout.width();
    return 0.5 * (value(theta - d, layout) + value(theta + d, layout));
}

std::vector<VoltagePattern> standard_patterns(PatternKind kind, int count) {
    std::vector<VoltagePattern> out;
    out.reserve(count);
    for (int k = 1; k <= count; ++k) out.push_back(kind == PatternKind::Trig ? VoltagePattern::trig(k) : VoltagePattern::opposite(k));
    return out;
}

Eigen::VectorXd discretize_pattern(const VoltagePattern& pattern, const ElectrodeLayout& layout) {
    const int e = layout.count();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(e);
    if (pattern.kind == PatternKind::Opposite) {
        if (pattern.index > e) {
            throw InvalidArgument(fmt::format("opposite pattern {} needs at least {} electrodes", pattern.index, pattern.index));
        }
        v[pattern.index - 1] = 1.0;
        v[layout.opposite(pattern.index) - 1] = -1.0;
        return v;
    }
    // theta_l = 2 pi l / E, so (k+1) theta_l / 2 = pi (k+1) l / E.
    const long k = pattern.index;
    for (int l = 1; l <= e; ++l) {
        v[l - 1] = k % 2 == 1 ? kInvSqrtPi * cos_pi_frac((k + 1) * l, e) : kInvSqrtPi * sin_pi_frac(k * l, e);
    }
    return v;
}

FemSystem assemble_stiffness(const TriMesh& mesh, const ConductivitySpec& spec) {
    FemSystem sys;
    const int nv = static_cast<int>(mesh.vertex_count());
    sys.element_tensors.resize(mesh.triangle_count());
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(9 * mesh.triangle_count());
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        const double area = mesh.signed_area(t);
        if (!(area >= 1e-14)) {
            throw DegenerateElement(static_cast<int>(t), fmt::format("element {} has area {:.3e} m^2", t, area));
        }
        const Point c = mesh.centroid(t);
        const Tensor2 s = evaluate_tensor(spec, c);
        if (!(s.determinant() > 0.0 && s.trace() > 0.0)) {
            throw EllipticityError(c.x(), c.y(), fmt::format("conductivity of element {} at ({}, {}) is not positive definite", t, c.x(), c.y()));
        }
        sys.element_tensors[t] = s;
        const auto g = shape_gradients(mesh, t, area);
        const Eigen::Matrix3d ke = area * g.transpose() * s * g;
        const auto& tri = mesh.triangles[t];
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) entries.emplace_back(tri[i], tri[j], ke(i, j));
        }
    }
    sys.stiffness.resize(nv, nv);
    sys.stiffness.setFromTriplets(entries.begin(), entries.end());
    sys.boundary_nodes = mesh.boundary_nodes;
    sys.interior_index.assign(nv, 0);
    for (int b : mesh.boundary_nodes) sys.interior_index[b] = -1;
    for (int v = 0; v < nv; ++v) {
        if (sys.interior_index[v] >= 0) sys.interior_index[v] = sys.interior_count++;
    }
    return sys;
}

DirichletSolver::DirichletSolver(const FemSystem& system, double tolerance)
    : system_(&system), tolerance_(tolerance) {
    const int ni = system.interior_count;
    const int nb = static_cast<int>(system.boundary_nodes.size());
    std::vector<int> bpos(system.interior_index.size(), -1);
    for (int k = 0; k < nb; ++k) bpos[system.boundary_nodes[k]] = k;
    std::vector<Eigen::Triplet<double>> ii, ib;
    const auto& k = system.stiffness;
    for (int col = 0; col < k.outerSize(); ++col) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(k, col); it; ++it) {
            const int r = system.interior_index[it.row()];
            if (r < 0) continue;
            const int c = system.interior_index[it.col()];
            if (c >= 0) {
                ii.emplace_back(r, c, it.value());
            } else {
                ib.emplace_back(r, bpos[it.col()], it.value());
            }
        }
    }
    interior_.resize(ni, ni);
    interior_.setFromTriplets(ii.begin(), ii.end());
    coupling_.resize(ni, nb);
    coupling_.setFromTriplets(ib.begin(), ib.end());
    if (ni > 0) {
        factor_.compute(interior_);
        if (factor_.info() != Eigen::Success) {
            throw SolverError("factorisation of the interior stiffness block failed (matrix not positive definite)");
        }
    }
}

Eigen::VectorXd DirichletSolver::solve(const Eigen::VectorXd& boundary_values) const {
    Eigen::MatrixXd one = boundary_values;
    return solve(one).col(0);
}

Eigen::MatrixXd DirichletSolver::solve(const Eigen::MatrixXd& boundary_values) const {
    const auto& sys = *system_;
    const int nb = static_cast<int>(sys.boundary_nodes.size());
    if (boundary_values.rows() != nb) {
        throw InvalidArgument(fmt::format("expected {} boundary values, got {}", nb, boundary_values.rows()));
    }
    if (!boundary_values.allFinite()) throw InvalidArgument("boundary values must be finite");
    const Eigen::MatrixXd load = -(coupling_ * boundary_values);
    Eigen::MatrixXd ui = Eigen::MatrixXd::Zero(sys.interior_count, boundary_values.cols());
    if (sys.interior_count > 0) {
        ui = factor_.solve(load);
        for (Eigen::Index j = 0; j < ui.cols(); ++j) {
            const double scale = std::max(load.col(j).norm(), 1e-300);
            std::vector<double> history;
            Eigen::VectorXd res = load.col(j) - interior_ * ui.col(j);
            history.push_back(res.norm() / scale);
            // A couple of refinement sweeps recover round-off on badly
            // scaled conductivities.
            while (history.back() > tolerance_ && history.size() < 4) {
                ui.col(j) += factor_.solve(res);
                res = load.col(j) - interior_ * ui.col(j);
                history.push_back(res.norm() / scale);
            }
            if (!(history.back() <= tolerance_) && load.col(j).norm() > 0.0) {
                throw SolverError(fmt::format("pattern {}: relative residual did not reach {:.1e}; history [{:.3e}]",
                                              j + 1, tolerance_, fmt::join(history, ", ")));
            }
        }
    }
    Eigen::MatrixXd u(sys.interior_index.size(), boundary_values.cols());
    for (std::size_t v = 0; v < sys.interior_index.size(); ++v) {
        if (sys.interior_index[v] >= 0) u.row(v) = ui.row(sys.interior_index[v]);
    }
    for (int k = 0; k < nb; ++k) u.row(sys.boundary_nodes[k]) = boundary_values.row(k);
    return u;
}

Eigen::VectorXd solve_dirichlet(const FemSystem& system, const Eigen::VectorXd& boundary_values) {
    return DirichletSolver(system).solve(boundary_values);
}

Eigen::MatrixXd boundary_flux(const TriMesh& mesh, const FemSystem& system, const Eigen::MatrixXd& u,
                              FluxMethod method) {
    if (u.rows() != static_cast<Eigen::Index>(mesh.vertex_count())) {
        throw InvalidArgument(fmt::format("solution has {} rows for a mesh of {} vertices", u.rows(), mesh.vertex_count()));
    }
    return method == FluxMethod::Variational ? variational_flux(mesh, system, u) : element_average_flux(mesh, system, u);
}

Eigen::VectorXd boundary_flux(const TriMesh& mesh, const FemSystem& system, const Eigen::VectorXd& u,
                              FluxMethod method) {
    Eigen::MatrixXd one = u;
    return boundary_flux(mesh, system, one, method).col(0);
}

Eigen::VectorXd electrode_average_flux(const Eigen::VectorXd& flux, const TriMesh& mesh, const ElectrodeLayout& layout) {
    const int e = layout.count();
    const int nb = static_cast<int>(mesh.boundary_nodes.size());
    if (flux.size() != nb) throw InvalidArgument(fmt::format("expected {} flux values, got {}", nb, flux.size()));
    std::vector<int> nodes_per_arc(e + 1, 0);
    for (int k = 0; k < nb; ++k) ++nodes_per_arc[layout.electrode_at(mesh.boundary_angle(k))];
    for (int l = 1; l <= e; ++l) {
        if (nodes_per_arc[l] < 2) {
            throw MeshError(fmt::format("electrode {} covers {} boundary nodes; at least 2 are needed", l, nodes_per_arc[l]));
        }
    }

    const auto pos = boundary_positions(mesh);
    const double w = layout.width();
    Eigen::VectorXd integral = Eigen::VectorXd::Zero(e);
    for (const auto& [a, b] : mesh.boundary_edges) {
        const double ta = mesh.boundary_angle(pos[a]);
        double tb = mesh.boundary_angle(pos[b]);
        if (tb <= ta) tb += kTwoPi;
        const double ja = flux[pos[a]];
        const double jb = flux[pos[b]];
        const auto at = [&](double t) { return ja + (jb - ja) * (t - ta) / (tb - ta); };
        // Arc j (unwrapped) spans [j w - w/2, j w + w/2).
        long j = static_cast<long>(std::floor((ta + 0.5 * w) / w + 1e-12));
        double cur = ta;
        while (cur < tb) {
            double next = (static_cast<double>(j) + 0.5) * w;
            if (next <= cur) {
                ++j;
                continue;
            }
            next = std::min(next, tb);
            long l = j % e;
            if (l == 0) l = e;
            integral[l - 1] += 0.5 * (next - cur) * (at(cur) + at(next));
            cur = next;
            ++j;
        }
    }
    return integral / w;
}

std::vector<double> DNMatrix::flatten() const {
    std::vector<double> out;
    out.reserve(entries.size());
    for (Eigen::Index i = 0; i < entries.rows(); ++i) {
        for (Eigen::Index j = 0; j < entries.cols(); ++j) out.push_back(entries(i, j));
    }
    return out;
}

DNMatrix DNMatrix::leading(int m) const {
    if (m < 1 || m > size()) throw InvalidArgument(fmt::format("cannot take a {0}x{0} block of a {1}x{1} matrix", m, size()));
    DNMatrix out = *this;
    out.entries = entries.topLeftCorner(m, m);
    return out;
}

DNMatrix dn_matrix(const TriMesh& mesh, const ConductivitySpec& spec, const ElectrodeLayout& layout,
                   std::span<const VoltagePattern> patterns, const ForwardOptions& options) {
    const int m = static_cast<int>(patterns.size());
    if (m < 1 || m > layout.count()) {
        throw InvalidArgument(fmt::format("pattern count {} must lie in 1..{} (electrode count)", m, layout.count()));
    }
    for (const auto& p : patterns) {
        if (p.kind != patterns.front().kind) throw InvalidArgument("all patterns of a D-N matrix must share a kind");
    }
    const FemSystem sys = assemble_stiffness(mesh, spec);
    const DirichletSolver solver(sys, options.solver_tolerance);
    const int nb = static_cast<int>(mesh.boundary_nodes.size());
    Eigen::MatrixXd bc(nb, m);
    Eigen::MatrixXd vhat(layout.count(), m);
    for (int j = 0; j < m; ++j) {
        for (int k = 0; k < nb; ++k) bc(k, j) = patterns[j].nodal_value(mesh.boundary_angle(k), layout);
        vhat.col(j) = discretize_pattern(patterns[j], layout);
    }
    const Eigen::MatrixXd u = solver.solve(bc);
    const Eigen::MatrixXd flux = boundary_flux(mesh, sys, u, options.flux);
    Eigen::MatrixXd jhat(layout.count(), m);
    for (int j = 0; j < m; ++j) jhat.col(j) = electrode_average_flux(flux.col(j), mesh, layout);

    DNMatrix out;
    out.entries = vhat.transpose() * jhat;
    out.pattern = patterns.front().kind;
    out.electrode_count = layout.count();
    return out;
}

DNMatrix add_noise(const DNMatrix& clean, std::uint64_t seed, double scale) {
    if (!(scale >= 0.0)) throw InvalidArgument(fmt::format("noise scale must be non-negative, got {}", scale));
    DNMatrix out = clean;
    out.noisy = true;
    out.seed = seed;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x401eu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.entries.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.entries.cols(); ++j) out.entries(i, j) += scale * normal(rng);
    }
    return out;
}

DNMatrix dn_from_nd(const Eigen::MatrixXd& nd, std::string_view name) {
    if (nd.rows() != nd.cols() || nd.rows() == 0) {
        throw InvalidArgument(fmt::format("{} must be square and non-empty, got {}x{}", name, nd.rows(), nd.cols()));
    }
    if (!nd.allFinite()) throw InvalidArgument(fmt::format("{} has non-finite entries", name));
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(nd);
    const auto& s = svd.singularValues();
    const double smallest = s[s.size() - 1];
    const double cond = smallest > 0.0 ? s[0] / smallest : std::numeric_limits<double>::infinity();
    if (!(cond <= 1e12)) throw SingularMatrix(fmt::format("{} is singular (condition number {:.3e})", name, cond));
    DNMatrix out;
    out.entries = nd.fullPivLu().inverse();
    out.pattern = PatternKind::Opposite;
    out.electrode_count = static_cast<int>(nd.rows());
    return out;
}

}  // namespace eitml
