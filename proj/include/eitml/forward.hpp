#pragma once

#include "eitml/mesh.hpp"
#include "eitml/phantom.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace eitml {

enum class PatternKind { Trig, Opposite };

std::string_view pattern_name(PatternKind kind);
PatternKind parse_pattern(std::string_view name);

/// Boundary excitation. Trig patterns are indexed k = 1, 2, ...; opposite
/// patterns drive electrode m at +1 V and its antipode at -1 V.
struct VoltagePattern {
    PatternKind kind = PatternKind::Trig;
    int index = 1;

    static VoltagePattern trig(int k);
    static VoltagePattern opposite(int m);

    /// Boundary voltage at polar angle `theta`.
    double value(double theta, const ElectrodeLayout& layout) const;
    /// Dirichlet value for a mesh node at `theta`: the mean of the one-sided
    /// limits, so a node on an opposite-pattern jump takes the midpoint.
    double nodal_value(double theta, const ElectrodeLayout& layout) const;
};

/// Patterns 1..count of the given kind.
std::vector<VoltagePattern> standard_patterns(PatternKind kind, int count);

/// Pattern sampled at the electrode centres.
Eigen::VectorXd discretize_pattern(const VoltagePattern& pattern, const ElectrodeLayout& layout);

struct FemSystem {
    Eigen::SparseMatrix<double> stiffness;
    /// Conductivity of each element, evaluated at its centroid.
    std::vector<Tensor2> element_tensors;
    std::vector<int> boundary_nodes;
    /// Position of each vertex among the unknowns, -1 for Dirichlet nodes.
    std::vector<int> interior_index;
    int interior_count = 0;
};

/// P1 stiffness matrix of div(sigma grad u). Throws DegenerateElement for
/// elements with area below 1e-14 m^2 and EllipticityError when an element
/// tensor is not positive definite.
FemSystem assemble_stiffness(const TriMesh& mesh, const ConductivitySpec& spec);

/// Factorises the interior block once; each solve then costs two triangular
/// sweeps. Solves check the relative residual against `tolerance`. The
/// system must outlive the solver.
class DirichletSolver {
public:
    explicit DirichletSolver(const FemSystem& system, double tolerance = 1e-10);

    /// `boundary_values` is ordered like `system.boundary_nodes`.
    Eigen::VectorXd solve(const Eigen::VectorXd& boundary_values) const;
    /// One column per right-hand side; returns nodal solutions column-wise.
    Eigen::MatrixXd solve(const Eigen::MatrixXd& boundary_values) const;

private:
    const FemSystem* system_;
    double tolerance_;
    Eigen::SparseMatrix<double> interior_;
    Eigen::SparseMatrix<double> coupling_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor_;
};

Eigen::VectorXd solve_dirichlet(const FemSystem& system, const Eigen::VectorXd& boundary_values);

enum class FluxMethod {
    /// Galerkin residual of the solution tested against boundary hat
    /// functions, converted to a density by the boundary mass matrix.
    Variational,
    /// Mean of sigma grad u . nu over the boundary elements sharing the node.
    ElementAverage,
};

/// Current density sigma grad u . nu at each boundary node, ordered like
/// `mesh.boundary_nodes`.
Eigen::VectorXd boundary_flux(const TriMesh& mesh, const FemSystem& system, const Eigen::VectorXd& u,
                              FluxMethod method = FluxMethod::Variational);
Eigen::MatrixXd boundary_flux(const TriMesh& mesh, const FemSystem& system, const Eigen::MatrixXd& u,
                              FluxMethod method = FluxMethod::Variational);

/// Arc means of a boundary density that is linear between consecutive
/// boundary nodes. Throws MeshError when an arc holds fewer than two nodes.
Eigen::VectorXd electrode_average_flux(const Eigen::VectorXd& flux, const TriMesh& mesh,
                                       const ElectrodeLayout& layout);

struct DNMatrix {
    Eigen::MatrixXd entries;
    PatternKind pattern = PatternKind::Trig;
    int electrode_count = 0;
    bool noisy = false;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(entries.rows()); }
    /// Row-major flattening.
    std::vector<double> flatten() const;
    /// Leading m x m block.
    DNMatrix leading(int m) const;
};

struct ForwardOptions {
    FluxMethod flux = FluxMethod::Variational;
    double solver_tolerance = 1e-10;
};

/// Clean D-N matrix with entry (i, j) = <J^j, V^i> over the electrodes.
DNMatrix dn_matrix(const TriMesh& mesh, const ConductivitySpec& spec, const ElectrodeLayout& layout,
                   std::span<const VoltagePattern> patterns, const ForwardOptions& options = {});

inline constexpr double kDefaultNoiseScale = 1e-2;

/// L + scale * N with N i.i.d. standard normal, filled row by row.
DNMatrix add_noise(const DNMatrix& clean, std::uint64_t seed, double scale = kDefaultNoiseScale);

/// D-N matrix of a measured N-D matrix. Throws SingularMatrix when the
/// condition number exceeds 1e12.
DNMatrix dn_from_nd(const Eigen::MatrixXd& nd, std::string_view name = "N-D matrix");

}  // namespace eitml
