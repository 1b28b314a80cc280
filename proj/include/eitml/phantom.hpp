#pragma once

#include "eitml/mesh.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace eitml {

using Tensor2 = Eigen::Matrix2d;

/// Tank background conductivity of saline, S/m.
inline constexpr double kTankConductivity = 1.45;
/// Inclusion conductivity used by the anisotropy experiments, S/m.
inline constexpr double kInclusionConductivity = 10.0;
/// Admissible inclusion radii, meters (diameters 19.4/38.8/58.2/77.6 mm).
inline constexpr std::array<double, 4> kInclusionRadii = {0.0097, 0.0194, 0.0291, 0.0388};
/// Clearance between an inclusion and the tank wall, and between inclusions.
inline constexpr double kPlacementMargin = 0.010;
/// Lower clamp applied to the spatially varying diagonal tensor.
inline constexpr double kSpatialFloor = 1e-3;

enum class TensorKind { IsoConst, DiagConst, SymConst, SpatialDiag };

/// Conductivity family of one region. `scale` is the scalar prefactor
/// (lambda for isotropic regions, mu for the anisotropic ones).
struct TensorSpec {
    TensorKind kind = TensorKind::IsoConst;
    double scale = 1.0;
    double a = 1.0;
    double b = 1.0;
    double c = 0.0;
    double floor = kSpatialFloor;

    static TensorSpec iso(double lambda);
    static TensorSpec diag(double mu, double a, double b);
    static TensorSpec sym(double mu, double a, double b, double c);
    static TensorSpec spatial_diag(double floor = kSpatialFloor);

    /// Tensor at `p`, tank-centred coordinates in meters.
    Tensor2 at(const Point& p) const;
    bool is_constant() const { return kind != TensorKind::SpatialDiag; }
    /// Throws InvalidArgument when the parameters break the family invariant.
    void check() const;
};

struct Inclusion {
    Point center = Point::Zero();
    double radius = 0.0;
    TensorSpec conductivity;

    bool contains(const Point& p) const { return (p - center).squaredNorm() <= radius * radius; }
};

struct ConductivitySpec {
    TensorSpec tank = TensorSpec::iso(kTankConductivity);
    std::vector<Inclusion> inclusions;
    int label = 0;
    double tank_radius = kTankRadius;
};

enum class Task {
    Presence,
    CountSmall,
    CountLarge,
    Radii,
    IsoVsAnisoBoth,
    IsoVsAnisoInclusion,
    DiagVsOffdiag,
    IsoVsSpatial,
};

std::string_view task_name(Task task);
Task parse_task(std::string_view name);
/// Class labels are 1..class_count(task).
int class_count(Task task);
std::span<const Task> all_tasks();

/// Tensor of the innermost region containing `p`; inclusions override the
/// tank. Throws InvalidArgument outside the closed tank disk.
Tensor2 evaluate_tensor(const ConductivitySpec& spec, const Point& p);

/// Draws a scenario for (task, label). `radius_class` (1..4) pins the
/// inclusion radius where the task leaves it free; otherwise it is drawn
/// uniformly. Deterministic in `seed`.
ConductivitySpec sample_scenario(Task task, int label, std::uint64_t seed,
                                 std::optional<int> radius_class = std::nullopt,
                                 double tank_radius = kTankRadius);

struct EllipticityBounds {
    double min_eigenvalue;
    double max_eigenvalue;
};

/// Extreme eigenvalues of the conductivity over `points`. Throws
/// EllipticityError naming the first point with a non-positive eigenvalue.
EllipticityBounds verify_ellipticity(const ConductivitySpec& spec, std::span<const Point> points);

/// Mesh refinement disks matching the inclusions of `spec`.
std::vector<RefinementDisk> refinement_for(const ConductivitySpec& spec);

nlohmann::json to_json(const TensorSpec& tensor);
nlohmann::json to_json(const ConductivitySpec& spec);
TensorSpec tensor_from_json(const nlohmann::json& j);
ConductivitySpec spec_from_json(const nlohmann::json& j);

}  // namespace eitml
