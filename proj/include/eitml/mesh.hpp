#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace eitml {

using Point = Eigen::Vector2d;

/// Tank radius of the reference saline tank, in meters.
inline constexpr double kTankRadius = 0.28;
/// Default mesh size; gives roughly 3000 triangles and 192 boundary nodes on
/// the reference tank.
inline constexpr double kDefaultMaxEdge = 0.0135;

/// Triangulated disk. Boundary nodes are stored first, in counterclockwise
/// order, so `boundary_nodes[k] == k` for generated meshes.
struct TriMesh {
    std::vector<Point> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<std::array<int, 2>> boundary_edges;
    std::vector<int> boundary_nodes;
    double radius = 0.0;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t triangle_count() const { return triangles.size(); }

    double signed_area(std::size_t t) const;
    Point centroid(std::size_t t) const;
    double circumradius(std::size_t t) const;
    double total_area() const;
    double max_circumradius() const;
    /// Angle in [0, 2pi) of boundary node `k` (position in `boundary_nodes`).
    double boundary_angle(std::size_t k) const;
};

/// Disk around which the interior is meshed at half the target edge length.
/// Used to resolve inclusion interfaces.
struct RefinementDisk {
    Point center;
    double radius = 0.0;
};

struct MeshOptions {
    double radius = kTankRadius;
    double target_max_edge = kDefaultMaxEdge;
    std::uint64_t seed = 0;
    /// Zero selects the default rule (a multiple of 48 so that every electrode
    /// count in {2, 4, 8, 12, 16} gets equal node counts per arc).
    int boundary_node_count = 0;
    std::vector<RefinementDisk> refine;
};

TriMesh generate_disk_mesh(const MeshOptions& options);
TriMesh generate_disk_mesh(double radius, double target_max_edge, std::uint64_t seed);

/// Throws MeshError naming the first violated invariant.
void validate_mesh(const TriMesh& mesh);

/// Equal-width gapless electrodes. Electrodes are numbered 1..E; electrode l
/// is centred at 2*pi*l/E and covers the half-open arc
/// [center - pi/E, center + pi/E).
class ElectrodeLayout {
public:
    explicit ElectrodeLayout(int count);

    int count() const { return count_; }
    double width() const;
    double center(int l) const;
    /// Start angle of arc l, normalised to [0, 2pi).
    double arc_start(int l) const;
    /// Electrode (1..E) whose arc contains `angle`.
    int electrode_at(double angle) const;
    /// Electrode facing electrode l.
    int opposite(int l) const;

private:
    int count_;
};

/// Validating factory: E must be even and at least 2.
ElectrodeLayout electrode_layout(int count);

/// Boundary vertex ids on arc l, ordered counterclockwise from the arc start.
std::vector<int> boundary_arc_nodes(const TriMesh& mesh, const ElectrodeLayout& layout, int l);

void write_mesh(std::ostream& out, const TriMesh& mesh);
TriMesh read_mesh(std::istream& in);

}  // namespace eitml
