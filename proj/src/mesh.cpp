#include "eitml/mesh.hpp"

#include "delaunay.hpp"
#include "eitml/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace eitml {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double normalize_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    if (a >= kTwoPi) a = 0.0;
    return a;
}

int default_boundary_count(double radius, double edge) {
    // Boundary spacing is 0.7 of the interior spacing; rounded up to a
    // multiple of 48 = lcm(2, 4, 8, 12, 16).
    const int raw = static_cast<int>(std::ceil(kTwoPi * radius / (0.7 * edge)));
    return std::max(48, (raw + 47) / 48 * 48);
}

void add_ring(std::vector<Point>& out, const Point& center, double rho, double spacing,
              double jitter, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int count = std::max(3, static_cast<int>(std::lround(kTwoPi * rho / spacing)));
    const double step = kTwoPi / count;
    const double offset = unit(rng) * step;
    for (int i = 0; i < count; ++i) {
        const double angle = offset + i * step;
        const double dr = jitter * (2.0 * unit(rng) - 1.0);
        const double dt = 0.1 * step * (2.0 * unit(rng) - 1.0);
        const double r = rho + dr;
        out.push_back(center + Point(r * std::cos(angle + dt), r * std::sin(angle + dt)));
    }
}

}  // namespace

double TriMesh::signed_area(std::size_t t) const {
    const auto& tri = triangles[t];
    return 0.5 * detail::orient2d(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
}

Point TriMesh::centroid(std::size_t t) const {
    const auto& tri = triangles[t];
    return (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]) / 3.0;
}

double TriMesh::circumradius(std::size_t t) const {
    const auto& tri = triangles[t];
    const double a = (vertices[tri[1]] - vertices[tri[2]]).norm();
    const double b = (vertices[tri[0]] - vertices[tri[2]]).norm();
    const double c = (vertices[tri[0]] - vertices[tri[1]]).norm();
    return a * b * c / (4.0 * std::abs(signed_area(t)));
}

double TriMesh::total_area() const {
    double sum = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) sum += signed_area(t);
    return sum;
}

double TriMesh::max_circumradius() const {
    double worst = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) worst = std::max(worst, circumradius(t));
    return worst;
}

double TriMesh::boundary_angle(std::size_t k) const {
    const Point& p = vertices[boundary_nodes[k]];
    return normalize_angle(std::atan2(p.y(), p.x()));
}

TriMesh generate_disk_mesh(double radius, double target_max_edge, std::uint64_t seed) {
    MeshOptions options;
    options.radius = radius;
    options.target_max_edge = target_max_edge;
    options.seed = seed;
    return generate_disk_mesh(options);
}

TriMesh generate_disk_mesh(const MeshOptions& options) {
    const double R = options.radius;
    const double h = options.target_max_edge;
    if (!(R > 0.0) || !std::isfinite(R)) {
        throw InvalidArgument(fmt::format("mesh radius must be positive, got {}", R));
    }
    if (!(h > 0.0) || !(h <= R)) {
        throw InvalidArgument(fmt::format("target_max_edge must lie in (0, radius], got {}", h));
    }
    if (options.boundary_node_count != 0 && options.boundary_node_count < 3) {
        throw InvalidArgument("boundary_node_count must be at least 3");
    }

    std::mt19937_64 rng(options.seed);
    const int nb = options.boundary_node_count > 0 ? options.boundary_node_count
                                                   : default_boundary_count(R, h);
    const double sb = kTwoPi * R / nb;

    std::vector<Point> points;
    points.reserve(static_cast<std::size_t>(nb + 4.0 * R * R / (h * h)));
    for (int j = 0; j < nb; ++j) {
        const double a = kTwoPi * j / nb;
        points.emplace_back(R * std::cos(a), R * std::sin(a));
    }

    // Interior points on concentric rings, roughly equilateral.
    const double s = 0.95 * h;
    const double gap = s * std::sqrt(3.0) / 2.0;
    const double keep_out = R - 0.45 * sb;
    const double outer_ring = R - 0.5 * (sb + s) * std::sqrt(3.0) / 2.0;
    const double band = outer_ring - 0.5 * gap;
    std::vector<Point> interior;
    {
        double rho = outer_ring;
        while (rho > 0.6 * s) {
            add_ring(interior, Point::Zero(), rho, s, 0.08 * s, rng);
            rho -= gap;
        }
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        interior.emplace_back(0.05 * s * unit(rng), 0.05 * s * unit(rng));
    }

    // Local refinement: replace coarse points near each disk by rings at half
    // spacing, one of which sits exactly on the disk boundary.
    for (std::size_t d = 0; d < options.refine.size(); ++d) {
        const auto& disk = options.refine[d];
        if (!(disk.radius > 0.0)) throw InvalidArgument("refinement disk radius must be positive");
        const double sf = 0.5 * s;
        const double gf = sf * std::sqrt(3.0) / 2.0;
        const double zone = disk.radius + h;
        // The outermost ring stays put so the mesh next to the boundary is the
        // same for every refinement.
        std::erase_if(interior, [&](const Point& p) {
            return p.norm() < band && (p - disk.center).norm() < zone + 0.5 * sf;
        });

        std::vector<Point> fine;
        const int inner = static_cast<int>(std::floor(disk.radius / gf));
        const int outer = static_cast<int>(std::floor(h / gf));
        for (int j = -inner; j <= outer; ++j) {
            const double rho = disk.radius + j * gf;
            if (rho < 0.6 * sf) continue;
            add_ring(fine, disk.center, rho, sf, j == 0 ? 0.0 : 0.08 * sf, rng);
        }
        if (disk.radius - inner * gf >= 0.6 * sf) fine.push_back(disk.center);
        for (const auto& p : fine) {
            if (p.norm() > band - 0.5 * sf) continue;
            bool shadowed = false;
            for (std::size_t e = 0; e < d && !shadowed; ++e) {
                const auto& other = options.refine[e];
                shadowed = (p - other.center).norm() < other.radius + h + 0.25 * sf;
            }
            if (!shadowed) interior.push_back(p);
        }
    }
    std::erase_if(interior, [&](const Point& p) { return p.norm() > keep_out; });
    points.insert(points.end(), interior.begin(), interior.end());

    TriMesh mesh;
    mesh.radius = R;
    mesh.vertices = std::move(points);
    mesh.triangles = detail::delaunay_triangulate(mesh.vertices);
    mesh.boundary_nodes.resize(nb);
    mesh.boundary_edges.resize(nb);
    for (int j = 0; j < nb; ++j) {
        mesh.boundary_nodes[j] = j;
        mesh.boundary_edges[j] = {j, (j + 1) % nb};
    }
    validate_mesh(mesh);
    return mesh;
}

void validate_mesh(const TriMesh& mesh) {
    const double R = mesh.radius;
    if (!(R > 0.0)) throw MeshError("mesh radius is not positive");
    const int nv = static_cast<int>(mesh.vertices.size());

    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        for (int v : mesh.triangles[t]) {
            if (v < 0 || v >= nv) throw MeshError(fmt::format("triangle {} references vertex {}", t, v));
        }
        if (!(mesh.signed_area(t) > 0.0)) {
            throw MeshError(fmt::format("triangle {} has non-positive signed area {}", t, mesh.signed_area(t)));
        }
    }
    for (int v : mesh.boundary_nodes) {
        if (v < 0 || v >= nv) throw MeshError(fmt::format("boundary node {} out of range", v));
        const double r = mesh.vertices[v].norm();
        if (std::abs(r - R) > 1e-9 * R) {
            throw MeshError(fmt::format("boundary node {} lies at radius {} instead of {}", v, r, R));
        }
    }

    const std::size_t nb = mesh.boundary_edges.size();
    if (nb < 3 || nb != mesh.boundary_nodes.size()) {
        throw MeshError("boundary edge count does not match boundary node count");
    }
    std::vector<char> seen(nv, 0);
    for (std::size_t k = 0; k < nb; ++k) {
        const auto& e = mesh.boundary_edges[k];
        const auto& next = mesh.boundary_edges[(k + 1) % nb];
        if (e[1] != next[0]) throw MeshError(fmt::format("boundary edge {} does not connect to its successor", k));
        if (e[0] != mesh.boundary_nodes[k]) throw MeshError(fmt::format("boundary edge {} does not start at boundary node {}", k, k));
        if (seen[e[0]]++) throw MeshError(fmt::format("boundary loop visits vertex {} twice", e[0]));
    }

    // Directed triangle edges as sorted 64-bit keys.
    std::vector<std::int64_t> directed;
    directed.reserve(3 * mesh.triangles.size());
    auto key = [](int a, int b) { return (static_cast<std::int64_t>(a) << 32) | static_cast<std::uint32_t>(b); };
    for (const auto& tri : mesh.triangles) {
        for (int i = 0; i < 3; ++i) directed.push_back(key(tri[i], tri[(i + 1) % 3]));
    }
    std::sort(directed.begin(), directed.end());
    if (auto dup = std::adjacent_find(directed.begin(), directed.end()); dup != directed.end()) {
        throw MeshError(fmt::format("edge ({}, {}) used twice with the same orientation", *dup >> 32, *dup & 0xffffffff));
    }
    auto has = [&](int a, int b) { return std::binary_search(directed.begin(), directed.end(), key(a, b)); };
    for (const auto& e : mesh.boundary_edges) {
        if (!has(e[0], e[1])) {
            throw MeshError(fmt::format("boundary edge ({}, {}) is not a counterclockwise triangle edge", e[0], e[1]));
        }
        if (has(e[1], e[0])) {
            throw MeshError(fmt::format("boundary edge ({}, {}) is shared by two triangles", e[0], e[1]));
        }
    }
    std::size_t unmatched = 0;
    for (std::int64_t k : directed) {
        if (!has(static_cast<int>(k & 0xffffffff), static_cast<int>(k >> 32))) ++unmatched;
    }
    if (unmatched != nb) {
        throw MeshError(fmt::format("{} edges have a single adjacent triangle but the boundary has {}", unmatched, nb));
    }
}

ElectrodeLayout::ElectrodeLayout(int count) : count_(count) {
    if (count < 2 || count % 2 != 0) {
        throw InvalidArgument(fmt::format("electrode count must be even and at least 2, got {}", count));
    }
}

double ElectrodeLayout::width() const { return kTwoPi / count_; }

double ElectrodeLayout::center(int l) const {
    if (l < 1 || l > count_) throw InvalidArgument(fmt::format("electrode index {} out of range 1..{}", l, count_));
    return kTwoPi * l / count_;
}

double ElectrodeLayout::arc_start(int l) const { return normalize_angle(center(l) - 0.5 * width()); }

int ElectrodeLayout::electrode_at(double angle) const {
    const double x = normalize_angle(normalize_angle(angle) + 0.5 * width()) / width();
    // Nodes sitting on an arc boundary up to round-off belong to the arc that
    // starts there.
    const int idx = static_cast<int>(std::floor(x + 1e-9)) % count_;
    return idx == 0 ? count_ : idx;
}

int ElectrodeLayout::opposite(int l) const {
    center(l);
    return (l - 1 + count_ / 2) % count_ + 1;
}

ElectrodeLayout electrode_layout(int count) { return ElectrodeLayout(count); }

std::vector<int> boundary_arc_nodes(const TriMesh& mesh, const ElectrodeLayout& layout, int l) {
    const double start = layout.arc_start(l);
    std::vector<std::pair<double, int>> found;
    for (std::size_t k = 0; k < mesh.boundary_nodes.size(); ++k) {
        const double a = mesh.boundary_angle(k);
        if (layout.electrode_at(a) != l) continue;
        double offset = normalize_angle(a - start);
        // A node exactly on the arc start may normalise to just below 2pi.
        if (offset > kTwoPi - 1e-9) offset = 0.0;
        found.emplace_back(offset, mesh.boundary_nodes[k]);
    }
    std::sort(found.begin(), found.end());
    std::vector<int> out;
    out.reserve(found.size());
    for (const auto& [offset, v] : found) out.push_back(v);
    return out;
}

void write_mesh(std::ostream& out, const TriMesh& mesh) {
    out << fmt::format("vertices {} triangles {} boundary {}\n", mesh.vertices.size(), mesh.triangles.size(),
                       mesh.boundary_nodes.size());
    for (const auto& v : mesh.vertices) out << fmt::format("{:.17g} {:.17g}\n", v.x(), v.y());
    for (const auto& t : mesh.triangles) out << fmt::format("{} {} {}\n", t[0], t[1], t[2]);
    for (int b : mesh.boundary_nodes) out << b << '\n';
}

TriMesh read_mesh(std::istream& in) {
    std::string line;
    int line_no = 0;
    auto next_line = [&]() -> std::istringstream {
        if (!std::getline(in, line)) throw ParseError(line_no + 1, "unexpected end of mesh file");
        ++line_no;
        return std::istringstream(line);
    };

    std::size_t nv = 0, nt = 0, nb = 0;
    {
        auto header = next_line();
        std::string kv, kt, kb;
        if (!(header >> kv >> nv >> kt >> nt >> kb >> nb) || kv != "vertices" || kt != "triangles" || kb != "boundary") {
            throw ParseError(line_no, "expected 'vertices N triangles M boundary K'");
        }
    }
    TriMesh mesh;
    mesh.vertices.resize(nv);
    for (auto& v : mesh.vertices) {
        auto row = next_line();
        double x, y;
        if (!(row >> x >> y)) throw ParseError(line_no, "expected vertex coordinates");
        v = Point(x, y);
    }
    mesh.triangles.resize(nt);
    for (auto& t : mesh.triangles) {
        auto row = next_line();
        if (!(row >> t[0] >> t[1] >> t[2])) throw ParseError(line_no, "expected three vertex indices");
    }
    mesh.boundary_nodes.resize(nb);
    for (auto& b : mesh.boundary_nodes) {
        auto row = next_line();
        if (!(row >> b)) throw ParseError(line_no, "expected a boundary vertex index");
        if (b < 0 || static_cast<std::size_t>(b) >= nv) throw ParseError(line_no, "boundary vertex index out of range");
    }
    mesh.boundary_edges.resize(nb);
    double radius_sum = 0.0;
    for (std::size_t k = 0; k < nb; ++k) {
        mesh.boundary_edges[k] = {mesh.boundary_nodes[k], mesh.boundary_nodes[(k + 1) % nb]};
        radius_sum += mesh.vertices[mesh.boundary_nodes[k]].norm();
    }
    mesh.radius = nb > 0 ? radius_sum / static_cast<double>(nb) : 0.0;
    return mesh;
}

}  // namespace eitml
