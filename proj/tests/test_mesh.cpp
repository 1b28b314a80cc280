#include "eitml/error.hpp"
#include "eitml/mesh.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

using namespace eitml;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent check of the mesh invariants, without validate_mesh.
void check_invariants(const TriMesh& m) {
    for (std::size_t t = 0; t < m.triangle_count(); ++t) {
        const auto& tri = m.triangles[t];
        const Point a = m.vertices[tri[0]], b = m.vertices[tri[1]], c = m.vertices[tri[2]];
        const double area2 = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
        REQUIRE(area2 > 0.0);
    }
    for (int v : m.boundary_nodes) CHECK(std::abs(m.vertices[v].norm() - m.radius) <= 1e-9 * m.radius);

    std::map<std::pair<int, int>, int> uses;
    for (const auto& tri : m.triangles) {
        for (int i = 0; i < 3; ++i) {
            const int a = tri[i], b = tri[(i + 1) % 3];
            ++uses[{std::min(a, b), std::max(a, b)}];
        }
    }
    std::set<std::pair<int, int>> boundary;
    for (const auto& [a, b] : m.boundary_edges) boundary.insert({std::min(a, b), std::max(a, b)});
    for (const auto& [edge, count] : uses) {
        if (boundary.count(edge)) {
            CHECK(count == 1);
        } else {
            CHECK(count == 2);
        }
    }

    // Single closed loop.
    std::map<int, int> next;
    for (const auto& [a, b] : m.boundary_edges) next[a] = b;
    REQUIRE(next.size() == m.boundary_edges.size());
    int v = m.boundary_edges.front()[0];
    std::size_t steps = 0;
    do {
        v = next.at(v);
        ++steps;
    } while (v != m.boundary_edges.front()[0] && steps <= next.size());
    CHECK(steps == m.boundary_edges.size());
}

}  // namespace

TEST_CASE("coarse mesh stays inside the disk") {
    const TriMesh m = generate_disk_mesh(0.28, 0.28, 0);
    for (const auto& p : m.vertices) CHECK(p.norm() <= 0.28 * (1.0 + 1e-12));
    check_invariants(m);
}

TEST_CASE("default mesh invariants and area") {
    const TriMesh m = generate_disk_mesh(kTankRadius, kDefaultMaxEdge, 0);
    check_invariants(m);
    CHECK_NOTHROW(validate_mesh(m));
    const double exact = kPi * 0.28 * 0.28;
    CHECK(std::abs(m.total_area() - exact) / exact <= 0.005);
    // At least 10 boundary nodes per electrode at E = 16.
    const auto layout = electrode_layout(16);
    for (int l = 1; l <= 16; ++l) CHECK(boundary_arc_nodes(m, layout, l).size() >= 10);
}

TEST_CASE("halving the edge length doubles the boundary node count") {
    const TriMesh coarse = generate_disk_mesh(kTankRadius, kDefaultMaxEdge, 3);
    const TriMesh fine = generate_disk_mesh(kTankRadius, kDefaultMaxEdge / 2, 3);
    const double ratio = static_cast<double>(fine.boundary_nodes.size()) / coarse.boundary_nodes.size();
    CHECK(ratio >= 1.6);
    CHECK(ratio <= 2.4);
}

TEST_CASE("refinement never increases the largest circumradius") {
    double previous = std::numeric_limits<double>::infinity();
    for (double h : {0.08, 0.04, 0.02, 0.01}) {
        const TriMesh m = generate_disk_mesh(kTankRadius, h, 11);
        check_invariants(m);
        CHECK(m.max_circumradius() <= previous);
        previous = m.max_circumradius();
    }
}

TEST_CASE("meshes are deterministic in the seed") {
    const TriMesh a = generate_disk_mesh(kTankRadius, 0.02, 5);
    const TriMesh b = generate_disk_mesh(kTankRadius, 0.02, 5);
    REQUIRE(a.vertices.size() == b.vertices.size());
    for (std::size_t i = 0; i < a.vertices.size(); ++i) CHECK(a.vertices[i] == b.vertices[i]);
    CHECK(a.triangles == b.triangles);
}

TEST_CASE("local refinement keeps the mesh valid") {
    MeshOptions opt;
    opt.refine = {{Point(0.1, -0.05), 0.0388}, {Point(-0.12, 0.08), 0.0097}};
    const TriMesh m = generate_disk_mesh(opt);
    check_invariants(m);
    const TriMesh plain = generate_disk_mesh(kTankRadius, kDefaultMaxEdge, 0);
    CHECK(m.triangle_count() > plain.triangle_count());
}

TEST_CASE("refinement leaves the triangles at the boundary untouched") {
    using Corners = std::array<std::array<double, 2>, 3>;
    auto boundary_layer = [](const TriMesh& m) {
        std::set<Corners> out;
        const std::set<int> rim(m.boundary_nodes.begin(), m.boundary_nodes.end());
        for (const auto& tri : m.triangles) {
            if (!rim.count(tri[0]) && !rim.count(tri[1]) && !rim.count(tri[2])) continue;
            Corners c;
            for (int k = 0; k < 3; ++k) c[k] = {m.vertices[tri[k]].x(), m.vertices[tri[k]].y()};
            std::sort(c.begin(), c.end());
            out.insert(c);
        }
        return out;
    };
    MeshOptions opt;
    // Inclusion at the 10 mm clearance limit next to the boundary.
    const double r = 0.0097;
    opt.refine = {{Point(kTankRadius - r - 0.010, 0.0), r}};
    const TriMesh refined = generate_disk_mesh(opt);
    check_invariants(refined);
    CHECK(boundary_layer(refined) == boundary_layer(generate_disk_mesh(kTankRadius, kDefaultMaxEdge, 0)));
}

TEST_CASE("invalid mesh parameters are rejected") {
    CHECK_THROWS_AS(generate_disk_mesh(0.0, 0.01, 0), InvalidArgument);
    CHECK_THROWS_AS(generate_disk_mesh(-1.0, 0.01, 0), InvalidArgument);
    CHECK_THROWS_AS(generate_disk_mesh(0.28, 0.0, 0), InvalidArgument);
    CHECK_THROWS_AS(generate_disk_mesh(0.28, -0.1, 0), InvalidArgument);
}

TEST_CASE("validate_mesh reports a flipped triangle") {
    TriMesh m = generate_disk_mesh(kTankRadius, 0.05, 0);
    std::swap(m.triangles[0][0], m.triangles[0][1]);
    CHECK_THROWS_AS(validate_mesh(m), MeshError);
}

TEST_CASE("electrode layout geometry") {
    const auto l16 = electrode_layout(16);
    CHECK(l16.center(4) == doctest::Approx(kPi / 2).epsilon(1e-15));
    CHECK(l16.width() == doctest::Approx(2 * kPi / 16).epsilon(1e-15));
    double total = 0.0;
    for (int l = 1; l <= 16; ++l) total += l16.width();
    CHECK(total == doctest::Approx(2 * kPi).epsilon(1e-14));
    CHECK(l16.opposite(1) == 9);
    CHECK(l16.opposite(12) == 4);

    const auto l2 = electrode_layout(2);
    CHECK(l2.width() == doctest::Approx(kPi));
    CHECK(l2.electrode_at(0.0) == 2);
    CHECK(l2.electrode_at(kPi) == 1);
    CHECK(l2.electrode_at(kPi / 2 + 1e-6) == 1);
    CHECK(l2.electrode_at(3 * kPi / 2 + 1e-6) == 2);

    CHECK_THROWS_AS(electrode_layout(3), InvalidArgument);
    CHECK_THROWS_AS(electrode_layout(0), InvalidArgument);
    CHECK_THROWS_AS(l16.center(17), InvalidArgument);
}

TEST_CASE("arc node partition") {
    MeshOptions opt;
    opt.boundary_node_count = 160;
    const TriMesh m = generate_disk_mesh(opt);
    REQUIRE(m.boundary_nodes.size() == 160);
    const auto layout = electrode_layout(16);
    std::vector<int> all;
    for (int l = 1; l <= 16; ++l) {
        const auto nodes = boundary_arc_nodes(m, layout, l);
        CHECK(nodes.size() == 10);
        // Counterclockwise order within the arc.
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            const Point& a = m.vertices[nodes[i - 1]];
            const Point& b = m.vertices[nodes[i]];
            CHECK(a.x() * b.y() - a.y() * b.x() > 0.0);
        }
        all.insert(all.end(), nodes.begin(), nodes.end());
    }
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    auto expected = m.boundary_nodes;
    std::sort(expected.begin(), expected.end());
    CHECK(all == expected);
    CHECK_THROWS_AS(boundary_arc_nodes(m, layout, 0), InvalidArgument);
}

TEST_CASE("node on an arc boundary belongs to exactly one arc") {
    const auto layout = electrode_layout(16);
    const double edge = layout.arc_start(3);
    int owners = 0;
    for (int l = 1; l <= 16; ++l) owners += layout.electrode_at(edge) == l;
    CHECK(owners == 1);
    CHECK(layout.electrode_at(edge) == 3);
}

TEST_CASE("mesh text round trip") {
    const TriMesh m = generate_disk_mesh(kTankRadius, 0.04, 2);
    std::stringstream io;
    write_mesh(io, m);
    CHECK(io.str().rfind("vertices ", 0) == 0);
    const TriMesh back = read_mesh(io);
    REQUIRE(back.vertices.size() == m.vertices.size());
    for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK(back.vertices[i] == m.vertices[i]);
    CHECK(back.triangles == m.triangles);
    CHECK(back.boundary_nodes == m.boundary_nodes);
    CHECK_NOTHROW(validate_mesh(back));
}
