#include "delaunay.hpp"

#include "eitml/error.hpp"

#include <Eigen/Geometry>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace eitml::detail {

double orient2d(const Point& a, const Point& b, const Point& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

double incircle(const Point& a, const Point& b, const Point& c, const Point& d) {
    const double adx = a.x() - d.x(), ady = a.y() - d.y();
    const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
    const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
    const double ad = adx * adx + ady * ady;
    const double bd = bdx * bdx + bdy * bdy;
    const double cd = cdx * cdx + cdy * cdy;
    return ad * (bdx * cdy - cdx * bdy) + bd * (cdx * ady - adx * cdy) + cd * (adx * bdy - bdx * ady);
}

namespace {

struct Triangle {
    std::array<int, 3> v{};
    // nb[i] is the triangle across the edge opposite v[i]; -1 on the hull.
    std::array<int, 3> nb{-1, -1, -1};
    bool alive = true;
};

struct CavityEdge {
    int a;
    int b;
    int outside;
    int outside_slot;
};

class Triangulator {
public:
    explicit Triangulator(std::span<const Point> input) : points_(input.begin(), input.end()) {
        const std::size_t n = points_.size();
        Eigen::AlignedBox2d box;
        for (const auto& p : points_) box.extend(p);
        const Point mid = box.center();
        const double span = std::max(box.sizes().maxCoeff(), 1e-12);
        const double big = 50.0 * span;
        points_.push_back(mid + Point(-big, -big));
        points_.push_back(mid + Point(big, -big));
        points_.push_back(mid + Point(0.0, big));
        super_ = static_cast<int>(n);
        tris_.push_back(Triangle{{super_, super_ + 1, super_ + 2}, {-1, -1, -1}, true});
        marks_.push_back(0);
    }

    void insert_all() {
        const std::size_t n = static_cast<std::size_t>(super_);
        // Snake order over a coarse grid keeps consecutive points close so
        // the walk from the last triangle stays short.
        const int cells = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(n) / 4.0)));
        Eigen::AlignedBox2d box;
        for (std::size_t i = 0; i < n; ++i) box.extend(points_[i]);
        const Point lo = box.min();
        const Point size = box.sizes().cwiseMax(1e-12);
        std::vector<std::pair<long, int>> order(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Point q = (points_[i] - lo).cwiseQuotient(size);
            const int cy = std::min(cells - 1, static_cast<int>(q.y() * cells));
            int cx = std::min(cells - 1, static_cast<int>(q.x() * cells));
            if (cy % 2 == 1) cx = cells - 1 - cx;
            order[i] = {static_cast<long>(cy) * cells + cx, static_cast<int>(i)};
        }
        std::stable_sort(order.begin(), order.end(),
                         [](const auto& l, const auto& r) { return l.first < r.first; });
        for (const auto& [cell, id] : order) insert(id);
    }

    std::vector<std::array<int, 3>> result() const {
        std::vector<std::array<int, 3>> out;
        out.reserve(tris_.size());
        for (const auto& t : tris_) {
            if (!t.alive) continue;
            if (t.v[0] >= super_ || t.v[1] >= super_ || t.v[2] >= super_) continue;
            out.push_back(t.v);
        }
        return out;
    }

private:
    int locate(const Point& p) const {
        int t = last_;
        std::size_t steps = 0;
        const std::size_t limit = 4 * tris_.size() + 64;
        while (steps++ < limit) {
            const Triangle& tri = tris_[t];
            int next = -1;
            for (int k = 0; k < 3; ++k) {
                const int i = (k + static_cast<int>(steps)) % 3;
                const Point& a = points_[tri.v[(i + 1) % 3]];
                const Point& b = points_[tri.v[(i + 2) % 3]];
                if (orient2d(a, b, p) < 0.0) {
                    next = tri.nb[i];
                    break;
                }
            }
            if (next == -1) return t;
            t = next;
        }
        // Walk failed (degenerate input); fall back to a linear scan.
        for (std::size_t i = 0; i < tris_.size(); ++i) {
            const Triangle& tri = tris_[i];
            if (!tri.alive) continue;
            bool inside = true;
            for (int k = 0; k < 3 && inside; ++k) {
                inside = orient2d(points_[tri.v[(k + 1) % 3]], points_[tri.v[(k + 2) % 3]], p) >= 0.0;
            }
            if (inside) return static_cast<int>(i);
        }
        throw MeshError("point location failed during triangulation");
    }

    bool in_circumcircle(int t, const Point& p) const {
        const Triangle& tri = tris_[t];
        return incircle(points_[tri.v[0]], points_[tri.v[1]], points_[tri.v[2]], p) > 0.0;
    }

    void insert(int id) {
        const Point& p = points_[id];
        const int start = locate(p);

        ++stamp_;
        cavity_.clear();
        cavity_.push_back(start);
        marks_[start] = stamp_;
        for (std::size_t head = 0; head < cavity_.size(); ++head) {
            const Triangle& tri = tris_[cavity_[head]];
            for (int i = 0; i < 3; ++i) {
                const int n = tri.nb[i];
                if (n < 0 || marks_[n] == stamp_ || marks_[n] == -stamp_) continue;
                if (in_circumcircle(n, p)) {
                    marks_[n] = stamp_;
                    cavity_.push_back(n);
                } else {
                    marks_[n] = -stamp_;
                }
            }
        }

        // The cavity must be star-shaped from p. Round-off on (near)
        // cocircular points can break that; drop offending triangles.
        for (;;) {
            edges_.clear();
            int offender = -1;
            for (int t : cavity_) {
                const Triangle& tri = tris_[t];
                for (int i = 0; i < 3; ++i) {
                    const int n = tri.nb[i];
                    if (n >= 0 && marks_[n] == stamp_) continue;
                    const int a = tri.v[(i + 1) % 3];
                    const int b = tri.v[(i + 2) % 3];
                    if (orient2d(points_[a], points_[b], p) <= 0.0 && t != start) {
                        offender = t;
                        break;
                    }
                    int slot = -1;
                    if (n >= 0) {
                        for (int k = 0; k < 3; ++k) {
                            if (tris_[n].nb[k] == t) slot = k;
                        }
                    }
                    edges_.push_back({a, b, n, slot});
                }
                if (offender >= 0) break;
            }
            if (offender < 0) break;
            marks_[offender] = -stamp_;
            cavity_.erase(std::find(cavity_.begin(), cavity_.end(), offender));
        }

        for (int t : cavity_) tris_[t].alive = false;

        new_ids_.resize(edges_.size());
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            int slot_id;
            if (e < cavity_.size()) {
                slot_id = cavity_[e];
            } else if (!free_.empty()) {
                slot_id = free_.back();
                free_.pop_back();
            } else {
                slot_id = static_cast<int>(tris_.size());
                tris_.emplace_back();
                marks_.push_back(0);
            }
            new_ids_[e] = slot_id;
        }
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            const CavityEdge& ce = edges_[e];
            Triangle& tri = tris_[new_ids_[e]];
            tri.alive = true;
            tri.v = {ce.a, ce.b, id};
            tri.nb = {-1, -1, ce.outside};
            marks_[new_ids_[e]] = 0;
            if (ce.outside >= 0) tris_[ce.outside].nb[ce.outside_slot] = new_ids_[e];
        }
        // Link the fan: edge (b, p) of triangle (a, b, p) is shared with the
        // triangle that starts at b.
        for (std::size_t e = 0; e < edges_.size(); ++e) {
            for (std::size_t f = 0; f < edges_.size(); ++f) {
                if (e == f) continue;
                if (edges_[f].a == edges_[e].b) tris_[new_ids_[e]].nb[0] = new_ids_[f];
                if (edges_[f].b == edges_[e].a) tris_[new_ids_[e]].nb[1] = new_ids_[f];
            }
        }
        // Cavity slots beyond the new triangles (only after offender removal).
        for (std::size_t k = edges_.size(); k < cavity_.size(); ++k) free_.push_back(cavity_[k]);
        last_ = new_ids_.front();
    }

    std::vector<Point> points_;
    std::vector<Triangle> tris_;
    std::vector<int> marks_;
    std::vector<int> cavity_;
    std::vector<CavityEdge> edges_;
    std::vector<int> new_ids_;
    std::vector<int> free_;
    int super_ = 0;
    int last_ = 0;
    int stamp_ = 0;
};

}  // namespace

std::vector<std::array<int, 3>> delaunay_triangulate(std::span<const Point> points) {
    if (points.size() < 3) throw MeshError("triangulation needs at least three points");
    Triangulator tri(points);
    tri.insert_all();
    return tri.result();
}

}  // namespace eitml::detail
