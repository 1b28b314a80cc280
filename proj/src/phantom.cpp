#include "eitml/phantom.hpp"

#include "eitml/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace eitml {

namespace {

constexpr std::array<Task, 8> kTasks = {
    Task::Presence,       Task::CountSmall,          Task::CountLarge,    Task::Radii,
    Task::IsoVsAnisoBoth, Task::IsoVsAnisoInclusion, Task::DiagVsOffdiag, Task::IsoVsSpatial,
};

std::string_view kind_name(TensorKind kind) {
    switch (kind) {
        case TensorKind::IsoConst: return "iso_const";
        case TensorKind::DiagConst: return "diag_const";
        case TensorKind::SymConst: return "sym_const";
        case TensorKind::SpatialDiag: return "spatial_diag";
    }
    return "unknown";
}

TensorKind parse_kind(std::string_view name) {
    for (auto kind : {TensorKind::IsoConst, TensorKind::DiagConst, TensorKind::SymConst, TensorKind::SpatialDiag}) {
        if (kind_name(kind) == name) return kind;
    }
    throw InvalidArgument(fmt::format("unknown tensor kind '{}'", name));
}

std::pair<double, double> eigenvalues(const Tensor2& t) {
    if (t(0, 1) == 0.0 && t(1, 0) == 0.0) return std::minmax(t(0, 0), t(1, 1));
    const double mean = 0.5 * (t(0, 0) + t(1, 1));
    const double half_gap = std::hypot(0.5 * (t(0, 0) - t(1, 1)), 0.5 * (t(0, 1) + t(1, 0)));
    return {mean - half_gap, mean + half_gap};
}

struct ScenarioDraw {
    std::mt19937_64 rng;

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

    double inclusion_lambda() { return uniform(8.0, 10.0); }

    std::pair<double, double> diag_pair() { return {integer(2, 10), integer(2, 10)}; }

    std::array<double, 3> sym_triple() {
        for (;;) {
            const double a = integer(6, 20);
            const double b = integer(6, 20);
            const double c = integer(1, 5);
            if (a * b - c * c > 0.0 && a + b > 0.0) return {a, b, c};
        }
    }
};

/// Places inclusions uniformly over admissible centers with the wall and
/// spacing margins. Fills `centers` in the order of `radii`.
std::vector<Point> place(std::span<const double> radii, double tank_radius, std::mt19937_64& rng) {
    constexpr int kPointTries = 2000;
    constexpr int kRestarts = 50;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int restart = 0; restart < kRestarts; ++restart) {
        std::vector<Point> centers;
        for (std::size_t i = 0; i < radii.size(); ++i) {
            const double reach = tank_radius - radii[i] - kPlacementMargin;
            if (reach < 0.0) {
                throw PlacementError(fmt::format("inclusion of radius {} m does not fit in a tank of radius {} m",
                                                 radii[i], tank_radius));
            }
            bool placed = false;
            for (int attempt = 0; attempt < kPointTries && !placed; ++attempt) {
                const Point c(reach * unit(rng), reach * unit(rng));
                if (c.norm() > reach) continue;
                placed = std::all_of(centers.begin(), centers.end(), [&](const Point& other) {
                    const std::size_t j = static_cast<std::size_t>(&other - centers.data());
                    return (c - other).norm() >= radii[i] + radii[j] + kPlacementMargin;
                });
                if (placed) centers.push_back(c);
            }
            if (!placed) break;
        }
        if (centers.size() == radii.size()) return centers;
    }
    throw PlacementError(fmt::format("could not place {} inclusions without overlap after {} restarts",
                                     radii.size(), kRestarts));
}

void check_label(Task task, int label) {
    if (label < 1 || label > class_count(task)) {
        throw InvalidArgument(fmt::format("label {} is not a class of task {} (1..{})", label, task_name(task),
                                          class_count(task)));
    }
}

}  // namespace

TensorSpec TensorSpec::iso(double lambda) {
    TensorSpec t;
    t.kind = TensorKind::IsoConst;
    t.scale = lambda;
    t.check();
    return t;
}

TensorSpec TensorSpec::diag(double mu, double a, double b) {
    TensorSpec t;
    t.kind = TensorKind::DiagConst;
    t.scale = mu;
    t.a = a;
    t.b = b;
    t.check();
    return t;
}

TensorSpec TensorSpec::sym(double mu, double a, double b, double c) {
    TensorSpec t;
    t.kind = TensorKind::SymConst;
    t.scale = mu;
    t.a = a;
    t.b = b;
    t.c = c;
    t.check();
    return t;
}

TensorSpec TensorSpec::spatial_diag(double floor) {
    TensorSpec t;
    t.kind = TensorKind::SpatialDiag;
    t.floor = floor;
    t.check();
    return t;
}

void TensorSpec::check() const {
    switch (kind) {
        case TensorKind::IsoConst:
            if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument(fmt::format("isotropic conductivity must be positive, got {}", scale));
            break;
        case TensorKind::DiagConst:
            if (!(scale > 0.0) || !(a > 0.0) || !(b > 0.0)) {
                throw InvalidArgument(fmt::format("diagonal tensor needs positive mu, a, b; got {}, {}, {}", scale, a, b));
            }
            break;
        case TensorKind::SymConst:
            if (!(scale > 0.0) || !(a > 0.0) || !(a * b - c * c > 0.0)) {
                throw InvalidArgument(fmt::format("[[{0}, {2}], [{2}, {1}]] is not positive definite", a, b, c));
            }
            break;
        case TensorKind::SpatialDiag:
            if (!(floor > 0.0)) throw InvalidArgument("spatial tensor floor must be positive");
            break;
    }
}

Tensor2 TensorSpec::at(const Point& p) const {
    Tensor2 t;
    switch (kind) {
        case TensorKind::IsoConst: t << scale, 0.0, 0.0, scale; break;
        case TensorKind::DiagConst: t << scale * a, 0.0, 0.0, scale * b; break;
        case TensorKind::SymConst: t << scale * a, scale * c, scale * c, scale * b; break;
        case TensorKind::SpatialDiag:
            t << std::max(p.x() * p.x(), floor), 0.0, 0.0, std::max(p.y() * p.y(), floor);
            break;
    }
    return t;
}

std::string_view task_name(Task task) {
    switch (task) {
        case Task::Presence: return "presence";
        case Task::CountSmall: return "count_small";
        case Task::CountLarge: return "count_large";
        case Task::Radii: return "radii";
        case Task::IsoVsAnisoBoth: return "iso_vs_aniso_both";
        case Task::IsoVsAnisoInclusion: return "iso_vs_aniso_inclusion";
        case Task::DiagVsOffdiag: return "diag_vs_offdiag";
        case Task::IsoVsSpatial: return "iso_vs_spatial";
    }
    return "unknown";
}

Task parse_task(std::string_view name) {
    for (Task t : kTasks) {
        if (task_name(t) == name) return t;
    }
    throw InvalidArgument(fmt::format("unknown task '{}'", name));
}

int class_count(Task task) {
    switch (task) {
        case Task::CountSmall:
        case Task::CountLarge: return 3;
        case Task::Radii: return 4;
        default: return 2;
    }
}

std::span<const Task> all_tasks() { return kTasks; }

Tensor2 evaluate_tensor(const ConductivitySpec& spec, const Point& p) {
    const double r = p.norm();
    if (!(r <= spec.tank_radius * (1.0 + 1e-12))) {
        throw InvalidArgument(fmt::format("point ({}, {}) lies outside the tank of radius {}", p.x(), p.y(), spec.tank_radius));
    }
    // Later inclusions are innermost; inclusions never overlap when sampled.
    for (auto it = spec.inclusions.rbegin(); it != spec.inclusions.rend(); ++it) {
        if (it->contains(p)) return it->conductivity.at(p);
    }
    return spec.tank.at(p);
}

ConductivitySpec sample_scenario(Task task, int label, std::uint64_t seed, std::optional<int> radius_class,
                                 double tank_radius) {
    check_label(task, label);
    if (radius_class && (*radius_class < 1 || *radius_class > 4)) {
        throw InvalidArgument(fmt::format("radius class {} out of range 1..4", *radius_class));
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
    ScenarioDraw draw{std::mt19937_64(seq)};
    auto pick_radius = [&]() {
        const int cls = radius_class ? *radius_class : draw.integer(1, 4);
        return kInclusionRadii[cls - 1];
    };

    ConductivitySpec spec;
    spec.label = label;
    spec.tank_radius = tank_radius;
    spec.tank = TensorSpec::iso(kTankConductivity);

    std::vector<double> radii;
    std::vector<TensorSpec> tensors;
    auto add = [&](double radius, TensorSpec tensor) {
        radii.push_back(radius);
        tensors.push_back(tensor);
    };

    switch (task) {
        case Task::Presence:
            if (label == 2) {
                const double r = pick_radius();
                add(r, TensorSpec::iso(draw.inclusion_lambda()));
            }
            break;
        case Task::CountSmall:
        case Task::CountLarge: {
            const double r = task == Task::CountSmall ? kInclusionRadii[0] : kInclusionRadii[1];
            for (int i = 0; i < label; ++i) add(r, TensorSpec::iso(draw.inclusion_lambda()));
            break;
        }
        case Task::Radii:
            add(kInclusionRadii[label - 1], TensorSpec::iso(draw.inclusion_lambda()));
            break;
        case Task::IsoVsAnisoBoth: {
            const double r = pick_radius();
            if (label == 1) {
                add(r, TensorSpec::iso(kInclusionConductivity));
            } else {
                const auto [a, b] = draw.diag_pair();
                spec.tank = TensorSpec::diag(kTankConductivity, a, b);
                add(r, TensorSpec::diag(kInclusionConductivity, a, b));
            }
            break;
        }
        case Task::IsoVsAnisoInclusion: {
            const double r = pick_radius();
            if (label == 1) {
                add(r, TensorSpec::iso(kInclusionConductivity));
            } else {
                const auto [a, b] = draw.diag_pair();
                add(r, TensorSpec::diag(kInclusionConductivity, a, b));
            }
            break;
        }
        case Task::DiagVsOffdiag: {
            const double r = pick_radius();
            if (label == 1) {
                const auto [a, b] = draw.diag_pair();
                spec.tank = TensorSpec::diag(kTankConductivity, a, b);
                add(r, TensorSpec::diag(kInclusionConductivity, a, b));
            } else {
                const auto [a, b, c] = draw.sym_triple();
                spec.tank = TensorSpec::sym(kTankConductivity, a, b, c);
                add(r, TensorSpec::sym(kInclusionConductivity, a, b, c));
            }
            break;
        }
        case Task::IsoVsSpatial: {
            const double r = pick_radius();
            add(r, label == 1 ? TensorSpec::iso(kInclusionConductivity) : TensorSpec::spatial_diag());
            break;
        }
    }

    const auto centers = place(radii, tank_radius, draw.rng);
    for (std::size_t i = 0; i < radii.size(); ++i) {
        spec.inclusions.push_back(Inclusion{centers[i], radii[i], tensors[i]});
    }
    return spec;
}

EllipticityBounds verify_ellipticity(const ConductivitySpec& spec, std::span<const Point> points) {
    if (points.empty()) throw InvalidArgument("ellipticity check needs at least one point");
    EllipticityBounds bounds{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& p : points) {
        const Tensor2 t = evaluate_tensor(spec, p);
        const auto [lo, hi] = eigenvalues(t);
        if (!(lo > 0.0) || std::abs(t(0, 1) - t(1, 0)) > 1e-12 * std::abs(hi)) {
            throw EllipticityError(p.x(), p.y(),
                                   fmt::format("conductivity at ({}, {}) is not symmetric positive definite "
                                               "(smallest eigenvalue {})", p.x(), p.y(), lo));
        }
        bounds.min_eigenvalue = std::min(bounds.min_eigenvalue, lo);
        bounds.max_eigenvalue = std::max(bounds.max_eigenvalue, hi);
    }
    return bounds;
}

std::vector<RefinementDisk> refinement_for(const ConductivitySpec& spec) {
    std::vector<RefinementDisk> out;
    out.reserve(spec.inclusions.size());
    for (const auto& inc : spec.inclusions) out.push_back({inc.center, inc.radius});
    return out;
}

nlohmann::json to_json(const TensorSpec& t) {
    nlohmann::json j{{"kind", kind_name(t.kind)}};
    switch (t.kind) {
        case TensorKind::IsoConst: j["lambda"] = t.scale; break;
        case TensorKind::DiagConst: j["mu"] = t.scale; j["a"] = t.a; j["b"] = t.b; break;
        case TensorKind::SymConst: j["mu"] = t.scale; j["a"] = t.a; j["b"] = t.b; j["c"] = t.c; break;
        case TensorKind::SpatialDiag: j["floor"] = t.floor; break;
    }
    return j;
}

nlohmann::json to_json(const ConductivitySpec& spec) {
    nlohmann::json inclusions = nlohmann::json::array();
    for (const auto& inc : spec.inclusions) {
        inclusions.push_back({{"center", {inc.center.x(), inc.center.y()}},
                              {"radius", inc.radius},
                              {"conductivity", to_json(inc.conductivity)}});
    }
    return {{"label", spec.label},
            {"tank_radius", spec.tank_radius},
            {"tank", to_json(spec.tank)},
            {"inclusions", inclusions}};
}

TensorSpec tensor_from_json(const nlohmann::json& j) {
    switch (parse_kind(j.at("kind").get<std::string>())) {
        case TensorKind::IsoConst: return TensorSpec::iso(j.at("lambda").get<double>());
        case TensorKind::DiagConst:
            return TensorSpec::diag(j.at("mu").get<double>(), j.at("a").get<double>(), j.at("b").get<double>());
        case TensorKind::SymConst:
            return TensorSpec::sym(j.at("mu").get<double>(), j.at("a").get<double>(), j.at("b").get<double>(),
                                   j.at("c").get<double>());
        case TensorKind::SpatialDiag: return TensorSpec::spatial_diag(j.value("floor", kSpatialFloor));
    }
    throw InvalidArgument("unreachable tensor kind");
}

ConductivitySpec spec_from_json(const nlohmann::json& j) {
    ConductivitySpec spec;
    spec.label = j.value("label", 0);
    spec.tank_radius = j.value("tank_radius", kTankRadius);
    spec.tank = tensor_from_json(j.at("tank"));
    for (const auto& inc : j.at("inclusions")) {
        const auto& c = inc.at("center");
        spec.inclusions.push_back(Inclusion{Point(c.at(0).get<double>(), c.at(1).get<double>()),
                                            inc.at("radius").get<double>(),
                                            tensor_from_json(inc.at("conductivity"))});
    }
    return spec;
}

}  // namespace eitml
