#include "eitml/dataset.hpp"

#include "eitml/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace eitml {

namespace {

bool free_radius(Task task, int label) {
    switch (task) {
        case Task::Presence: return label == 2;
        case Task::CountSmall:
        case Task::CountLarge:
        case Task::Radii: return false;
        default: return true;
    }
}

Sample simulate_one(const DatasetConfig& cfg, const ElectrodeLayout& layout,
                    std::span<const VoltagePattern> patterns, int label, int radius_class,
                    std::uint64_t sample_seed, int attempt) {
    const std::uint64_t scenario_seed = derive_seed(sample_seed, attempt, 1);
    const std::uint64_t noise_seed = derive_seed(sample_seed, attempt, 2);
    const ConductivitySpec spec =
        sample_scenario(cfg.task, label, scenario_seed,
                        free_radius(cfg.task, label) ? std::optional<int>(radius_class) : std::nullopt,
                        cfg.tank_radius);
    MeshOptions mesh_options;
    mesh_options.radius = cfg.tank_radius;
    mesh_options.target_max_edge = cfg.target_max_edge;
    mesh_options.seed = cfg.base_seed;
    mesh_options.refine = refinement_for(spec);
    const TriMesh mesh = generate_disk_mesh(mesh_options);
    DNMatrix dn = dn_matrix(mesh, spec, layout, patterns);
    if (cfg.noise_scale > 0.0) dn = add_noise(dn, noise_seed, cfg.noise_scale);

    Sample s;
    s.features = dn.flatten();
    s.label = label;
    s.provenance = {{"seed", sample_seed},
                    {"attempt", attempt},
                    {"scenario_seed", scenario_seed},
                    {"noise_seed", noise_seed},
                    {"mesh_vertices", mesh.vertex_count()},
                    {"scenario", to_json(spec)}};
    return s;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
        out.push_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <class T>
bool parse_number(std::string_view s, T& value) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::size_t Manifest::total() const {
    std::size_t n = 0;
    for (const auto& c : classes) n += static_cast<std::size_t>(c.count);
    return n;
}

nlohmann::json to_json(const Manifest& m) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : m.classes) classes.push_back({{"label", c.label}, {"count", c.count}});
    return {{"format_version", m.format_version},
            {"task", m.task},
            {"electrode_count", m.electrode_count},
            {"measurement_count", m.measurement_count},
            {"pattern", pattern_name(m.pattern)},
            {"noise_scale", m.noise_scale},
            {"base_seed", m.base_seed},
            {"classes", classes},
            {"mesh", {{"target_max_edge", m.target_max_edge}, {"tank_radius", m.tank_radius}}}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kDatasetFormatVersion) {
        throw ParseError(0, fmt::format("unsupported dataset format version {}", m.format_version));
    }
    m.task = j.at("task").get<std::string>();
    m.electrode_count = j.at("electrode_count").get<int>();
    m.measurement_count = j.at("measurement_count").get<int>();
    m.pattern = parse_pattern(j.at("pattern").get<std::string>());
    m.noise_scale = j.at("noise_scale").get<double>();
    m.base_seed = j.at("base_seed").get<std::uint64_t>();
    for (const auto& c : j.at("classes")) m.classes.push_back({c.at("label").get<int>(), c.at("count").get<int>()});
    if (j.contains("mesh")) {
        m.target_max_edge = j["mesh"].value("target_max_edge", kDefaultMaxEdge);
        m.tank_radius = j["mesh"].value("tank_radius", kTankRadius);
    }
    return m;
}

Eigen::MatrixXd Dataset::features(std::span<const std::size_t> indices) const {
    const Eigen::Index d = static_cast<Eigen::Index>(manifest.feature_length());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(indices.size()), d);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& f = samples.at(indices[r]).features;
        x.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), d);
    }
    return x;
}

std::vector<int> Dataset::labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(samples.at(i).label);
    return out;
}

std::vector<int> Dataset::class_labels() const {
    std::vector<int> out;
    for (const auto& c : manifest.classes) out.push_back(c.label);
    return out;
}

std::uint64_t derive_seed(std::uint64_t sample_seed, std::uint64_t attempt, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(sample_seed), static_cast<std::uint32_t>(sample_seed >> 32),
                      static_cast<std::uint32_t>(attempt), static_cast<std::uint32_t>(stream)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Dataset generate_dataset(const DatasetConfig& cfg) {
    const int classes = class_count(cfg.task);
    if (static_cast<int>(cfg.counts.size()) != classes) {
        throw InvalidArgument(fmt::format("task {} has {} classes but {} counts were given", task_name(cfg.task), classes,
                                          cfg.counts.size()));
    }
    for (int c : cfg.counts) {
        if (c < 1) throw InvalidArgument(fmt::format("per-class counts must be >= 1, got {}", c));
    }
    const ElectrodeLayout layout = electrode_layout(cfg.electrode_count);
    if (cfg.measurement_count < 1 || cfg.measurement_count > cfg.electrode_count) {
        throw InvalidArgument(fmt::format("measurement count {} must lie in 1..{}", cfg.measurement_count, cfg.electrode_count));
    }
    if (cfg.threads < 1) throw InvalidArgument("thread count must be >= 1");
    const auto patterns = standard_patterns(cfg.pattern, cfg.measurement_count);

    Dataset ds;
    ds.manifest.task = std::string(task_name(cfg.task));
    ds.manifest.electrode_count = cfg.electrode_count;
    ds.manifest.measurement_count = cfg.measurement_count;
    ds.manifest.pattern = cfg.pattern;
    ds.manifest.noise_scale = cfg.noise_scale;
    ds.manifest.base_seed = cfg.base_seed;
    ds.manifest.target_max_edge = cfg.target_max_edge;
    ds.manifest.tank_radius = cfg.tank_radius;

    std::vector<std::pair<int, int>> plan;  // (label, radius class)
    for (int label = 1; label <= classes; ++label) {
        ds.manifest.classes.push_back({label, cfg.counts[label - 1]});
        for (int i = 0; i < cfg.counts[label - 1]; ++i) plan.emplace_back(label, i % 4 + 1);
    }
    const std::size_t n = plan.size();
    ds.samples.resize(n);
    std::vector<std::vector<Regeneration>> logs(cfg.threads);
    std::vector<std::exception_ptr> errors(cfg.threads);

    auto work = [&](int worker, std::size_t begin, std::size_t end) {
        try {
            for (std::size_t i = begin; i < end; ++i) {
                const std::uint64_t seed = cfg.base_seed + i;
                for (int attempt = 0;; ++attempt) {
                    try {
                        ds.samples[i] = simulate_one(cfg, layout, patterns, plan[i].first, plan[i].second, seed, attempt);
                        ds.samples[i].provenance["index"] = i;
                        break;
                    } catch (const Error& e) {
                        if (attempt + 1 >= cfg.max_attempts) {
                            throw Error(e.kind(), fmt::format("sample {} failed after {} attempts: {}", i, attempt + 1, e.what()));
                        }
                        logs[worker].push_back({i, derive_seed(seed, attempt, 1), derive_seed(seed, attempt + 1, 1), e.what()});
                    }
                }
            }
        } catch (...) {
            errors[worker] = std::current_exception();
        }
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), std::max<std::size_t>(n, 1));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        if (w + 1 == workers) {
            work(static_cast<int>(w), begin, end);
        } else {
            pool.emplace_back(work, static_cast<int>(w), begin, end);
        }
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    for (const auto& log : logs) ds.regenerations.insert(ds.regenerations.end(), log.begin(), log.end());
    std::sort(ds.regenerations.begin(), ds.regenerations.end(),
              [](const Regeneration& a, const Regeneration& b) { return a.index < b.index; });
    for (const auto& r : ds.regenerations) {
        fmt::print(stderr, "regenerated sample {}: seed {} failed ({}), retried with seed {}\n", r.index, r.failed_seed,
                   r.error, r.next_seed);
    }
    return ds;
}

std::string dataset_digest(const Dataset& dataset) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& s : dataset.samples) {
        mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(s.label)));
        mix(s.features.size());
        for (double v : s.features) mix(std::bit_cast<std::uint64_t>(v));
    }
    return fmt::format("{:016x}", h);
}

Dataset leading_block(const Dataset& dataset, int m) {
    const int full = dataset.manifest.measurement_count;
    if (m < 1 || m > full) throw InvalidArgument(fmt::format("cannot take a {0}x{0} block of {1}x{1} features", m, full));
    Dataset out;
    out.manifest = dataset.manifest;
    out.manifest.measurement_count = m;
    out.regenerations = dataset.regenerations;
    out.samples.reserve(dataset.size());
    for (const auto& s : dataset.samples) {
        Sample t;
        t.label = s.label;
        t.provenance = s.provenance;
        t.features.reserve(static_cast<std::size_t>(m) * m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) t.features.push_back(s.features[static_cast<std::size_t>(i) * full + j]);
        }
        out.samples.push_back(std::move(t));
    }
    return out;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));

    write_file(dir / "manifest.json", to_json(dataset.manifest).dump(2) + "\n");

    fmt::memory_buffer csv;
    fmt::format_to(std::back_inserter(csv), "label");
    for (int i = 1; i <= dataset.manifest.feature_length(); ++i) fmt::format_to(std::back_inserter(csv), ",f{}", i);
    csv.push_back('\n');
    for (const auto& s : dataset.samples) {
        fmt::format_to(std::back_inserter(csv), "{}", s.label);
        for (double v : s.features) fmt::format_to(std::back_inserter(csv), ",{:.17g}", v);
        csv.push_back('\n');
    }
    write_file(dir / "samples.csv", std::string_view(csv.data(), csv.size()));

    std::string prov;
    for (const auto& s : dataset.samples) prov += s.provenance.dump() + "\n";
    write_file(dir / "provenance.jsonl", prov);
}

Dataset read_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    try {
        ds.manifest = manifest_from_json(nlohmann::json::parse(read_file(dir / "manifest.json")));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, fmt::format("{}: {}", (dir / "manifest.json").string(), e.what()));
    }
    const std::string csv = read_file(dir / "samples.csv");
    const std::size_t d = static_cast<std::size_t>(ds.manifest.feature_length());
    std::istringstream lines(csv);
    std::string line;
    int line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != d + 1) {
            throw ParseError(line_no, fmt::format("samples.csv line {}: expected {} fields, got {}", line_no, d + 1, fields.size()));
        }
        Sample s;
        if (!parse_number(fields[0], s.label)) throw ParseError(line_no, fmt::format("samples.csv line {}: bad label", line_no));
        s.features.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            if (!parse_number(fields[k + 1], s.features[k])) {
                throw ParseError(line_no, fmt::format("samples.csv line {}: bad value '{}'", line_no, fields[k + 1]));
            }
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.size() != ds.manifest.total()) {
        throw ParseError(line_no, fmt::format("manifest declares {} samples but samples.csv holds {}", ds.manifest.total(), ds.samples.size()));
    }
    const auto prov_path = dir / "provenance.jsonl";
    if (std::filesystem::exists(prov_path)) {
        std::istringstream prov(read_file(prov_path));
        for (std::size_t i = 0; i < ds.samples.size() && std::getline(prov, line); ++i) {
            ds.samples[i].provenance = nlohmann::json::parse(line);
        }
    }
    return ds;
}

Split split(const Dataset& dataset, SplitPolicy policy, std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.samples[i].label].push_back(i);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5b1du};
    std::mt19937_64 rng(seq);
    Split out;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 10) {
            throw InvalidArgument(fmt::format("class {} has {} samples; at least 10 are needed to split", label, idx.size()));
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto share = [&](double f) { return static_cast<std::size_t>(std::llround(f * static_cast<double>(idx.size()))); };
        const std::size_t n_test = share(0.1);
        const std::size_t n_val = policy == SplitPolicy::Ann80_10_10 ? share(0.1) : 0;
        out.test.insert(out.test.end(), idx.begin(), idx.begin() + n_test);
        out.validation.insert(out.validation.end(), idx.begin() + n_test, idx.begin() + n_test + n_val);
        out.train.insert(out.train.end(), idx.begin() + n_test + n_val, idx.end());
    }
    std::shuffle(out.train.begin(), out.train.end(), rng);
    std::shuffle(out.validation.begin(), out.validation.end(), rng);
    std::shuffle(out.test.begin(), out.test.end(), rng);
    return out;
}

std::vector<Fold> kfold(std::span<const std::size_t> items, int k) {
    if (k < 2) throw InvalidArgument(fmt::format("fold count must be >= 2, got {}", k));
    if (static_cast<std::size_t>(k) > items.size()) {
        throw InvalidArgument(fmt::format("cannot make {} folds from {} items", k, items.size()));
    }
    const std::size_t base = items.size() / k;
    const std::size_t extra = items.size() % k;
    std::vector<Fold> folds(k);
    std::size_t start = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
        for (std::size_t i = 0; i < items.size(); ++i) {
            (i >= start && i < start + len ? folds[f].holdout : folds[f].fit).push_back(items[i]);
        }
        start += len;
    }
    return folds;
}

IngestResult ingest_nd_records(std::istream& in) {
    IngestResult result;
    Manifest& m = result.dataset.manifest;
    m.task = "ingested";
    m.pattern = PatternKind::Opposite;
    m.noise_scale = 0.0;
    int size = 0;
    std::map<int, int> counts;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view(line);
        while (!view.empty() && (view.back() == '\r' || view.back() == ' ')) view.remove_suffix(1);
        if (view.empty() || view.front() == '#') continue;
        const auto fields = split_fields(view);
        auto reject = [&](std::string kind, std::string message) {
            result.diagnostics.push_back({line_no, std::move(kind), fmt::format("line {}: {}", line_no, message)});
        };
        int label = 0, msize = 0;
        if (fields.size() < 3 || !parse_number(fields[0], label) || !parse_number(fields[1], msize) || label < 1 || msize < 1) {
            reject("parse_error", "expected 'label, M, r_11, ..., r_MM' with positive integer label and M");
            continue;
        }
        if (fields.size() != static_cast<std::size_t>(msize) * msize + 2) {
            reject("parse_error", fmt::format("M = {} needs {} values, got {}", msize, msize * msize, fields.size() - 2));
            continue;
        }
        if (size != 0 && msize != size) {
            reject("parse_error", fmt::format("record has M = {} but earlier records have M = {}", msize, size));
            continue;
        }
        Eigen::MatrixXd nd(msize, msize);
        bool ok = true;
        for (int k = 0; k < msize * msize && ok; ++k) {
            double v = 0.0;
            ok = parse_number(fields[k + 2], v) && std::isfinite(v);
            if (ok) nd(k / msize, k % msize) = v;
        }
        if (!ok) {
            reject("parse_error", "non-numeric or non-finite matrix entry");
            continue;
        }
        try {
            const DNMatrix dn = dn_from_nd(nd, fmt::format("N-D matrix on line {}", line_no));
            size = msize;
            result.dataset.samples.push_back({dn.flatten(), label, {{"line", line_no}}});
            ++counts[label];
        } catch (const Error& e) {
            reject(e.kind(), e.what());
        }
    }
    m.measurement_count = size;
    m.electrode_count = size;
    for (const auto& [label, count] : counts) m.classes.push_back({label, count});
    // Keep samples grouped by class like generated datasets.
    std::stable_sort(result.dataset.samples.begin(), result.dataset.samples.end(),
                     [](const Sample& a, const Sample& b) { return a.label < b.label; });
    return result;
}

IngestResult ingest_nd_records(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError(fmt::format("cannot open {}", file.string()));
    return ingest_nd_records(in);
}

}  // namespace eitml
