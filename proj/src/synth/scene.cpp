#include "lgrit/synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "lgrit/core/error.hpp"
#include "lgrit/core/parallel.hpp"
#include "lgrit/core/rng.hpp"
#include "lgrit/geom/io.hpp"

namespace lgrit::synth {

using geom::Point3;

void SceneSpec::validate() const {
    scan.validate();
    auto prob = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string("scene: ") + name + " must be in [0, 1]");
    };
    prob(drop_base, "drop_base");
    prob(drop_range, "drop_range");
    if (drop_base + drop_range > 1.0) throw ValidationError("scene: drop_base + drop_range must be <= 1");
    if (!(sensor_height > 0.0)) throw ValidationError("scene: sensor_height must be > 0");
    if (!(corridor_width_min > 0.0 && corridor_width_min <= corridor_width_max)) {
        throw ValidationError("scene: need 0 < corridor_width_min <= corridor_width_max");
    }
    if (!(corridor_length > 0.0)) throw ValidationError("scene: corridor_length must be > 0");
    if (!(wall_height > 0.0)) throw ValidationError("scene: wall_height must be > 0");
    if (box_count_min > box_count_max) throw ValidationError("scene: box_count_min must be <= box_count_max");
    if (!(box_size_min > 0.0 && box_size_min <= box_size_max)) {
        throw ValidationError("scene: need 0 < box_size_min <= box_size_max");
    }
    if (!(box_height_min > 0.0 && box_height_min <= box_height_max)) {
        throw ValidationError("scene: need 0 < box_height_min <= box_height_max");
    }
    if (box_clearance < 0.0) throw ValidationError("scene: box_clearance must be >= 0");
}

double SceneSpec::drop_probability(double range) const { return drop_base + drop_range * range / scan.range_max; }

SceneSpec SceneSpec::desk() {
    SceneSpec s;
    s.scan.height = 16;
    s.scan.width = 64;
    s.wall_height = 2.0;
    s.drop_base = 0.01;
    s.drop_range = 0.1;
    return s;
}

SceneSpec SceneSpec::medium() {
    SceneSpec s = desk();
    s.scan.height = 64;
    s.scan.width = 256;
    return s;
}

namespace {

double horizontal_gap(const Box& b) {
    const double dx = std::max({b.lo.x, -b.hi.x, 0.0});
    const double dy = std::max({b.lo.y, -b.hi.y, 0.0});
    return std::hypot(dx, dy);
}

std::uint64_t scan_seed(const SceneSpec& spec, std::uint64_t index) { return derive_seed(spec.seed, "scan", index); }

}  // namespace

Scene make_scene(const SceneSpec& spec, std::uint64_t index) {
    spec.validate();
    Rng rng(derive_seed(scan_seed(spec, index), "scene"));
    Scene scene;
    scene.corridor_width = rng.uniform(spec.corridor_width_min, spec.corridor_width_max);
    const auto n = spec.box_count_min + rng.below(spec.box_count_max - spec.box_count_min + 1);
    const double half_w = scene.corridor_width / 2.0;
    const double half_l = spec.corridor_length / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            const double sx = rng.uniform(spec.box_size_min, spec.box_size_max);
            const double sy = std::min(rng.uniform(spec.box_size_min, spec.box_size_max), scene.corridor_width);
            const double h = rng.uniform(spec.box_height_min, spec.box_height_max);
            const double cx = rng.uniform(-half_l + sx / 2.0, half_l - sx / 2.0);
            const double cy = rng.uniform(-half_w + sy / 2.0, half_w - sy / 2.0);
            Box b{{cx - sx / 2.0, cy - sy / 2.0, -spec.sensor_height},
                  {cx + sx / 2.0, cy + sy / 2.0, -spec.sensor_height + h}};
            if (horizontal_gap(b) < spec.box_clearance) continue;
            scene.boxes.push_back(b);
            break;
        }
    }
    return scene;
}

void check_scene(const SceneSpec& spec, const Scene& scene) {
    const double top = spec.wall_height - spec.sensor_height;
    if (spec.closed && !(top > 0.0)) throw ValidationError("scene: sensor is above the ceiling");
    if (!(scene.corridor_width > 0.0)) throw ValidationError("scene: corridor width must be > 0");
    for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
        const auto& b = scene.boxes[i];
        if (b.lo.x <= 0.0 && 0.0 <= b.hi.x && b.lo.y <= 0.0 && 0.0 <= b.hi.y && b.lo.z <= 0.0 && 0.0 <= b.hi.z) {
            throw ValidationError("scene: sensor lies inside box " + std::to_string(i));
        }
    }
}

Ray cast_ray(const SceneSpec& spec, const Scene& scene, const Point3& d) {
    const double h = spec.sensor_height;
    const double top = spec.wall_height - h;
    const double half_w = scene.corridor_width / 2.0;
    const double half_l = spec.corridor_length / 2.0;
    const auto inside_x = [&](double x) { return !spec.closed || std::abs(x) <= half_l; };

    Ray ray;
    ray.direction = d;
    double best = std::numeric_limits<double>::infinity();
    const auto consider = [&](double t, Surface s, std::int32_t box = -1) {
        if (t > 0.0 && t < best) {
            best = t;
            ray.surface = s;
            ray.box = box;
        }
    };

    if (d.z < 0.0) consider(-h / d.z, Surface::ground);
    if (spec.closed && d.z > 0.0) {
        const double t = top / d.z;
        if (std::abs(t * d.y) <= half_w && inside_x(t * d.x)) consider(t, Surface::ceiling);
    }
    if (d.y != 0.0) {
        const double t = (d.y > 0.0 ? half_w : -half_w) / d.y;
        const double z = t * d.z;
        if (z >= -h && z <= top && inside_x(t * d.x)) consider(t, d.y > 0.0 ? Surface::wall_left : Surface::wall_right);
    }
    if (spec.closed && d.x != 0.0) {
        const double t = (d.x > 0.0 ? half_l : -half_l) / d.x;
        const double z = t * d.z;
        if (z >= -h && z <= top && std::abs(t * d.y) <= half_w) {
            consider(t, d.x > 0.0 ? Surface::end_front : Surface::end_back);
        }
    }
    for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
        const auto& b = scene.boxes[i];
        double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
        bool miss = false;
        const double o[3] = {0.0, 0.0, 0.0};
        const double dir[3] = {d.x, d.y, d.z};
        const double lo[3] = {b.lo.x, b.lo.y, b.lo.z};
        const double hi[3] = {b.hi.x, b.hi.y, b.hi.z};
        for (int a = 0; a < 3 && !miss; ++a) {
            if (dir[a] == 0.0) {
                if (o[a] < lo[a] || o[a] > hi[a]) miss = true;
                continue;
            }
            double ta = (lo[a] - o[a]) / dir[a];
            double tb = (hi[a] - o[a]) / dir[a];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            if (t0 > t1) miss = true;
        }
        if (!miss) consider(t0, Surface::box, static_cast<std::int32_t>(i));
    }

    if (ray.surface != Surface::none) {
        ray.range = best;
        ray.valid = best >= spec.scan.range_min && best <= spec.scan.range_max;
    }
    return ray;
}

double surface_residual(const SceneSpec& spec, const Scene& scene, const Ray& ray, const Point3& p) {
    const double h = spec.sensor_height;
    switch (ray.surface) {
        case Surface::ground: return std::abs(p.z + h);
        case Surface::ceiling: return std::abs(p.z - (spec.wall_height - h));
        case Surface::wall_left: return std::abs(p.y - scene.corridor_width / 2.0);
        case Surface::wall_right: return std::abs(p.y + scene.corridor_width / 2.0);
        case Surface::end_front: return std::abs(p.x - spec.corridor_length / 2.0);
        case Surface::end_back: return std::abs(p.x + spec.corridor_length / 2.0);
        case Surface::box: {
            const auto& b = scene.boxes.at(static_cast<std::size_t>(ray.box));
            const double dx = std::max({b.lo.x - p.x, p.x - b.hi.x, 0.0});
            const double dy = std::max({b.lo.y - p.y, p.y - b.hi.y, 0.0});
            const double dz = std::max({b.lo.z - p.z, p.z - b.hi.z, 0.0});
            const double outside = std::sqrt(dx * dx + dy * dy + dz * dz);
            if (outside > 0.0) return outside;
            return std::min({p.x - b.lo.x, b.hi.x - p.x, p.y - b.lo.y, b.hi.y - p.y, p.z - b.lo.z, b.hi.z - p.z});
        }
        case Surface::none: break;
    }
    return std::numeric_limits<double>::infinity();
}

SyntheticScan render_scene(const SceneSpec& spec, const Scene& scene, std::uint64_t index) {
    spec.validate();
    check_scene(spec, scene);
    const auto& cfg = spec.scan;
    SyntheticScan out;
    out.index = index;
    out.scene = scene;
    out.rays.reserve(cfg.height * cfg.width);
    Rng drop(derive_seed(scan_seed(spec, index), "drop"));
    for (std::size_t r = 0; r < cfg.height; ++r) {
        const double elev = cfg.row_center(r);
        for (std::size_t c = 0; c < cfg.width; ++c) {
            const double az = cfg.column_center(c);
            const Point3 d{std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev)};
            Ray ray = cast_ray(spec, scene, d);
            ray.row = static_cast<std::uint32_t>(r);
            ray.col = static_cast<std::uint32_t>(c);
            const double u = drop.uniform();
            ray.dropped = ray.valid && u < spec.drop_probability(ray.range);
            if (ray.returned()) {
                out.cloud.points.push_back({d.x * ray.range, d.y * ray.range, d.z * ray.range});
                out.cloud.ring.push_back(static_cast<std::int32_t>(r));
            }
            out.rays.push_back(ray);
        }
    }
    if (out.cloud.empty()) {
        out.image = geom::RangeImage(cfg);
        out.mask = geom::RaydropMask(cfg.height, cfg.width);
    } else {
        auto cfg_spherical = cfg;
        cfg_spherical.mode = geom::ProjectionMode::spherical;
        auto p = geom::spherical_project(out.cloud, cfg_spherical);
        p.image.config = cfg;
        out.image = std::move(p.image);
        out.mask = std::move(p.mask);
    }
    return out;
}

SyntheticScan generate_scan(const SceneSpec& spec, std::uint64_t index) {
    return render_scene(spec, make_scene(spec, index), index);
}

std::string spec_json(const SceneSpec& spec) {
    nlohmann::ordered_json j;
    j["seed"] = spec.seed;
    j["height"] = spec.scan.height;
    j["width"] = spec.scan.width;
    j["elevation_min"] = spec.scan.elevation_min;
    j["elevation_max"] = spec.scan.elevation_max;
    j["range_min"] = spec.scan.range_min;
    j["range_max"] = spec.scan.range_max;
    j["normalization"] = spec.scan.normalization == geom::RangeNormalization::log ? "log" : "linear";
    j["log_scale"] = spec.scan.log_scale;
    j["sensor_height"] = spec.sensor_height;
    j["corridor_width_min"] = spec.corridor_width_min;
    j["corridor_width_max"] = spec.corridor_width_max;
    j["wall_height"] = spec.wall_height;
    j["closed"] = spec.closed;
    j["corridor_length"] = spec.corridor_length;
    j["box_count_min"] = spec.box_count_min;
    j["box_count_max"] = spec.box_count_max;
    j["box_size_min"] = spec.box_size_min;
    j["box_size_max"] = spec.box_size_max;
    j["box_height_min"] = spec.box_height_min;
    j["box_height_max"] = spec.box_height_max;
    j["box_clearance"] = spec.box_clearance;
    j["drop_base"] = spec.drop_base;
    j["drop_range"] = spec.drop_range;
    return j.dump();
}

std::string spec_hash(const SceneSpec& spec) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_name(spec_json(spec))));
    return buf;
}

namespace {

std::string scan_name(std::uint64_t index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scan_%05llu%s", static_cast<unsigned long long>(index), ext);
    return buf;
}

}  // namespace

Manifest generate_dataset(const SceneSpec& spec, std::size_t count, const std::filesystem::path& out_dir,
                          std::uint64_t first_index) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    Manifest m;
    m.spec_hash = spec_hash(spec);
    m.entries.resize(count);
    parallel_for(count, [&](std::size_t i) {
        const std::uint64_t index = first_index + i;
        const auto scan = generate_scan(spec, index);
        auto& e = m.entries[i];
        e.index = index;
        e.seed = scan_seed(spec, index);
        e.cloud_file = scan_name(index, ".bin");
        e.range_file = scan_name(index, ".range");
        e.mask_file = scan_name(index, ".mask");
        e.points = scan.cloud.size();
        geom::write_kitti_bin(out_dir / e.cloud_file, scan.cloud);
        geom::write_range_image(out_dir / e.range_file, scan.image);
        geom::write_mask(out_dir / e.mask_file, scan.mask);
    });

    nlohmann::ordered_json j;
    j["spec"] = nlohmann::ordered_json::parse(spec_json(spec));
    j["spec_hash"] = m.spec_hash;
    j["scans"] = nlohmann::ordered_json::array();
    for (const auto& e : m.entries) {
        j["scans"].push_back({{"index", e.index},
                              {"seed", e.seed},
                              {"cloud", e.cloud_file},
                              {"range", e.range_file},
                              {"mask", e.mask_file},
                              {"points", e.points}});
    }
    std::ofstream os(out_dir / "manifest.json", std::ios::binary);
    if (!os) throw IoError("cannot write " + (out_dir / "manifest.json").string());
    os << j.dump(2) << '\n';
    return m;
}

Manifest read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string() + " (run synth-data first?)");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
        Manifest m;
        m.spec_hash = j.at("spec_hash").get<std::string>();
        for (const auto& s : j.at("scans")) {
            ManifestEntry e;
            e.index = s.at("index").get<std::uint64_t>();
            e.seed = s.at("seed").get<std::uint64_t>();
            e.cloud_file = s.at("cloud").get<std::string>();
            e.range_file = s.at("range").get<std::string>();
            e.mask_file = s.at("mask").get<std::string>();
            e.points = s.at("points").get<std::size_t>();
            m.entries.push_back(std::move(e));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace lgrit::synth
