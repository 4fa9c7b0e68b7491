#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lgrit/geom/point_cloud.hpp"
#include "lgrit/geom/projection.hpp"

namespace lgrit::synth {

struct SceneSpec {
    std::uint64_t seed = 1;
    geom::ProjectionConfig scan;

    double sensor_height = 1.73;
    double corridor_width_min = 6.0;
    double corridor_width_max = 12.0;
    double wall_height = 3.0;
    /// A closed scene adds a ceiling at wall_height and end walls at
    /// x = +-corridor_length / 2, so every ray hits something.
    bool closed = false;
    double corridor_length = 60.0;

    std::size_t box_count_min = 2;
    std::size_t box_count_max = 6;
    double box_size_min = 0.8;
    double box_size_max = 3.0;
    double box_height_min = 0.5;
    double box_height_max = 2.5;
    /// Boxes keep at least this horizontal distance from the sensor.
    double box_clearance = 2.0;

    /// Drop probability of a return at range r is drop_base + drop_range * r / r_max.
    double drop_base = 0.0;
    double drop_range = 0.0;

    void validate() const;
    double drop_probability(double range) const;

    /// 16x64 scans, open corridor with low walls, light raydrop.
    static SceneSpec desk();
    /// 64x256 scans.
    static SceneSpec medium();
};

/// Axis-aligned box resting on the ground.
struct Box {
    geom::Point3 lo;
    geom::Point3 hi;
};

enum class Surface : std::uint8_t { none, ground, ceiling, wall_left, wall_right, end_front, end_back, box };

struct Scene {
    double corridor_width = 0.0;
    std::vector<Box> boxes;
};

struct Ray {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    geom::Point3 direction;
    /// Distance to the first surface, or 0 when nothing is hit.
    double range = 0.0;
    Surface surface = Surface::none;
    /// Index into Scene::boxes when surface == box.
    std::int32_t box = -1;
    /// A hit inside [range_min, range_max].
    bool valid = false;
    bool dropped = false;

    bool returned() const { return valid && !dropped; }
};

struct SyntheticScan {
    std::uint64_t index = 0;
    Scene scene;
    /// Surviving returns, row-major in acquisition order, ring = row.
    geom::PointCloud cloud;
    /// All H*W rays, row-major.
    std::vector<Ray> rays;
    geom::RangeImage image;
    geom::RaydropMask mask;
};

Scene make_scene(const SceneSpec& spec, std::uint64_t index);

/// Throws ValidationError if the sensor sits inside or below an obstacle.
void check_scene(const SceneSpec& spec, const Scene& scene);

/// First intersection of a unit ray from the sensor with the scene.
Ray cast_ray(const SceneSpec& spec, const Scene& scene, const geom::Point3& direction);

SyntheticScan generate_scan(const SceneSpec& spec, std::uint64_t index);
SyntheticScan render_scene(const SceneSpec& spec, const Scene& scene, std::uint64_t index);

/// Distance from `p` to the surface `ray` reports having hit.
double surface_residual(const SceneSpec& spec, const Scene& scene, const Ray& ray, const geom::Point3& p);

struct ManifestEntry {
    std::uint64_t index = 0;
    std::uint64_t seed = 0;
    std::string cloud_file;
    std::string range_file;
    std::string mask_file;
    std::size_t points = 0;
};

struct Manifest {
    std::string spec_hash;
    std::vector<ManifestEntry> entries;
};

std::string spec_json(const SceneSpec& spec);
std::string spec_hash(const SceneSpec& spec);

/// Writes scans first_index .. first_index + count - 1 as KITTI binaries,
/// range images and masks, plus manifest.json.
Manifest generate_dataset(const SceneSpec& spec, std::size_t count, const std::filesystem::path& out_dir,
                          std::uint64_t first_index = 0);

Manifest read_manifest(const std::filesystem::path& dir);

}  // namespace lgrit::synth
