#include <boost/math/distributions/chi_squared.hpp>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "lgrit/core/error.hpp"
#include "lgrit/core/parallel.hpp"
#include "lgrit/geom/projection.hpp"
#include "lgrit/synth/scene.hpp"

using namespace lgrit::synth;
using lgrit::geom::ProjectionMode;

namespace {

SceneSpec closed_spec(std::size_t h, std::size_t w, double p_d, double p_r = 0.0) {
    SceneSpec s;
    s.scan.height = h;
    s.scan.width = w;
    s.closed = true;
    s.drop_base = p_d;
    s.drop_range = p_r;
    return s;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("closed scene without raydrop fills the mask") {
    const auto scan = generate_scan(closed_spec(16, 64, 0.0), 0);
    CHECK(scan.mask.occupancy() == 1.0);
    CHECK(scan.cloud.size() == 16 * 64);
}

TEST_CASE("drop probability one empties the cloud") {
    const auto scan = generate_scan(closed_spec(16, 64, 1.0), 3);
    CHECK(scan.cloud.empty());
    CHECK(scan.mask.occupancy() == 0.0);
}

TEST_CASE("empirical drop rate over 10 scans of 64x256") {
    const auto spec = closed_spec(64, 256, 0.2);
    std::size_t valid = 0, dropped = 0;
    for (std::uint64_t i = 0; i < 10; ++i) {
        for (const auto& r : generate_scan(spec, i).rays) {
            valid += r.valid;
            dropped += r.dropped;
        }
    }
    REQUIRE(valid == 10u * 64u * 256u);
    CHECK(static_cast<double>(dropped) / static_cast<double>(valid) == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("dense 64x1024 scan projects to occupancy 1 - drop rate") {
    const auto spec = closed_spec(64, 1024, 0.1);
    const auto scan = generate_scan(spec, 11);
    auto cfg = spec.scan;
    const auto p = lgrit::geom::spherical_project(scan.cloud, cfg);
    CHECK(std::abs(p.mask.occupancy() - 0.9) <= 0.02);
    CHECK(p.mask.bits == scan.mask.bits);
    std::size_t returned = 0;
    for (const auto& r : scan.rays) {
        returned += r.returned();
        CHECK(p.mask.at(r.row, r.col) == (r.returned() ? 1 : 0));
    }
    CHECK(p.stats.projected == returned);
}

TEST_CASE("scan unfolding places every point in its generated elevation row") {
    const auto spec = closed_spec(32, 128, 0.15);
    const auto scan = generate_scan(spec, 5);
    auto cfg = spec.scan;
    cfg.mode = ProjectionMode::scan_unfold;

    auto without_ring = scan.cloud;
    without_ring.ring.clear();
    for (const lgrit::geom::PointCloud* cloud : {&scan.cloud, static_cast<const lgrit::geom::PointCloud*>(&without_ring)}) {
        const auto p = lgrit::geom::scan_unfold_project(*cloud, cfg);
        // Oracle: the generator's own (row, col) for every surviving ray.
        lgrit::geom::RaydropMask expect(cfg.height, cfg.width);
        for (const auto& r : scan.rays) {
            if (r.returned()) expect.at(r.row, r.col) = 1;
        }
        CHECK(p.mask.bits == expect.bits);
        CHECK(p.image.values == scan.image.values);
    }
}

TEST_CASE("every emitted point lies on its surface") {
    for (bool closed : {false, true}) {
        auto spec = SceneSpec::medium();
        spec.closed = closed;
        spec.box_count_min = 6;
        spec.box_count_max = 10;
        for (std::uint64_t i = 0; i < 4; ++i) {
            const auto scan = generate_scan(spec, i);
            std::size_t k = 0, boxes = 0;
            double worst = 0.0;
            for (const auto& r : scan.rays) {
                if (!r.returned()) continue;
                worst = std::max(worst, surface_residual(spec, scan.scene, r, scan.cloud.points[k++]));
                boxes += r.surface == Surface::box;
            }
            CHECK(k == scan.cloud.size());
            CHECK(worst < 1e-6);
            CHECK(boxes > 0);
        }
    }
}

TEST_CASE("open scenes leave sky rays empty") {
    auto spec = SceneSpec::desk();
    spec.drop_base = 0.0;
    spec.drop_range = 0.0;
    const auto scan = generate_scan(spec, 0);
    std::size_t misses = 0;
    for (const auto& r : scan.rays) {
        misses += !r.valid;
        if (r.surface == Surface::none) CHECK(r.direction.z >= 0.0);
    }
    CHECK(misses > 0);
    CHECK(scan.mask.occupancy() < 1.0);
}

TEST_CASE("raydrop is independent of azimuth given range (chi-square, 99%)") {
    const auto spec = closed_spec(64, 256, 0.1, 0.3);
    const std::size_t bins = 16;
    std::vector<double> observed(bins, 0.0), expected(bins, 0.0), trials(bins, 0.0);
    std::size_t rays = 0;
    for (std::uint64_t i = 0; rays < 100000; ++i) {
        for (const auto& r : generate_scan(spec, 100 + i).rays) {
            if (!r.valid) continue;
            const std::size_t b = r.col * bins / spec.scan.width;
            observed[b] += r.dropped;
            expected[b] += spec.drop_probability(r.range);
            trials[b] += 1.0;
            ++rays;
        }
    }
    double stat = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        const double kept_obs = trials[b] - observed[b], kept_exp = trials[b] - expected[b];
        stat += (observed[b] - expected[b]) * (observed[b] - expected[b]) / expected[b];
        stat += (kept_obs - kept_exp) * (kept_obs - kept_exp) / kept_exp;
    }
    const boost::math::chi_squared dist(static_cast<double>(bins));
    CAPTURE(stat);
    CHECK(stat < boost::math::quantile(dist, 0.99));
}

TEST_CASE("scene and spec errors") {
    auto spec = SceneSpec::desk();
    Scene scene = make_scene(spec, 0);
    scene.boxes.push_back({{-1, -1, -spec.sensor_height}, {1, 1, 1}});
    CHECK_THROWS_AS(render_scene(spec, scene, 0), lgrit::ValidationError);

    auto bad = spec;
    bad.drop_base = 0.7;
    bad.drop_range = 0.4;
    CHECK_THROWS_AS(generate_scan(bad, 0), lgrit::ValidationError);
    bad = spec;
    bad.drop_base = -0.1;
    CHECK_THROWS_AS(generate_scan(bad, 0), lgrit::ValidationError);
}

TEST_CASE("scans are deterministic per (seed, index) and differ across indices") {
    const auto spec = SceneSpec::desk();
    const auto a = generate_scan(spec, 9);
    const auto b = generate_scan(spec, 9);
    const auto c = generate_scan(spec, 10);
    CHECK(a.image.values == b.image.values);
    CHECK(a.mask.bits == b.mask.bits);
    CHECK(a.image.values != c.image.values);
    auto other = spec;
    other.seed = 2;
    CHECK(generate_scan(other, 9).image.values != a.image.values);
}

TEST_CASE("datasets are byte-identical across runs and thread counts") {
    const auto root = std::filesystem::temp_directory_path() / "lgrit_synth";
    std::filesystem::remove_all(root);
    const auto spec = SceneSpec::desk();
    lgrit::set_max_threads(1);
    const auto m1 = generate_dataset(spec, 6, root / "a", 4);
    lgrit::set_max_threads(4);
    const auto m2 = generate_dataset(spec, 6, root / "b", 4);
    lgrit::set_max_threads(1);
    REQUIRE(m1.entries.size() == 6);
    CHECK(m1.entries[0].index == 4);
    for (const auto& e : m1.entries) {
        for (const auto& f : {e.cloud_file, e.range_file, e.mask_file}) CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));
    }
    CHECK(slurp(root / "a" / "manifest.json") == slurp(root / "b" / "manifest.json"));
    const auto back = read_manifest(root / "a");
    CHECK(back.spec_hash == spec_hash(spec));
    CHECK(back.entries.size() == 6);
    CHECK(back.entries[5].mask_file == "scan_00009.mask");
    CHECK_THROWS_AS(read_manifest(root / "missing"), lgrit::IoError);
}
