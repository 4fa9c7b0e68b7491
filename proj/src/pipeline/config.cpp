#include "lgrit/pipeline/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "lgrit/core/error.hpp"
#include "lgrit/core/rng.hpp"

namespace lgrit::pipeline {

RunConfig RunConfig::desk() {
    RunConfig c;
    c.scene = synth::SceneSpec::desk();
    c.projection = c.scene.scan;

    c.vqvae.channels = {16, 16, 32};
    c.vqvae.codebook_size = 512;
    c.vqvae.latent_dim = 64;
    c.vqvae_train.steps = 3000;
    c.vqvae_train.batch_size = 8;
    c.vqvae_train.adam.lr = 1e-3;
    c.vqvae_train.log_every = 50;

    c.transformer.d_model = 64;
    c.transformer.heads = 4;
    c.transformer.layers = 2;
    c.transformer.ff_mult = 4;
    c.transformer_train.steps = 3000;
    c.transformer_train.batch_size = 16;
    c.transformer_train.adam.lr = 1e-3;

    c.metrics.bev.half_extent = 30.0;
    c.metrics.bev.cells = 40;
    c.resolve();
    return c;
}

void RunConfig::resolve() {
    if (train_count < 1) throw ValidationError("[run] train_count: must be >= 1");
    if (test_count < 1) throw ValidationError("[run] test_count: must be >= 1");
    if (sample_count < 1) throw ValidationError("[run] sample_count: must be >= 1");
    projection.validate();
    scene.scan = projection;
    scene.seed = derive_seed(seed, "data");
    vqvae.height = projection.height;
    vqvae.width = projection.width;
    vqvae_train.seed = derive_seed(seed, "vqvae.train");
    transformer.vocab = vqvae.codebook_size;
    transformer_train.seed = derive_seed(seed, "transformer.train");
    metrics.swd.seed = derive_seed(seed, "metrics.swd");
    metrics.md.seed = derive_seed(seed, "metrics.md");

    scene.validate();
    vqvae.validate();
    transformer.length = vqvae.tokens_per_image();
    vqvae_train.validate();
    transformer.validate();
    transformer_train.validate();
    sampling.validate(transformer.vocab);
    metrics.validate();
}

namespace {

namespace pt = boost::property_tree;

std::string fmt_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    throw ValidationError(where + ": " + what);
}

double parse_double(const std::string& where, const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
        bad(where, "expected a finite number, got '" + s + "'");
    }
    return v;
}

std::uint64_t parse_u64(const std::string& where, const std::string& s) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad(where, "expected a non-negative integer, got '" + s + "'");
    return v;
}

bool parse_bool(const std::string& where, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    bad(where, "expected true or false, got '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != ' ') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(RunConfig&)> get;
    std::function<void(RunConfig&, const std::string& where, const std::string& value)> set;
};

template <typename Access>
Field real(const char* section, const char* key, Access acc) {
    return {section, key, [acc](RunConfig& c) { return fmt_double(acc(c)); },
            [acc](RunConfig& c, const std::string& w, const std::string& v) { acc(c) = parse_double(w, v); }};
}

template <typename Access>
Field count(const char* section, const char* key, Access acc) {
    return {section, key, [acc](RunConfig& c) { return std::to_string(acc(c)); },
            [acc](RunConfig& c, const std::string& w, const std::string& v) {
                acc(c) = static_cast<std::remove_reference_t<decltype(acc(c))>>(parse_u64(w, v));
            }};
}

template <typename Access>
Field flag(const char* section, const char* key, Access acc) {
    return {section, key, [acc](RunConfig& c) { return std::string(acc(c) ? "true" : "false"); },
            [acc](RunConfig& c, const std::string& w, const std::string& v) { acc(c) = parse_bool(w, v); }};
}

template <typename E, typename Access>
Field choice(const char* section, const char* key, std::vector<std::pair<std::string, E>> names, Access acc) {
    return {section, key,
            [acc, names](RunConfig& c) {
                for (const auto& [n, e] : names)
                    if (e == acc(c)) return n;
                return std::string("?");
            },
            [acc, names](RunConfig& c, const std::string& w, const std::string& v) {
                std::string options;
                for (const auto& [n, e] : names) {
                    if (n == v) {
                        acc(c) = e;
                        return;
                    }
                    options += (options.empty() ? "" : ", ") + n;
                }
                bad(w, "expected one of " + options + ", got '" + v + "'");
            }};
}

template <typename Access>
void adam_fields(std::vector<Field>& f, const char* section, Access acc) {
    f.push_back(real(section, "lr", [acc](RunConfig& c) -> double& { return acc(c).lr; }));
    f.push_back(real(section, "beta1", [acc](RunConfig& c) -> double& { return acc(c).beta1; }));
    f.push_back(real(section, "beta2", [acc](RunConfig& c) -> double& { return acc(c).beta2; }));
    f.push_back(real(section, "eps", [acc](RunConfig& c) -> double& { return acc(c).eps; }));
    f.push_back(real(section, "clip_norm", [acc](RunConfig& c) -> double& { return acc(c).clip_norm; }));
}

#define LGRIT_REF(type, expr) [](RunConfig & c) -> type& { return expr; }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(count("run", "seed", LGRIT_REF(std::uint64_t, c.seed)));
        f.push_back(count("run", "train_count", LGRIT_REF(std::size_t, c.train_count)));
        f.push_back(count("run", "test_count", LGRIT_REF(std::size_t, c.test_count)));
        f.push_back(count("run", "sample_count", LGRIT_REF(std::size_t, c.sample_count)));

        f.push_back(choice<geom::ProjectionMode>(
            "projection", "mode",
            {{"spherical", geom::ProjectionMode::spherical}, {"scan_unfold", geom::ProjectionMode::scan_unfold}},
            LGRIT_REF(geom::ProjectionMode, c.projection.mode)));
        f.push_back(count("projection", "height", LGRIT_REF(std::size_t, c.projection.height)));
        f.push_back(count("projection", "width", LGRIT_REF(std::size_t, c.projection.width)));
        f.push_back(real("projection", "elevation_min", LGRIT_REF(double, c.projection.elevation_min)));
        f.push_back(real("projection", "elevation_max", LGRIT_REF(double, c.projection.elevation_max)));
        f.push_back(real("projection", "range_min", LGRIT_REF(double, c.projection.range_min)));
        f.push_back(real("projection", "range_max", LGRIT_REF(double, c.projection.range_max)));
        f.push_back(choice<geom::RangeNormalization>(
            "projection", "normalization",
            {{"linear", geom::RangeNormalization::linear}, {"log", geom::RangeNormalization::log}},
            LGRIT_REF(geom::RangeNormalization, c.projection.normalization)));
        f.push_back(real("projection", "log_scale", LGRIT_REF(double, c.projection.log_scale)));

        f.push_back(real("scene", "sensor_height", LGRIT_REF(double, c.scene.sensor_height)));
        f.push_back(real("scene", "corridor_width_min", LGRIT_REF(double, c.scene.corridor_width_min)));
        f.push_back(real("scene", "corridor_width_max", LGRIT_REF(double, c.scene.corridor_width_max)));
        f.push_back(real("scene", "wall_height", LGRIT_REF(double, c.scene.wall_height)));
        f.push_back(flag("scene", "closed", LGRIT_REF(bool, c.scene.closed)));
        f.push_back(real("scene", "corridor_length", LGRIT_REF(double, c.scene.corridor_length)));
        f.push_back(count("scene", "box_count_min", LGRIT_REF(std::size_t, c.scene.box_count_min)));
        f.push_back(count("scene", "box_count_max", LGRIT_REF(std::size_t, c.scene.box_count_max)));
        f.push_back(real("scene", "box_size_min", LGRIT_REF(double, c.scene.box_size_min)));
        f.push_back(real("scene", "box_size_max", LGRIT_REF(double, c.scene.box_size_max)));
        f.push_back(real("scene", "box_height_min", LGRIT_REF(double, c.scene.box_height_min)));
        f.push_back(real("scene", "box_height_max", LGRIT_REF(double, c.scene.box_height_max)));
        f.push_back(real("scene", "box_clearance", LGRIT_REF(double, c.scene.box_clearance)));
        f.push_back(real("scene", "drop_base", LGRIT_REF(double, c.scene.drop_base)));
        f.push_back(real("scene", "drop_range", LGRIT_REF(double, c.scene.drop_range)));

        f.push_back({"vqvae", "strides",
                     [](RunConfig& c) {
                         std::string s;
                         for (const auto& [h, w] : c.vqvae.strides)
                             s += (s.empty() ? "" : ",") + std::to_string(h) + "x" + std::to_string(w);
                         return s;
                     },
                     [](RunConfig& c, const std::string& w, const std::string& v) {
                         std::vector<std::pair<std::size_t, std::size_t>> out;
                         for (const auto& part : split(v, ',')) {
                             const auto hw = split(part, 'x');
                             if (hw.size() != 2) bad(w, "expected strides like 2x2,2x2,1x2, got '" + v + "'");
                             out.emplace_back(parse_u64(w, hw[0]), parse_u64(w, hw[1]));
                         }
                         c.vqvae.strides = out;
                     }});
        f.push_back({"vqvae", "channels",
                     [](RunConfig& c) {
                         std::string s;
                         for (auto ch : c.vqvae.channels) s += (s.empty() ? "" : ",") + std::to_string(ch);
                         return s;
                     },
                     [](RunConfig& c, const std::string& w, const std::string& v) {
                         std::vector<std::size_t> out;
                         for (const auto& part : split(v, ',')) out.push_back(parse_u64(w, part));
                         c.vqvae.channels = out;
                     }});
        f.push_back(count("vqvae", "res_blocks", LGRIT_REF(std::size_t, c.vqvae.res_blocks)));
        f.push_back(count("vqvae", "codebook_size", LGRIT_REF(std::size_t, c.vqvae.codebook_size)));
        f.push_back(count("vqvae", "latent_dim", LGRIT_REF(std::size_t, c.vqvae.latent_dim)));
        f.push_back(real("vqvae", "lambda", LGRIT_REF(double, c.vqvae.lambda)));
        f.push_back(real("vqvae", "beta", LGRIT_REF(double, c.vqvae.beta)));
        f.push_back(flag("vqvae", "raydrop_head", LGRIT_REF(bool, c.vqvae.raydrop_head)));
        f.push_back(flag("vqvae", "gp", LGRIT_REF(bool, c.vqvae.gp.enabled)));
        f.push_back(real("vqvae", "gp_probability", LGRIT_REF(double, c.vqvae.gp.probability)));
        f.push_back(real("vqvae", "gp_rotation_deg", LGRIT_REF(double, c.vqvae.gp.rotation_deg)));
        f.push_back(real("vqvae", "gp_translate_w", LGRIT_REF(double, c.vqvae.gp.translate_w)));
        f.push_back(real("vqvae", "gp_translate_h", LGRIT_REF(double, c.vqvae.gp.translate_h)));
        f.push_back(real("vqvae", "gp_scale_min", LGRIT_REF(double, c.vqvae.gp.scale_min)));
        f.push_back(real("vqvae", "gp_scale_max", LGRIT_REF(double, c.vqvae.gp.scale_max)));
        f.push_back(flag("vqvae", "gp_transform_encoder_input", LGRIT_REF(bool, c.vqvae.gp.transform_encoder_input)));

        f.push_back(count("vqvae_training", "steps", LGRIT_REF(std::size_t, c.vqvae_train.steps)));
        f.push_back(count("vqvae_training", "batch_size", LGRIT_REF(std::size_t, c.vqvae_train.batch_size)));
        adam_fields(f, "vqvae_training", LGRIT_REF(ad::AdamConfig, c.vqvae_train.adam));
        f.push_back(count("vqvae_training", "log_every", LGRIT_REF(std::size_t, c.vqvae_train.log_every)));
        f.push_back(count("vqvae_training", "checkpoint_every", LGRIT_REF(std::size_t, c.vqvae_train.checkpoint_every)));
        f.push_back(flag("vqvae_training", "reseed_dead_codes", LGRIT_REF(bool, c.vqvae_train.reseed_dead_codes)));
        f.push_back(count("vqvae_training", "dead_code_window", LGRIT_REF(std::size_t, c.vqvae_train.dead_code_window)));
        f.push_back(flag("vqvae_training", "init_codebook_from_data",
                         LGRIT_REF(bool, c.vqvae_train.init_codebook_from_data)));

        f.push_back(count("transformer", "layers", LGRIT_REF(std::size_t, c.transformer.layers)));
        f.push_back(count("transformer", "d_model", LGRIT_REF(std::size_t, c.transformer.d_model)));
        f.push_back(count("transformer", "heads", LGRIT_REF(std::size_t, c.transformer.heads)));
        f.push_back(count("transformer", "ff_mult", LGRIT_REF(std::size_t, c.transformer.ff_mult)));
        f.push_back(real("transformer", "temperature", LGRIT_REF(double, c.sampling.temperature)));
        f.push_back(count("transformer", "top_k", LGRIT_REF(std::size_t, c.sampling.top_k)));

        f.push_back(count("transformer_training", "steps", LGRIT_REF(std::size_t, c.transformer_train.steps)));
        f.push_back(count("transformer_training", "batch_size", LGRIT_REF(std::size_t, c.transformer_train.batch_size)));
        adam_fields(f, "transformer_training", LGRIT_REF(ad::AdamConfig, c.transformer_train.adam));
        f.push_back(count("transformer_training", "log_every", LGRIT_REF(std::size_t, c.transformer_train.log_every)));
        f.push_back(count("transformer_training", "checkpoint_every",
                          LGRIT_REF(std::size_t, c.transformer_train.checkpoint_every)));

        f.push_back(count("metrics", "swd_patch_size", LGRIT_REF(std::size_t, c.metrics.swd.patch_size)));
        f.push_back(count("metrics", "swd_patches_per_image", LGRIT_REF(std::size_t, c.metrics.swd.patches_per_image)));
        f.push_back(count("metrics", "swd_levels", LGRIT_REF(std::size_t, c.metrics.swd.levels)));
        f.push_back(count("metrics", "swd_projections", LGRIT_REF(std::size_t, c.metrics.swd.projections)));
        f.push_back(real("metrics", "bev_half_extent", LGRIT_REF(double, c.metrics.bev.half_extent)));
        f.push_back(count("metrics", "bev_cells", LGRIT_REF(std::size_t, c.metrics.bev.cells)));
        f.push_back({"metrics", "mmd_bandwidth",
                     [](RunConfig& c) {
                         return c.metrics.mmd_bandwidth ? fmt_double(*c.metrics.mmd_bandwidth) : std::string("median");
                     },
                     [](RunConfig& c, const std::string& w, const std::string& v) {
                         if (v == "median") {
                             c.metrics.mmd_bandwidth.reset();
                         } else {
                             c.metrics.mmd_bandwidth = parse_double(w, v);
                         }
                     }});
        f.push_back(real("metrics", "fpd_range_max", LGRIT_REF(double, c.metrics.features.range_max)));
        f.push_back(count("metrics", "md_points", LGRIT_REF(std::size_t, c.metrics.md.points)));
        f.push_back(choice<metrics::MatchingDistance>(
            "metrics", "md_distance",
            {{"chamfer", metrics::MatchingDistance::chamfer}, {"emd", metrics::MatchingDistance::emd}},
            LGRIT_REF(metrics::MatchingDistance, c.metrics.md.distance)));
        return f;
    }();
    return table;
}

#undef LGRIT_REF

}  // namespace

RunConfig parse_config(std::istream& is, const std::string& origin) {
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    std::map<std::string, std::map<std::string, const Field*>> index;
    for (const auto& f : fields()) index[f.section][f.key] = &f;

    RunConfig cfg = RunConfig::desk();
    for (const auto& [section, body] : tree) {
        const auto sec = index.find(section);
        if (body.empty() || sec == index.end()) {
            throw ValidationError(origin + ": unknown section [" + section + "]" +
                                  (body.empty() ? " (keys must live inside a section)" : ""));
        }
        for (const auto& [key, node] : body) {
            const auto f = sec->second.find(key);
            if (f == sec->second.end()) throw ValidationError(origin + ": unknown key '" + key + "' in [" + section + "]");
            if (!node.empty()) throw ValidationError(origin + ": [" + section + "] " + key + " is nested");
            f->second->set(cfg, "[" + section + "] " + key, node.data());
        }
    }
    try {
        cfg.resolve();
    } catch (const ValidationError& e) {
        throw ValidationError(origin + ": " + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config file " + path.string());
    return parse_config(is, path.string());
}

std::string to_ini(const RunConfig& cfg) {
    RunConfig copy = cfg;
    std::ostringstream os;
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) os << '\n';
            section = f.section;
            os << '[' << section << "]\n";
        }
        os << f.key << " = " << f.get(copy) << '\n';
    }
    return os.str();
}

void echo_config(const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "config.ini", std::ios::binary);
    if (!os) throw IoError("cannot write " + (dir / "config.ini").string());
    os << to_ini(cfg);
}

RunConfig config_from(const std::string& explicit_path) {
    if (!explicit_path.empty()) return load_config(explicit_path);
    if (const char* env = std::getenv("LGRIT_CONFIG"); env != nullptr && *env != '\0') return load_config(env);
    return RunConfig::desk();
}

}  // namespace lgrit::pipeline
