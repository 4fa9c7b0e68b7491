#include "lgrit/pipeline/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "lgrit/ad/checkpoint.hpp"
#include "lgrit/ar/tokens.hpp"
#include "lgrit/core/error.hpp"
#include "lgrit/core/rng.hpp"
#include "lgrit/geom/io.hpp"
#include "lgrit/vqvae/output.hpp"

namespace lgrit::pipeline {

namespace {

std::string scan_name(std::size_t index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "scan_%05zu%s", index, ext);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    return os;
}

void require_dir(const fs::path& dir, const char* what) {
    if (!fs::is_directory(dir)) throw ValidationError(std::string(what) + " directory not found: " + dir.string());
}

template <typename Store>
void load_into(Store& store, const fs::path& path, const char* section, const char* producer) {
    try {
        ad::load_checkpoint(path, store);
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(e.what()) + " (the checkpoint does not match the [" + section +
                              "] settings of the config; use the config.ini written next to it)");
    } catch (const IoError& e) {
        throw IoError(std::string(e.what()) + " (run " + producer + " first)");
    }
}

}  // namespace

void emit_preview(const geom::RangeImage& img, const geom::RaydropMask& mask, const fs::path& path) {
    if (img.height != mask.height || img.width != mask.width) {
        throw ValidationError("preview: image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                              " but mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width));
    }
    auto os = open_out(path);
    os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<unsigned char> px(img.values.size(), 0);
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (!mask.bits[i]) continue;
        const double v = std::clamp(static_cast<double>(img.values[i]), 0.0, 1.0);
        px[i] = static_cast<unsigned char>(1 + std::lround(254.0 * v));
    }
    os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!os) throw IoError("write failed for " + path.string());
}

std::vector<metrics::Scan> load_scans(const fs::path& dir, const geom::ProjectionConfig& proj) {
    require_dir(dir, "scan");
    std::vector<fs::path> ranges;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".range") ranges.push_back(e.path());
    std::sort(ranges.begin(), ranges.end());
    if (ranges.empty()) throw ValidationError("no .range files in " + dir.string());
    std::vector<metrics::Scan> out;
    for (const auto& r : ranges) {
        auto m = r;
        m.replace_extension(".mask");
        if (!fs::exists(m)) throw ValidationError(r.string() + " has no matching .mask file");
        metrics::Scan s{geom::read_range_image(r, proj), geom::read_mask(m)};
        if (s.mask.height != s.image.height || s.mask.width != s.image.width) {
            throw ValidationError(m.string() + " does not match the size of " + r.string());
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<vqvae::Sample> load_samples(const fs::path& dir, const geom::ProjectionConfig& proj) {
    std::vector<vqvae::Sample> out;
    for (auto& s : load_scans(dir, proj)) out.push_back({std::move(s.image.values), std::move(s.mask.bits)});
    return out;
}

void synth_data(const RunConfig& cfg, const fs::path& out) {
    synth::generate_dataset(cfg.scene, cfg.train_count, out / "train", 0);
    synth::generate_dataset(cfg.scene, cfg.test_count, out / "test", cfg.train_count);
    echo_config(cfg, out);
}

std::size_t project(const RunConfig& cfg, const fs::path& input, const fs::path& out) {
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input))
            if (e.is_regular_file() && e.path().extension() == ".bin") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else if (fs::exists(input)) {
        files.push_back(input);
    } else {
        throw ValidationError("project: input not found: " + input.string());
    }
    if (files.empty()) throw ValidationError("project: no .bin files in " + input.string());
    echo_config(cfg, out);
    for (const auto& f : files) {
        const auto p = geom::project(geom::read_kitti_bin(f), cfg.projection);
        const auto stem = f.stem().string();
        geom::write_range_image(out / (stem + ".range"), p.image);
        geom::write_mask(out / (stem + ".mask"), p.mask);
        emit_preview(p.image, p.mask, out / (stem + ".pgm"));
    }
    return files.size();
}

vqvae::TrainResult train_vqvae(const RunConfig& cfg, const fs::path& data, const fs::path& out) {
    const auto samples = load_samples(data, cfg.projection);
    echo_config(cfg, out);
    vqvae::Model<float> model(cfg.vqvae, derive_seed(cfg.seed, "vqvae.init"));
    auto tc = cfg.vqvae_train;
    if (tc.checkpoint_every > 0) tc.checkpoint_dir = out;
    auto log = open_out(out / "vqvae_log.csv");
    auto result = vqvae::train_vqvae(model, samples, tc, &log);
    ad::save_checkpoint(out / "vqvae.ckpt", model.store());
    return result;
}

vqvae::Model<float> load_vqvae(const RunConfig& cfg, const fs::path& checkpoint) {
    vqvae::Model<float> model(cfg.vqvae, 0);
    load_into(model.store(), checkpoint, "vqvae", "train-vqvae");
    return model;
}

ar::Transformer<float> load_transformer(const RunConfig& cfg, const fs::path& checkpoint) {
    ar::Transformer<float> model(cfg.transformer, 0);
    load_into(model.store(), checkpoint, "transformer", "train-transformer");
    return model;
}

std::size_t extract_tokens(const RunConfig& cfg, const fs::path& vqvae_ckpt, const fs::path& data, const fs::path& out) {
    const auto model = load_vqvae(cfg, vqvae_ckpt);
    const auto samples = load_samples(data, cfg.projection);
    echo_config(cfg, out);
    ar::TokenDataset ds{cfg.vqvae.latent_h(), cfg.vqvae.latent_w(), vqvae::encode_tokens(model, samples)};
    ar::write_tokens(out / "tokens.bin", ds);
    return ds.sequences.size();
}

double train_transformer(const RunConfig& cfg, const fs::path& tokens, const fs::path& out) {
    const auto ds = ar::read_tokens(tokens);
    if (ds.height != cfg.vqvae.latent_h() || ds.width != cfg.vqvae.latent_w()) {
        throw ValidationError(tokens.string() + " holds " + std::to_string(ds.height) + "x" + std::to_string(ds.width) +
                              " token grids but the config implies " + std::to_string(cfg.vqvae.latent_h()) + "x" +
                              std::to_string(cfg.vqvae.latent_w()));
    }
    for (const auto& s : ds.sequences)
        for (auto t : s)
            if (t < 0 || static_cast<std::size_t>(t) >= cfg.transformer.vocab) {
                throw ValidationError(tokens.string() + " contains token " + std::to_string(t) +
                                      " outside the configured codebook of " + std::to_string(cfg.transformer.vocab));
            }
    echo_config(cfg, out);
    ar::Transformer<float> model(cfg.transformer, derive_seed(cfg.seed, "transformer.init"));
    auto tc = cfg.transformer_train;
    if (tc.checkpoint_every > 0) tc.checkpoint_dir = out;
    auto log = open_out(out / "transformer_log.csv");
    ar::train_transformer(model, ds.sequences, tc, &log);
    ad::save_checkpoint(out / "transformer.ckpt", model.store());
    return ar::evaluate_nll(model, ds.sequences);
}

void sample(const RunConfig& cfg, const fs::path& vqvae_ckpt, const fs::path& transformer_ckpt, std::size_t count,
            std::uint64_t seed, const fs::path& out) {
    if (count < 1) throw ValidationError("sample: count must be >= 1");
    const auto vq = load_vqvae(cfg, vqvae_ckpt);
    const auto tr = load_transformer(cfg, transformer_ckpt);
    echo_config(cfg, out);
    const auto seqs = ar::sample_sequences(tr, count, cfg.sampling, seed);
    const auto recs = vqvae::decode_tokens(vq, seqs);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto mask = vqvae::predicted_mask(cfg.vqvae, recs[i], cfg.projection);
        const auto img = vqvae::compose(recs[i].range, mask, cfg.projection);
        geom::write_range_image(out / scan_name(i, ".range"), img);
        geom::write_mask(out / scan_name(i, ".mask"), mask);
        geom::write_kitti_bin(out / scan_name(i, ".bin"), geom::unproject(img, mask));
        emit_preview(img, mask, out / scan_name(i, ".pgm"));
    }
}

metrics::MetricReport evaluate(const RunConfig& cfg, const fs::path& generated, const fs::path& real, const fs::path& out) {
    const auto g = load_scans(generated, cfg.projection);
    const auto r = load_scans(real, cfg.projection);
    auto report = metrics::evaluate(g, r, cfg.metrics);
    echo_config(cfg, out);
    report.write_csv(out / "metrics.csv");
    report.write_json(out / "metrics.json");
    return report;
}

std::vector<AblationRow> ablate(const RunConfig& cfg, const fs::path& data, const fs::path& out, std::ostream* progress) {
    const auto train = load_samples(data / "train", cfg.projection);
    const auto test = load_scans(data / "test", cfg.projection);
    std::vector<vqvae::Sample> test_samples;
    for (const auto& s : test) test_samples.push_back({s.image.values, s.mask.bits});

    struct Variant {
        const char* name;
        bool raydrop;
        bool gp;
    };
    const Variant variants[] = {{"baseline", false, false}, {"+RL", true, false}, {"+RL+GP", true, true}};
    const char* dirs[] = {"baseline", "rl", "rl_gp"};

    echo_config(cfg, out);
    std::vector<AblationRow> rows;
    for (std::size_t v = 0; v < 3; ++v) {
        RunConfig vc = cfg;
        vc.vqvae.raydrop_head = variants[v].raydrop;
        vc.vqvae.gp.enabled = variants[v].gp;
        vc.resolve();
        const auto dir = out / dirs[v];
        echo_config(vc, dir);
        if (progress) *progress << "ablate: training " << variants[v].name << '\n' << std::flush;
        vqvae::Model<float> model(vc.vqvae, derive_seed(vc.seed, "vqvae.init"));
        auto log = open_out(dir / "vqvae_log.csv");
        vqvae::train_vqvae(model, train, vc.vqvae_train, &log);
        ad::save_checkpoint(dir / "vqvae.ckpt", model.store());

        const auto recs = vqvae::reconstruct(model, test_samples);
        std::vector<metrics::Scan> gen;
        AblationRow row{variants[v].name, {}, 0.0, 0.0};
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const auto mask = vqvae::predicted_mask(vc.vqvae, recs[i], vc.projection);
            row.iou += vqvae::mask_iou(mask, test[i].mask);
            row.masked_l1 += vqvae::masked_l1(test_samples[i].range, test_samples[i].mask, recs[i].range);
            gen.push_back({vqvae::compose(recs[i].range, mask, vc.projection), mask});
        }
        row.iou /= static_cast<double>(recs.size());
        row.masked_l1 /= static_cast<double>(recs.size());
        row.report = metrics::evaluate(gen, test, vc.metrics);
        row.report.write_csv(dir / "metrics.csv");
        rows.push_back(std::move(row));
    }

    auto os = open_out(out / "ablation.csv");
    os << "variant,SWD,MMD,JSD,FPD*,MD,IoU,masked_L1,config_fingerprint\n";
    for (const auto& row : rows) {
        os << row.variant;
        for (const char* m : {"SWD", "MMD", "JSD", "FPD*", "MD"}) {
            char buf[64] = "";
            if (const auto val = row.report.get(m)) std::snprintf(buf, sizeof buf, "%.9g", *val);
            os << ',' << buf;
        }
        char buf[96];
        std::snprintf(buf, sizeof buf, ",%.9g,%.9g,", row.iou, row.masked_l1);
        os << buf << row.report.fingerprint() << '\n';
    }
    if (!os) throw IoError("write failed for " + (out / "ablation.csv").string());
    return rows;
}

}  // namespace lgrit::pipeline
