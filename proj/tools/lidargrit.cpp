#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "lgrit/core/error.hpp"
#include "lgrit/core/parallel.hpp"
#include "lgrit/pipeline/commands.hpp"

using namespace lgrit;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"LiDAR range-image generation: synthetic data, VQ-VAE, AR transformer, metrics"};
    app.require_subcommand(1);

    std::string config_path;
    unsigned threads = 0;
    bool deterministic = false;
    app.add_option("-c,--config", config_path, "INI config file (default: $LGRIT_CONFIG, else the desk preset)");
    app.add_option("--threads", threads, "Cap on worker threads (0: hardware concurrency)");
    app.add_flag("--deterministic", deterministic, "Run single-threaded");

    fs::path out, data, input, vqvae_ckpt, transformer_ckpt, tokens, generated, real;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    bool seed_given = false;

    auto* synth = app.add_subcommand("synth-data", "Generate train/test synthetic scans");
    synth->add_option("-o,--out", out, "Output directory")->required();

    auto* proj = app.add_subcommand("project", "Project KITTI .bin clouds to range images and masks");
    proj->add_option("-i,--input", input, "A .bin file or a directory of them")->required();
    proj->add_option("-o,--out", out, "Output directory")->required();

    auto* tv = app.add_subcommand("train-vqvae", "Train the VQ-VAE");
    tv->add_option("-d,--data", data, "Directory of .range/.mask training scans")->required();
    tv->add_option("-o,--out", out, "Output directory")->required();

    auto* et = app.add_subcommand("extract-tokens", "Encode scans into token grids with a trained VQ-VAE");
    et->add_option("--vqvae", vqvae_ckpt, "VQ-VAE checkpoint")->required();
    et->add_option("-d,--data", data, "Directory of .range/.mask scans")->required();
    et->add_option("-o,--out", out, "Output directory")->required();

    auto* tt = app.add_subcommand("train-transformer", "Train the AR transformer on a token file");
    tt->add_option("-t,--tokens", tokens, "tokens.bin from extract-tokens")->required();
    tt->add_option("-o,--out", out, "Output directory")->required();

    auto* sm = app.add_subcommand("sample", "Sample scans from both trained stages");
    sm->add_option("--vqvae", vqvae_ckpt, "VQ-VAE checkpoint")->required();
    sm->add_option("--transformer", transformer_ckpt, "Transformer checkpoint")->required();
    sm->add_option("-n,--count", count, "Number of scans (default: [run] sample_count)");
    sm->add_option("-s,--seed", seed, "Sampling seed (default: derived from [run] seed)")
        ->each([&](const std::string&) { seed_given = true; });
    sm->add_option("-o,--out", out, "Output directory")->required();

    auto* ev = app.add_subcommand("evaluate", "Score generated scans against real scans");
    ev->add_option("-g,--generated", generated, "Directory of generated .range/.mask scans")->required();
    ev->add_option("-r,--real", real, "Directory of reference .range/.mask scans")->required();
    ev->add_option("-o,--out", out, "Output directory")->required();

    auto* ab = app.add_subcommand("ablate", "Baseline / +RL / +RL+GP VQ-VAE ablation");
    ab->add_option("-d,--data", data, "Directory with train/ and test/ from synth-data")->required();
    ab->add_option("-o,--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (deterministic) {
            set_max_threads(1);
        } else if (threads > 0) {
            set_max_threads(threads);
        }
        const auto cfg = pipeline::config_from(config_path);

        if (synth->parsed()) {
            pipeline::synth_data(cfg, out);
            std::cout << "wrote " << cfg.train_count << " train and " << cfg.test_count << " test scans to " << out
                      << '\n';
        } else if (proj->parsed()) {
            const auto n = pipeline::project(cfg, input, out);
            std::cout << "projected " << n << " clouds to " << out << '\n';
        } else if (tv->parsed()) {
            const auto r = pipeline::train_vqvae(cfg, data, out);
            if (!r.log.empty()) {
                const auto& last = r.log.back();
                std::printf("step %zu  rec %.6f  raydrop %.6f  commit %.6f  usage %.3f\n", last.step, last.rec,
                            last.raydrop, last.commit, last.usage);
            }
            for (const auto& e : r.events) std::cout << e << '\n';
        } else if (et->parsed()) {
            const auto n = pipeline::extract_tokens(cfg, vqvae_ckpt, data, out);
            std::cout << "wrote " << n << " token grids to " << out / "tokens.bin" << '\n';
        } else if (tt->parsed()) {
            const double nll = pipeline::train_transformer(cfg, tokens, out);
            std::printf("training-set NLL %.6f nats/token\n", nll);
        } else if (sm->parsed()) {
            const auto n = count > 0 ? count : cfg.sample_count;
            const auto s = seed_given ? seed : derive_seed(cfg.seed, "sampling");
            pipeline::sample(cfg, vqvae_ckpt, transformer_ckpt, n, s, out);
            std::cout << "wrote " << n << " samples to " << out << '\n';
        } else if (ev->parsed()) {
            const auto r = pipeline::evaluate(cfg, generated, real, out);
            for (const auto& [k, v] : r.values) std::printf("%-8s %.6g\n", k.c_str(), v);
            for (const auto& n : r.notes) std::cout << "note: " << n << '\n';
        } else if (ab->parsed()) {
            const auto rows = pipeline::ablate(cfg, data, out, &std::cout);
            for (const auto& row : rows) {
                std::printf("%-9s SWD %.4f  IoU %.4f  L1 %.5f\n", row.variant.c_str(), *row.report.get("SWD"), row.iou,
                            row.masked_l1);
            }
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
