#include "pathonet/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>

#include "pathonet/bench.hpp"
#include "pathonet/detect.hpp"
#include "pathonet/eval.hpp"
#include "pathonet/quantize.hpp"
#include "pathonet/raster.hpp"
#include "pathonet/serial.hpp"
#include "pathonet/train.hpp"

namespace pathonet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
    const std::time_t t =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Resolution order: flags > config file section > built-in defaults. The
// config file is a JSON object keyed by subcommand; each section maps
// flag names (no dashes) to values.
struct Overlay {
    json section;

    template <typename T>
    void apply(const CLI::App& app, const std::string& flag, T& var) const {
        if (app.get_option("--" + flag)->count() > 0) return;
        if (section.is_object() && section.contains(flag)) var = section.at(flag).get<T>();
    }
};

struct Manifest {
    std::string subcommand;
    std::string started = utc_now();
    json config = json::object();
    json inputs = json::object();
    json outputs = json::object();

    // one manifest per run, written alongside the primary output
    void write_for(const std::string& primary_out) const {
        json j;
        j["subcommand"] = subcommand;
        j["version"] = kToolVersion;
        j["started_utc"] = started;
        j["finished_utc"] = utc_now();
        j["config"] = config;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        const fs::path p(primary_out);
        const std::string path = fs::is_directory(p) ? (p / "manifest.json").string()
                                                     : primary_out + ".manifest.json";
        write_text_file(path, j.dump(2) + "\n");
    }
};

bool is_quantized_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char magic[4] = {};
    f.read(magic, 4);
    if (!f) throw FormatError(path + ": too short to be a model file");
    return std::string(magic, 4) == "MDQ1";
}

Model<float> load_any_model(const std::string& path, bool* quantized = nullptr) {
    const bool q = is_quantized_file(path);
    if (quantized) *quantized = q;
    return q ? dequantize(load_quantized(path)) : load_model(path);
}

void parse_args(CLI::App& app, std::vector<std::string> args) {
    std::reverse(args.begin(), args.end()); // CLI11 consumes from the back
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        throw;
    }
}

// ----------------------------------------------------------------- synth

int cmd_synth(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("Generate synthetic annotated microscopy-style images", "pathonet synth");
    std::string out_dir;
    SynthConfig cfg;
    int count = 20;
    app.add_option("--out", out_dir, "Output directory")->required();
    app.add_option("--count", count, "Image count")->capture_default_str();
    app.add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
    app.add_option("--width", cfg.width, "Image width")->capture_default_str();
    app.add_option("--height", cfg.height, "Image height")->capture_default_str();
    app.add_option("--channels", cfg.channels, "1 (PGM) or 3 (PPM)")->capture_default_str();
    app.add_option("--blobs-min", cfg.blobs_min, "Min blobs per image")->capture_default_str();
    app.add_option("--blobs-max", cfg.blobs_max, "Max blobs per image")->capture_default_str();
    app.add_option("--noise", cfg.noise, "Background noise sigma")->capture_default_str();
    parse_args(app, std::move(args));
    ov.apply(app, "count", count);
    ov.apply(app, "seed", cfg.seed);
    ov.apply(app, "width", cfg.width);
    ov.apply(app, "height", cfg.height);
    ov.apply(app, "channels", cfg.channels);
    ov.apply(app, "blobs-min", cfg.blobs_min);
    ov.apply(app, "blobs-max", cfg.blobs_max);
    ov.apply(app, "noise", cfg.noise);

    Manifest mf;
    mf.subcommand = "synth";
    mf.config = {{"out", out_dir},          {"count", count},
                 {"seed", cfg.seed},        {"width", cfg.width},
                 {"height", cfg.height},    {"channels", cfg.channels},
                 {"blobs-min", cfg.blobs_min}, {"blobs-max", cfg.blobs_max},
                 {"noise", cfg.noise}};

    const auto images = generate_synthetic(cfg, count);
    const std::string ann = write_annotations(images, out_dir);
    std::int64_t boxes = 0;
    for (const auto& img : images) boxes += static_cast<std::int64_t>(img.boxes.size());
    mf.outputs = {{"annotations", ann}, {"images", count}};
    mf.write_for(out_dir);
    std::cout << "synth: wrote " << count << " images (" << boxes << " annotations) to "
              << out_dir << "\n";
    return 0;
}

// --------------------------------------------------------------- extract

int cmd_extract(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("Extract labeled patches from annotated images", "pathonet extract");
    std::string annotations, out, test_out;
    int patch_size = 20, neg_per_image = 10, max_neg_tries = 50, augment = 1;
    double pos_fraction = 0.0, test_fraction = 0.0;
    std::uint64_t seed = 42;
    app.add_option("--annotations", annotations, "annotations.jsonl path")->required();
    app.add_option("--out", out, "Output patch archive (.pst)")->required();
    app.add_option("--patch-size", patch_size, "Patch side in pixels")->capture_default_str();
    app.add_option("--neg-per-image", neg_per_image, "Negatives per image")->capture_default_str();
    app.add_option("--max-neg-tries", max_neg_tries, "Sampling tries per negative")
        ->capture_default_str();
    app.add_option("--augment", augment, "Positive multiplier (dihedral transforms)")
        ->capture_default_str();
    app.add_option("--pos-fraction", pos_fraction,
                   "Rebalance negatives to this positive fraction (0 = off)")
        ->capture_default_str();
    app.add_option("--test-fraction", test_fraction,
                   "Split off a test set grouped by source image (0 = off)")
        ->capture_default_str();
    app.add_option("--test-out", test_out, "Test patch archive (with --test-fraction)");
    app.add_option("--seed", seed, "RNG seed")->capture_default_str();
    parse_args(app, std::move(args));
    ov.apply(app, "patch-size", patch_size);
    ov.apply(app, "neg-per-image", neg_per_image);
    ov.apply(app, "max-neg-tries", max_neg_tries);
    ov.apply(app, "augment", augment);
    ov.apply(app, "pos-fraction", pos_fraction);
    ov.apply(app, "test-fraction", test_fraction);
    ov.apply(app, "seed", seed);

    if (test_fraction > 0 && test_out.empty())
        throw CLI::ValidationError("--test-out is required with --test-fraction");

    Manifest mf;
    mf.subcommand = "extract";
    mf.config = {{"annotations", annotations}, {"out", out},
                 {"patch-size", patch_size},   {"neg-per-image", neg_per_image},
                 {"max-neg-tries", max_neg_tries}, {"augment", augment},
                 {"pos-fraction", pos_fraction},   {"test-fraction", test_fraction},
                 {"test-out", test_out},           {"seed", seed}};
    mf.inputs = {{"annotations", annotations}};

    const auto images = load_annotations(annotations);
    PatchSet all = extract_patches(images, patch_size, neg_per_image, max_neg_tries, seed);

    auto finish_train = [&](PatchSet ps) {
        if (augment > 1) ps = augment_positives(ps, augment, mix_seed(seed, 1));
        if (pos_fraction > 0) ps = rebalance(ps, pos_fraction, mix_seed(seed, 2));
        return ps;
    };

    if (test_fraction > 0) {
        auto [train_ps, test_ps] = split(all, test_fraction, mix_seed(seed, 3));
        train_ps = finish_train(std::move(train_ps));
        save_patchset(train_ps, out);
        save_patchset(test_ps, test_out);
        mf.outputs = {{"train", out}, {"test", test_out}};
        std::cout << "extract: " << train_ps.count() << " train patches ("
                  << train_ps.positives() << " positive), " << test_ps.count()
                  << " test patches (" << test_ps.positives() << " positive)\n";
    } else {
        PatchSet ps = finish_train(std::move(all));
        save_patchset(ps, out);
        mf.outputs = {{"patches", out}};
        std::cout << "extract: " << ps.count() << " patches (" << ps.positives()
                  << " positive)\n";
    }
    mf.write_for(out);
    return 0;
}

// ----------------------------------------------------------------- train

int cmd_train(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("Train the classifier on a patch archive", "pathonet train");
    std::string patches, out, arch, init;
    TrainingConfig cfg;
    cfg.epochs = 10;
    app.add_option("--patches", patches, "Training patch archive (.pst)")->required();
    app.add_option("--out", out, "Output model (.mdf)")->required();
    app.add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    app.add_option("--lr", cfg.lr, "Adam learning rate")->capture_default_str();
    app.add_option("--batch", cfg.batch_size, "Batch size")->capture_default_str();
    app.add_option("--seed", cfg.seed, "RNG seed (init + shuffling)")->capture_default_str();
    app.add_option("--arch", arch, "Network config JSON (default: built-in for patch size)");
    app.add_option("--init", init, "Initialize parameters from an existing model file");
    parse_args(app, std::move(args));
    ov.apply(app, "epochs", cfg.epochs);
    ov.apply(app, "lr", cfg.lr);
    ov.apply(app, "batch", cfg.batch_size);
    ov.apply(app, "seed", cfg.seed);

    Manifest mf;
    mf.subcommand = "train";
    mf.config = {{"patches", patches}, {"out", out},   {"epochs", cfg.epochs},
                 {"lr", cfg.lr},       {"batch", cfg.batch_size}, {"seed", cfg.seed},
                 {"arch", arch},       {"init", init}};
    mf.inputs = {{"patches", patches}};

    const PatchSet ps = load_patchset(patches);
    Model<float> model;
    if (!init.empty()) {
        model = load_model(init);
    } else {
        const NetworkConfig net_cfg =
            arch.empty() ? NetworkConfig::default_config(ps.patch_size, ps.channels)
                         : NetworkConfig::from_json(read_text_file(arch));
        model = build_model<float>(net_cfg, cfg.seed);
    }

    const auto log = train(model, ps, cfg);
    for (const EpochStats& e : log) {
        std::printf("epoch %3d  loss %.6f  accuracy %.4f\n", e.epoch, e.loss, e.accuracy);
    }
    save_model(model, out);
    mf.outputs = {{"model", out}};
    mf.write_for(out);
    std::cout << "train: wrote " << out << " ("
              << static_cast<double>(serialize_model(model).size()) / 1000.0 << " kB)\n";
    return 0;
}

// -------------------------------------------------------------- quantize

int cmd_quantize(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("Quantize model weights with per-layer k-means codebooks",
                 "pathonet quantize");
    std::string model_path, out, report_path;
    QuantizeConfig cfg;
    app.add_option("--model", model_path, "Float model (.mdf)")->required();
    app.add_option("--out", out, "Output quantized model (.mdq)")->required();
    app.add_option("--k", cfg.k, "Clusters per weight tensor")->capture_default_str();
    app.add_option("--seed", cfg.seed, "RNG seed (recorded)")->capture_default_str();
    app.add_option("--report", report_path, "Write compression report JSON here");
    parse_args(app, std::move(args));
    ov.apply(app, "k", cfg.k);
    ov.apply(app, "seed", cfg.seed);

    Manifest mf;
    mf.subcommand = "quantize";
    mf.config = {{"model", model_path}, {"out", out},    {"k", cfg.k},
                 {"seed", cfg.seed},    {"report", report_path}};
    mf.inputs = {{"model", model_path}};

    const Model<float> model = load_model(model_path);
    QuantizedModel qm = quantize_model(model, cfg);
    for (const std::string& w : qm.warnings) std::cerr << "quantize: " << w << "\n";
    save_quantized(qm, out);

    const CompressionReport rep = compression_report(model, qm);
    std::cout << rep.to_text();
    if (!report_path.empty()) write_text_file(report_path, rep.to_json() + "\n");

    mf.outputs = {{"quantized", out}};
    if (!report_path.empty()) mf.outputs["report"] = report_path;
    mf.write_for(out);
    return 0;
}

// -------------------------------------------------------------- finetune

int cmd_finetune(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("Fine-tune quantized codebook centroids (indices frozen)",
                 "pathonet finetune");
    std::string model_path, patches, out;
    QuantizeConfig cfg;
    cfg.finetune_epochs = 3;
    app.add_option("--model", model_path, "Quantized model (.mdq)")->required();
    app.add_option("--patches", patches, "Training patch archive (.pst)")->required();
    app.add_option("--out", out, "Output quantized model (.mdq)")->required();
    app.add_option("--epochs", cfg.finetune_epochs, "Fine-tune epochs")->capture_default_str();
    app.add_option("--lr", cfg.finetune_lr, "Adam learning rate")->capture_default_str();
    app.add_option("--batch", cfg.finetune_batch, "Batch size")->capture_default_str();
    app.add_option("--seed", cfg.seed, "RNG seed (shuffling)")->capture_default_str();
    parse_args(app, std::move(args));
    ov.apply(app, "epochs", cfg.finetune_epochs);
    ov.apply(app, "lr", cfg.finetune_lr);
    ov.apply(app, "batch", cfg.finetune_batch);
    ov.apply(app, "seed", cfg.seed);

    Manifest mf;
    mf.subcommand = "finetune";
    mf.config = {{"model", model_path}, {"patches", patches},
                 {"out", out},          {"epochs", cfg.finetune_epochs},
                 {"lr", cfg.finetune_lr}, {"batch", cfg.finetune_batch},
                 {"seed", cfg.seed}};
    mf.inputs = {{"model", model_path}, {"patches", patches}};

    QuantizedModel qm = load_quantized(model_path);
    const PatchSet ps = load_patchset(patches);
    const auto log = finetune(qm, ps, cfg);
    for (const EpochStats& e : log)
        std::printf("epoch %3d  loss %.6f  accuracy %.4f\n", e.epoch, e.loss, e.accuracy);
    save_quantized(qm, out);
    mf.outputs = {{"quantized", out}};
    mf.write_for(out);
    std::cout << "finetune: wrote " << out << "\n";
    return 0;
}

// ----------------------------------------------------------------- infer

int cmd_infer(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("Score patches with a model", "pathonet infer");
    std::string model_path, patches, out;
    int batch = 256;
    app.add_option("--model", model_path, "Model (.mdf or .mdq)")->required();
    app.add_option("--patches", patches, "Patch archive (.pst)")->required();
    app.add_option("--out", out, "Output CSV (index,label,score)")->required();
    app.add_option("--batch", batch, "Scoring batch size")->capture_default_str();
    parse_args(app, std::move(args));
    ov.apply(app, "batch", batch);

    Manifest mf;
    mf.subcommand = "infer";
    mf.config = {{"model", model_path}, {"patches", patches}, {"out", out}, {"batch", batch}};
    mf.inputs = {{"model", model_path}, {"patches", patches}};

    const Model<float> model = load_any_model(model_path);
    const PatchSet ps = load_patchset(patches);
    const std::vector<float> scores = score_patches(model, ps, batch);

    std::string csv = "index,label,score\n";
    char line[64];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%d,%.9g\n", i,
                      static_cast<int>(ps.labels[i]), static_cast<double>(scores[i]));
        csv += line;
    }
    write_text_file(out, csv);
    mf.outputs = {{"scores", out}};
    mf.write_for(out);
    std::cout << "infer: scored " << scores.size() << " patches -> " << out << "\n";
    return 0;
}

// ---------------------------------------------------------------- detect

int cmd_detect(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("Sliding-window pathogen detection on a whole image", "pathonet detect");
    std::string model_path, image_path, out, render_path, truth_path;
    DetectionConfig cfg;
    int stride = 0; // 0 = window/4
    app.add_option("--model", model_path, "Model (.mdf or .mdq)")->required();
    app.add_option("--image", image_path, "Input raster (PPM/PGM)")->required();
    app.add_option("--out", out, "Output detections (JSON lines)")->required();
    app.add_option("--stride", stride, "Window stride in pixels (default window/4)");
    app.add_option("--threshold", cfg.detection_threshold, "Detection threshold")
        ->capture_default_str();
    app.add_option("--overlap", cfg.overlap_threshold, "NMS overlap (IoU) threshold")
        ->capture_default_str();
    app.add_option("--batch", cfg.batch, "Window scoring batch size")->capture_default_str();
    app.add_option("--workers", cfg.workers, "Scoring worker threads")->capture_default_str();
    app.add_option("--render", render_path, "Write an annotated overlay PPM here");
    app.add_option("--truth", truth_path,
                   "annotations.jsonl with expert boxes for the overlay");
    parse_args(app, std::move(args));
    ov.apply(app, "threshold", cfg.detection_threshold);
    ov.apply(app, "overlap", cfg.overlap_threshold);
    ov.apply(app, "batch", cfg.batch);
    ov.apply(app, "workers", cfg.workers);

    Manifest mf;
    mf.subcommand = "detect";
    mf.inputs = {{"model", model_path}, {"image", image_path}};

    const Model<float> model = load_any_model(model_path);
    cfg.window = model.config.in_height;
    cfg.stride = stride > 0 ? stride : std::max(1, cfg.window / 4);
    mf.config = {{"model", model_path},  {"image", image_path},
                 {"out", out},           {"stride", cfg.stride},
                 {"threshold", cfg.detection_threshold},
                 {"overlap", cfg.overlap_threshold},
                 {"batch", cfg.batch},   {"workers", cfg.workers},
                 {"render", render_path}, {"truth", truth_path}};

    const Tensor<float> image = load_raster(image_path);
    const std::vector<Detection> dets = detect(image, model, cfg);
    write_text_file(out, detections_to_jsonl(fs::path(image_path).filename().string(), dets));

    if (!render_path.empty()) {
        std::vector<Box> truth;
        if (!truth_path.empty()) {
            for (const AnnotatedImage& ai : load_annotations(truth_path))
                if (ai.source == fs::path(image_path).filename().string())
                    truth = ai.boxes;
        }
        render_detections(image, dets, truth, render_path);
        mf.outputs["render"] = render_path;
    }
    mf.outputs["detections"] = out;
    mf.write_for(out);
    std::cout << "detect: " << dets.size() << " detections -> " << out << "\n";
    return 0;
}

// ------------------------------------------------------------------ eval

int cmd_eval(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("ROC/AUC and precision-recall/AP on a labeled patch archive",
                 "pathonet eval");
    std::string model_path, patches, out;
    int batch = 256;
    float threshold = 0.99f;
    app.add_option("--model", model_path, "Model (.mdf or .mdq)")->required();
    app.add_option("--patches", patches, "Labeled patch archive (.pst)")->required();
    app.add_option("--out", out, "Curve export base path (writes .csv and .json)");
    app.add_option("--batch", batch, "Scoring batch size")->capture_default_str();
    app.add_option("--threshold", threshold, "Confusion-matrix threshold")
        ->capture_default_str();
    parse_args(app, std::move(args));
    ov.apply(app, "batch", batch);
    ov.apply(app, "threshold", threshold);

    const Model<float> model = load_any_model(model_path);
    const PatchSet ps = load_patchset(patches);

    ScoredLabelSet set;
    set.scores = score_patches(model, ps, batch);
    set.labels = ps.labels;

    const EvalCurve curve = roc(set);
    const Confusion conf = confusion_at(set, threshold);
    std::printf("AUC %.6g  AP %.6g  (%lld positives, %lld negatives)\n", curve.auc, curve.ap,
                static_cast<long long>(curve.positives),
                static_cast<long long>(curve.negatives));
    std::printf("at threshold %.4g: accuracy %.6g precision %.6g recall %.6g f1 %.6g\n",
                static_cast<double>(threshold), conf.accuracy, conf.precision, conf.recall,
                conf.f1);

    if (!out.empty()) {
        export_curves(curve, out + ".csv", out + ".json");
        Manifest mf;
        mf.subcommand = "eval";
        mf.config = {{"model", model_path}, {"patches", patches}, {"out", out},
                     {"batch", batch},      {"threshold", threshold}};
        mf.inputs = {{"model", model_path}, {"patches", patches}};
        mf.outputs = {{"csv", out + ".csv"}, {"summary", out + ".json"}};
        mf.write_for(out + ".csv");
    }
    return 0;
}

// ----------------------------------------------------------------- bench

int cmd_bench(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("Per-sample inference latency and footprint benchmark", "pathonet bench");
    std::string model_path, out;
    std::int64_t count = 1000, warmup = 50;
    std::uint64_t seed = 42;
    int batch = 64;
    app.add_option("--model", model_path, "Model (.mdf or .mdq)")->required();
    app.add_option("--count", count, "Timed inference count")->capture_default_str();
    app.add_option("--warmup", warmup, "Untimed warmup inferences")->capture_default_str();
    app.add_option("--seed", seed, "Input RNG seed")->capture_default_str();
    app.add_option("--batch", batch, "Batch size for the batched-throughput pass")
        ->capture_default_str();
    app.add_option("--out", out, "Write the JSON report here");
    parse_args(app, std::move(args));
    ov.apply(app, "count", count);
    ov.apply(app, "warmup", warmup);
    ov.apply(app, "seed", seed);
    ov.apply(app, "batch", batch);

    bool quantized = false;
    const Model<float> model = load_any_model(model_path, &quantized);
    BenchReport rep = bench_inference(model, count, warmup, seed, batch);
    std::cout << rep.to_text();
    std::printf("Model footprint          %.3f kB%s\n",
                static_cast<double>(serialize_model(model).size()) / 1000.0,
                quantized ? " (dequantized from .mdq)" : "");

    if (!out.empty()) {
        write_text_file(out, rep.to_json() + "\n");
        Manifest mf;
        mf.subcommand = "bench";
        mf.config = {{"model", model_path}, {"count", count}, {"warmup", warmup},
                     {"seed", seed},        {"batch", batch}, {"out", out}};
        mf.inputs = {{"model", model_path}};
        mf.outputs = {{"report", out}};
        mf.write_for(out);
    }
    return 0;
}

// --------------------------------------------------------------- inspect

int cmd_inspect(std::vector<std::string> args, const Overlay& ov) {
    CLI::App app("Dump model headers, layer shapes and parameter sizes", "pathonet inspect");
    std::string model_path, activations_layer, image_path, out;
    app.add_option("--model", model_path, "Model (.mdf or .mdq)")->required();
    app.add_option("--activations", activations_layer,
                   "Dump this layer's activation maps (needs --image and --out)");
    app.add_option("--image", image_path, "Input raster at model input size");
    app.add_option("--out", out, "Activation raster output (PGM)");
    parse_args(app, std::move(args));
    (void)ov;

    bool quantized = false;
    const Model<float> model = load_any_model(model_path, &quantized);
    const NetworkConfig& cfg = model.config;

    std::cout << "file:   " << model_path << (quantized ? " (MDQ1 quantized)" : " (MDF1 float)")
              << "\n";
    std::cout << "input:  (" << cfg.in_channels << "," << cfg.in_height << "," << cfg.in_width
              << ")  classes: " << cfg.class_count << "\n";
    std::cout << "seed:   " << cfg.seed << "  trained epochs: " << cfg.trained_epochs << "\n";

    const auto shapes = cfg.validate();
    std::cout << "layers:\n";
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        std::string shape = "(";
        for (std::size_t d = 0; d < shapes[i].size(); ++d)
            shape += (d ? "," : "") + std::to_string(shapes[i][d]);
        shape += ")";
        std::printf("  %-12s %-10s -> %s\n", cfg.layers[i].name.c_str(),
                    layer_kind_name(cfg.layers[i].kind).c_str(), shape.c_str());
    }
    std::cout << "parameters:\n";
    std::int64_t total = 0;
    for (const auto& [name, t] : model.params) {
        std::printf("  %-26s %-14s %8lld floats\n", name.c_str(), t.shape_str().c_str(),
                    static_cast<long long>(t.numel()));
        total += t.numel();
    }
    std::printf("  total %lld floats, %.3f kB serialized\n", static_cast<long long>(total),
                static_cast<double>(serialize_model(model).size()) / 1000.0);

    if (!activations_layer.empty()) {
        if (image_path.empty() || out.empty())
            throw CLI::ValidationError("--activations needs --image and --out");
        Tensor<float> img = load_raster(image_path);
        if (img.extent(0) == 1 && cfg.in_channels == 3) img = to_rgb(img);
        dump_activations(model, img, activations_layer, out);
        std::cout << "activations: wrote " << out << "\n";

        Manifest mf;
        mf.subcommand = "inspect";
        mf.config = {{"model", model_path}, {"activations", activations_layer},
                     {"image", image_path}, {"out", out}};
        mf.inputs = {{"model", model_path}, {"image", image_path}};
        mf.outputs = {{"raster", out}};
        mf.write_for(out);
    }
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    static const char* kUsage =
        "usage: pathonet <subcommand> [flags]\n"
        "subcommands:\n"
        "  synth      generate synthetic annotated images\n"
        "  extract    extract labeled patches from annotations\n"
        "  train      train the classifier\n"
        "  quantize   k-means weight quantization\n"
        "  finetune   fine-tune quantized centroids\n"
        "  infer      score patches\n"
        "  detect     sliding-window detection + NMS\n"
        "  eval       ROC/AUC and PR/AP evaluation\n"
        "  bench      latency/footprint benchmark\n"
        "  inspect    dump model structure (and activation maps)\n"
        "global flags: --config FILE (JSON defaults, overridden by flags)\n"
        "run 'pathonet <subcommand> --help' for per-subcommand flags\n";

    std::vector<std::string> rest;
    std::string config_path;
    std::string sub;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[++i];
        } else if (sub.empty() && !args[i].empty() && args[i][0] != '-') {
            sub = args[i];
        } else {
            rest.push_back(args[i]);
        }
    }

    if (sub.empty()) {
        const bool help = std::find(args.begin(), args.end(), "--help") != args.end() ||
                          std::find(args.begin(), args.end(), "-h") != args.end();
        (help ? std::cout : std::cerr) << kUsage;
        return help ? 0 : 1;
    }

    try {
        json file_cfg;
        if (!config_path.empty()) {
            try {
                file_cfg = json::parse(read_text_file(config_path));
            } catch (const json::exception& e) {
                throw FormatError(config_path + ": bad config JSON: " + e.what());
            }
        }
        const Overlay ov{file_cfg.is_object() && file_cfg.contains(sub) ? file_cfg[sub]
                                                                        : json()};

        if (sub == "synth") return cmd_synth(std::move(rest), ov);
        if (sub == "extract") return cmd_extract(std::move(rest), ov);
        if (sub == "train") return cmd_train(std::move(rest), ov);
        if (sub == "quantize") return cmd_quantize(std::move(rest), ov);
        if (sub == "finetune") return cmd_finetune(std::move(rest), ov);
        if (sub == "infer") return cmd_infer(std::move(rest), ov);
        if (sub == "detect") return cmd_detect(std::move(rest), ov);
        if (sub == "eval") return cmd_eval(std::move(rest), ov);
        if (sub == "bench") return cmd_bench(std::move(rest), ov);
        if (sub == "inspect") return cmd_inspect(std::move(rest), ov);
        std::cerr << "unknown subcommand \"" << sub << "\"\n" << kUsage;
        return 1;
    } catch (const CLI::CallForHelp&) {
        return 0; // help text printed where the parse ran
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace pathonet
