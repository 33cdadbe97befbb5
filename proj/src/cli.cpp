#include "facedet/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "facedet/detector.hpp"
#include "facedet/eval.hpp"
#include "facedet/parallel.hpp"
#include "facedet/synth.hpp"
#include "facedet/trainer.hpp"
#include "json.hpp"

namespace facedet {

namespace {

using nlohmann::json;

// Everything a run needs; read from --config, then overridden by flags.
struct RunConfig {
    std::string weights;
    std::string network;
    std::string bank;
    std::string manifest;
    std::string output;
    json train = json::object();  // TrainConfig overrides
    json nms = json::object();    // NmsParams overrides
    std::size_t workers = 0;
    std::uint64_t seed = 0;
    std::uint64_t weights_seed = 0;
};

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run config '" + path + "'");
    try {
        const json doc = json::parse(in);
        const std::filesystem::path base = std::filesystem::path(path).parent_path();
        auto file = [&](const char* key, std::string& dst) {
            if (!doc.contains(key)) return;
            std::filesystem::path p = doc.at(key).get<std::string>();
            dst = (p.is_absolute() ? p : base / p).string();
        };
        file("weights", rc.weights);
        file("network", rc.network);
        file("bank", rc.bank);
        file("manifest", rc.manifest);
        file("output", rc.output);
        if (doc.contains("train")) rc.train = doc.at("train");
        if (doc.contains("nms")) rc.nms = doc.at("nms");
        rc.workers = doc.value("workers", rc.workers);
        rc.seed = doc.value("seed", rc.seed);
        rc.weights_seed = doc.value("weights_seed", rc.weights_seed);
        for (const auto& [key, value] : doc.items()) {
            static const std::vector<std::string> known = {"weights", "network", "bank", "manifest", "output", "train",
                                                           "nms", "workers", "seed", "weights_seed"};
            if (std::find(known.begin(), known.end(), key) == known.end()) {
                throw ConfigError("run config: unknown key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return rc;
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw UsageError(std::string("missing required ") + what);
    if (!std::filesystem::is_regular_file(path)) throw IoError(std::string(what) + " '" + path + "' does not exist");
}

NetworkSpec network_from(const RunConfig& rc) {
    if (rc.network.empty()) return alexnet_conv5_spec();
    require_file(rc.network, "network spec");
    return load_network_spec(rc.network);
}

WeightStore weights_from(const RunConfig& rc, const NetworkSpec& spec) {
    if (rc.weights.empty()) return random_weights(spec, rc.weights_seed);
    require_file(rc.weights, "weights file");
    return dfw_load(rc.weights);
}

std::string dims_string(const std::vector<std::uint32_t>& dims) {
    std::string s = "[";
    for (std::size_t k = 0; k < dims.size(); ++k) s += (k ? ", " : "") + std::to_string(dims[k]);
    return s + "]";
}

// Flags shared by commands that run the network.
struct EngineFlags {
    std::string config;
    std::string network;
    std::string weights;
    std::optional<std::uint64_t> weights_seed;
    std::optional<std::size_t> workers;
    bool fast_exp = false;

    void add(CLI::App* cmd) {
        cmd->add_option("--config", config, "Run config JSON (flags override it)");
        cmd->add_option("--network", network, "Network spec JSON (default: built-in AlexNet conv1-conv5)");
        cmd->add_option("--weights", weights, "Network weights DFW (default: seeded random weights)");
        cmd->add_option("--weights-seed", weights_seed, "Seed for random weights when --weights is absent");
        cmd->add_option("--workers", workers, "Worker threads (default: all cores)");
        cmd->add_flag("--fast-exp", fast_exp, "Use the fast exponential in LRN layers");
    }

    RunConfig resolve() const {
        RunConfig rc = load_run_config(config);
        if (!network.empty()) rc.network = network;
        if (!weights.empty()) rc.weights = weights;
        if (weights_seed) rc.weights_seed = *weights_seed;
        if (workers) rc.workers = *workers;
        set_worker_count(rc.workers);
        return rc;
    }

    Network network_for(const RunConfig& rc) const {
        const NetworkSpec spec = network_from(rc);
        Network net(spec, weights_from(rc, spec));
        if (fast_exp) net.set_lrn_mode(ExpMode::fast);
        return net;
    }
};

int cmd_inspect(const std::string& path, std::ostream& out) {
    require_file(path, "DFW file");
    const WeightStore store = dfw_load(path);
    out << store.size() << " entries\n";
    for (const auto& [name, array] : store.entries()) out << name << ' ' << dims_string(array.dims) << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Deep-feature single-face detector", "facedet"};
    app.require_subcommand(1);

    // inspect
    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "List DFW entries and shapes");
    inspect->add_option("file", inspect_path, "DFW file")->required();

    // features
    EngineFlags feat_flags;
    std::string feat_image, feat_out;
    std::size_t feat_long_side = kDefaultLongSide;
    auto* features = app.add_subcommand("features", "Write an image's conv5 map as DFW");
    feat_flags.add(features);
    features->add_option("--image", feat_image, "Input PPM image")->required();
    features->add_option("--out", feat_out, "Output DFW")->required();
    features->add_option("--long-side", feat_long_side, "Resize target for the longer side");

    // synth
    std::size_t synth_count = 0, synth_holdout = 0;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    double synth_faces = SynthConfig{}.face_fraction;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--count", synth_count, "Number of images")->required();
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--holdout", synth_holdout, "Also write train.jsonl / test.jsonl, the last N images for test");
    synth->add_option("--face-fraction", synth_faces, "Share of images with a face")->check(CLI::Range(0.0, 1.0));

    // train
    EngineFlags train_flags;
    std::string train_manifest, train_out, train_cfg_path;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::size_t> t_p, t_n, neg_per_image, min_pos, neg_batch, cycles, epochs;
    std::optional<double> lambda, train_threshold;
    auto* train = app.add_subcommand("train", "Train the window model bank from a manifest");
    train_flags.add(train);
    train->add_option("--manifest", train_manifest, "Training manifest JSONL");
    train->add_option("--out", train_out, "Output bank DFW");
    train->add_option("--train-config", train_cfg_path, "TrainConfig JSON");
    train->add_option("--seed", train_seed, "Training seed");
    train->add_option("--t-p", t_p, "Positive selection threshold (cells)");
    train->add_option("--t-n", t_n, "Negative selection threshold (cells)");
    train->add_option("--negatives-per-image", neg_per_image, "Random negatives drawn per eligible image");
    train->add_option("--min-positives", min_pos, "Windows with fewer positives are discarded");
    train->add_option("--negative-batch", neg_batch, "Negatives per mining batch");
    train->add_option("--mining-cycles", cycles, "Hard-negative mining cycles");
    train->add_option("--epochs", epochs, "Subgradient steps per cycle");
    train->add_option("--lambda", lambda, "L2 regularization strength");
    train->add_option("--threshold", train_threshold, "Detection threshold stored in the bank");

    // detect
    EngineFlags det_flags;
    std::string det_manifest, det_image, det_bank, det_out;
    std::optional<double> det_threshold;
    auto* detect_cmd = app.add_subcommand("detect", "Detect faces in a manifest or a single image");
    det_flags.add(detect_cmd);
    auto* det_manifest_opt = detect_cmd->add_option("--manifest", det_manifest, "Manifest JSONL");
    detect_cmd->add_option("--image", det_image, "Single PPM image")->excludes(det_manifest_opt);
    detect_cmd->add_option("--bank", det_bank, "Model bank DFW");
    detect_cmd->add_option("--out", det_out, "Detections JSONL (default: stdout)");
    detect_cmd->add_option("--threshold", det_threshold, "Override the bank's detection threshold");

    // eval
    std::string eval_manifest, eval_dets, eval_out;
    double eval_iou = 0.5, eval_precision = 0.95;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate detections against a manifest");
    eval_cmd->add_option("--manifest", eval_manifest, "Annotation manifest JSONL")->required();
    eval_cmd->add_option("--detections", eval_dets, "Detections JSONL")->required();
    eval_cmd->add_option("--out-dir", eval_out, "Directory for pr_curve.csv and iou_sweep.csv");
    eval_cmd->add_option("--iou", eval_iou, "IoU threshold for the PR curve")->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_option("--precision", eval_precision, "Precision level for recall-at-precision");

    // bench
    EngineFlags bench_flags;
    std::string bench_image;
    std::size_t bench_repeat = 3;
    auto* bench = app.add_subcommand("bench", "Time forward passes per layer");
    bench_flags.add(bench);
    bench->add_option("--image", bench_image, "PPM image (default: synthetic 640x360 frame)");
    bench->add_option("--repeat", bench_repeat, "Timed repetitions")->check(CLI::PositiveNumber);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "facedet: usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*inspect) return cmd_inspect(inspect_path, out);

        if (*features) {
            const RunConfig rc = feat_flags.resolve();
            require_file(feat_image, "image");
            const Network net = feat_flags.network_for(rc);
            const Tensor3 map = net.forward(preprocess(read_ppm(feat_image), feat_long_side));
            WeightStore store;
            store.put("conv5", Array::from_tensor(map));
            dfw_save(store, feat_out);
            out << "conv5 " << map.height() << 'x' << map.width() << 'x' << map.channels() << '\n';
            return kExitOk;
        }

        if (*synth) {
            if (synth_holdout > synth_count) throw UsageError("--holdout exceeds --count");
            Rng rng(synth_seed);
            SynthConfig cfg;
            cfg.face_fraction = synth_faces;
            const auto samples = generate_synthetic(synth_count, rng, cfg);
            const auto manifest = write_synthetic(samples, synth_out);
            if (synth_holdout > 0) {
                const auto split = manifest.begin() + static_cast<std::ptrdiff_t>(synth_count - synth_holdout);
                write_manifest({manifest.begin(), split}, std::filesystem::path(synth_out) / "train.jsonl");
                write_manifest({split, manifest.end()}, std::filesystem::path(synth_out) / "test.jsonl");
            }
            std::size_t faces = 0;
            for (const auto& a : manifest) faces += a.face.has_value();
            out << "wrote " << manifest.size() << " images (" << faces << " with faces) to " << synth_out << '\n';
            return kExitOk;
        }

        if (*train) {
            RunConfig rc = train_flags.resolve();
            if (!train_manifest.empty()) rc.manifest = train_manifest;
            if (!train_out.empty()) rc.output = train_out;
            if (rc.output.empty()) throw UsageError("train needs --out");
            require_file(rc.manifest, "manifest");

            TrainConfig cfg;
            cfg.seed = rc.seed;
            if (!rc.train.empty()) cfg = parse_train_config(rc.train.dump(), cfg);
            if (!rc.nms.empty()) cfg = parse_train_config(json{{"nms", rc.nms}}.dump(), cfg);
            if (!train_cfg_path.empty()) {
                require_file(train_cfg_path, "train config");
                cfg = load_train_config(train_cfg_path, cfg);
            }
            if (train_seed) cfg.seed = *train_seed;
            if (t_p) cfg.t_p = *t_p;
            if (t_n) cfg.t_n = *t_n;
            if (neg_per_image) cfg.negatives_per_image = *neg_per_image;
            if (min_pos) cfg.min_positives = *min_pos;
            if (neg_batch) cfg.negative_batch = *neg_batch;
            if (cycles) cfg.mining_cycles = *cycles;
            if (epochs) cfg.epochs = *epochs;
            if (lambda) cfg.lambda = *lambda;
            if (train_threshold) cfg.detection_threshold = *train_threshold;
            cfg.validate();

            const Manifest manifest = read_manifest(rc.manifest);
            const Network net = train_flags.network_for(rc);
            TrainReport report;
            const ModelBank bank = train_bank(manifest, net, cfg, &report);
            dfw_save(bank_to_store(bank), rc.output);
            for (const auto& w : report.windows) {
                if (w.trained) {
                    out << "window i" << w.window.i << "j" << w.window.j << ": " << w.positives << " positives, "
                        << w.negatives << " negatives\n";
                }
            }
            out << "trained " << bank.models.size() << " of " << report.windows.size() << " window sizes\n";
            return kExitOk;
        }

        if (*detect_cmd) {
            RunConfig rc = det_flags.resolve();
            if (!det_bank.empty()) rc.bank = det_bank;
            if (!det_manifest.empty()) rc.manifest = det_manifest;
            if (!det_out.empty()) rc.output = det_out;
            if (det_image.empty()) require_file(rc.manifest, "manifest");
            else require_file(det_image, "image");
            require_file(rc.bank, "model bank");

            ModelBank bank = bank_from_store(dfw_load(rc.bank));
            if (det_threshold) bank.detection_threshold = *det_threshold;
            const Detector detector(det_flags.network_for(rc), std::move(bank));

            std::vector<DetectionRecord> records;
            if (!det_image.empty()) {
                records.push_back({det_image, detector.detect(read_ppm(det_image))});
            } else {
                const Manifest manifest = read_manifest(rc.manifest);
                for (const auto& item : manifest.items) {
                    records.push_back({item.path, detector.detect(read_ppm(manifest.resolve(item)))});
                }
            }
            if (rc.output.empty()) {
                for (const auto& r : records) out << detection_line(r) << '\n';
            } else {
                write_detections(records, rc.output);
                std::size_t present = 0;
                for (const auto& r : records) present += r.detection.present;
                out << "wrote " << records.size() << " detections (" << present << " present) to " << rc.output
                    << '\n';
            }
            return kExitOk;
        }

        if (*eval_cmd) {
            require_file(eval_manifest, "manifest");
            require_file(eval_dets, "detections file");
            const Manifest manifest = read_manifest(eval_manifest);
            const auto detections = read_detections(eval_dets);
            const auto records = join_records(manifest.items, detections);
            const auto curve = pr_curve(records, eval_iou);
            const auto sweep = iou_sweep(records);
            const Summary s = summary(records, eval_iou, eval_precision);
            if (!eval_out.empty()) {
                std::filesystem::create_directories(eval_out);
                std::ofstream pr(std::filesystem::path(eval_out) / "pr_curve.csv");
                std::ofstream sw(std::filesystem::path(eval_out) / "iou_sweep.csv");
                if (!pr || !sw) throw IoError("cannot write CSV files under '" + eval_out + "'");
                write_pr_csv(curve, pr);
                write_sweep_csv(sweep, sw);
            }
            out << "records " << records.size() << '\n';
            out << "max_f1 " << s.max_f1 << '\n';
            out << "max_accuracy " << s.max_accuracy << '\n';
            out << "recall_at_precision_" << eval_precision << ' ';
            if (s.recall_at_precision) out << *s.recall_at_precision << '\n';
            else out << "-\n";
            if (eval_out.empty()) write_sweep_csv(sweep, out);
            return kExitOk;
        }

        if (*bench) {
            const RunConfig rc = bench_flags.resolve();
            ImagePlane image;
            if (!bench_image.empty()) {
                require_file(bench_image, "image");
                image = read_ppm(bench_image);
            } else {
                Rng rng(0);
                image = generate_synthetic(1, rng).front().image;
            }
            const Network net = bench_flags.network_for(rc);
            const Tensor3 input = preprocess(image);
            std::vector<LayerTiming> timings;
            net.forward(input, &timings);  // warm-up
            std::vector<double> total_ms(timings.size(), 0.0);
            std::vector<double> min_ms(timings.size(), std::numeric_limits<double>::infinity());
            for (std::size_t rep = 0; rep < bench_repeat; ++rep) {
                net.forward(input, &timings);
                for (std::size_t k = 0; k < timings.size(); ++k) {
                    const double ms = std::chrono::duration<double, std::milli>(timings[k].elapsed).count();
                    total_ms[k] += ms;
                    min_ms[k] = std::min(min_ms[k], ms);
                }
            }
            double conv = 0.0, all = 0.0;
            out << "input " << input.height() << 'x' << input.width() << ", " << bench_repeat << " repetitions, "
                << worker_count() << " workers\n";
            out << "layer,mean_ms,min_ms\n";
            for (std::size_t k = 0; k < timings.size(); ++k) {
                const double mean = total_ms[k] / static_cast<double>(bench_repeat);
                out << timings[k].name << ',' << mean << ',' << min_ms[k] << '\n';
                all += mean;
                if (timings[k].conv) conv += mean;
            }
            out << "total_ms " << all << '\n';
            out << "conv_share " << (all > 0.0 ? conv / all : 0.0) << '\n';
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "facedet: usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "facedet: numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        err << "facedet: error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "facedet: error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace facedet
