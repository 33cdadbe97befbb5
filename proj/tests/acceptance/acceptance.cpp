// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>

#include "facedet/cli.hpp"
#include "facedet/detector.hpp"
#include "facedet/eval.hpp"
#include "facedet/parallel.hpp"
#include "facedet/trainer.hpp"
#include "oracles.hpp"

using namespace facedet;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

struct Criterion {
    std::string name;
    double budget_s;
    std::function<Verdict()> run;
};

Verdict fail(std::string why) { return {false, std::move(why)}; }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = run(args, o, e);
    if (out) *out = o.str();
    if (code != 0) std::fprintf(stderr, "  cli %s -> %d: %s", args[0].c_str(), code, e.str().c_str());
    return code;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path kWork = fs::current_path() / "acceptance_work";

// ---------------------------------------------------------------------------

Verdict shape_law() {
    const NetworkSpec spec = alexnet_conv5_spec();
    const Network net(spec, random_weights(spec, 1));
    Rng rng(20);
    for (int k = 0; k < 200; ++k) {
        const std::size_t h = 1 + rng.below(200), w = 1 + rng.below(200);
        const Tensor3 y = net.forward(oracle::random_tensor(rng, h, w, 3, -120.0, 130.0));
        if (y.height() != (h + 15) / 16 || y.width() != (w + 15) / 16 || y.channels() != 256) {
            return fail("input " + std::to_string(h) + "x" + std::to_string(w) + " gave " +
                        std::to_string(y.height()) + "x" + std::to_string(y.width()) + "x" +
                        std::to_string(y.channels()));
        }
    }
    return {true, "200 sizes"};
}

Verdict layer_oracles() {
    Rng rng(21);
    double worst_conv = 0.0, worst_pool = 0.0, worst_lrn = 0.0;
    for (int k = 0; k < 100; ++k) {
        const std::size_t groups = 1 + rng.below(2);
        const std::size_t in_g = 1 + rng.below(4), out_g = 1 + rng.below(4);
        const std::size_t kernel = 1 + 2 * rng.below(3), stride = 1 + rng.below(3);
        const Tensor3 x = oracle::random_tensor(rng, kernel + rng.below(10), kernel + rng.below(10), in_g * groups);
        const ConvKernels kern(out_g * groups, kernel, kernel, in_g,
                               oracle::random_vector(rng, out_g * groups * kernel * kernel * in_g));
        const std::vector<float> bias = oracle::random_vector(rng, out_g * groups);
        const Padding pad{rng.below(kernel), rng.below(kernel), rng.below(kernel), rng.below(kernel)};
        worst_conv = std::max(worst_conv, oracle::max_abs_diff(conv2d(x, kern, bias, stride, pad, groups),
                                                               oracle::conv2d(x, kern, bias, stride, pad, groups)));
    }
    for (int k = 0; k < 100; ++k) {
        const std::size_t window = 1 + rng.below(4), stride = 1 + rng.below(3);
        const Tensor3 x = oracle::random_tensor(rng, window + rng.below(10), window + rng.below(10), 1 + rng.below(5));
        const Padding pad{rng.below(window), rng.below(window), rng.below(window), rng.below(window)};
        worst_pool = std::max(worst_pool, oracle::max_abs_diff(maxpool2d(x, window, stride, pad),
                                                               oracle::maxpool2d(x, window, stride, pad)));
    }
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 1 + 2 * rng.below(4);
        const float kk = float(rng.uniform(0.5, 3.0)), alpha = float(rng.uniform(1e-5, 1e-1)),
                    beta = float(rng.uniform(0.5, 1.0));
        const Tensor3 x = oracle::random_tensor(rng, 1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(12), -5.0, 5.0);
        worst_lrn = std::max(worst_lrn, oracle::max_abs_diff(lrn(x, n, kk, alpha, beta, ExpMode::exact),
                                                             oracle::lrn(x, n, kk, alpha, beta)));
    }
    const std::string detail = "max abs conv " + fmt("%.2e", worst_conv) + ", pool " + fmt("%.2e", worst_pool) +
                               ", lrn " + fmt("%.2e", worst_lrn);
    if (worst_conv > 1e-5 || worst_pool > 1e-5 || worst_lrn > 1e-5) return fail(detail);
    return {true, detail};
}

Verdict fast_exp_bound() {
    double worst = 0.0, prev = -1.0;
    bool monotone = true;
    for (int k = 0; k < 10000; ++k) {
        const double y = -10.0 + 20.0 * k / 9999.0;
        const double f = fast_exp(y);
        worst = std::max(worst, std::fabs(f - std::exp(y)) / std::exp(y));
        if (f < prev) monotone = false;
        prev = f;
    }
    const std::string detail = "max rel err " + fmt("%.4f", worst) + (monotone ? ", monotone" : ", NOT monotone");
    if (worst > 0.05 || !monotone) return fail(detail);
    return {true, detail};
}

Verdict grid() {
    const auto g = window_grid();
    std::vector<WindowSize> want;
    for (std::size_t i = 9; i <= 23; i += 2)
        for (std::size_t j = 8; j <= 20; j += 2) want.push_back({i, j});
    if (g != want) return fail(std::to_string(g.size()) + " sizes, expected the 8 x 7 grid");
    return {true, "56 sizes"};
}

Verdict best_position_scan() {
    Rng rng(22);
    double worst_rel = 0.0;
    for (int m = 0; m < 20; ++m) {
        const WindowSize w{9 + 2 * rng.below(3), 8 + 2 * rng.below(3)};
        const WindowModel model = oracle::random_model(rng, w, 256);
        for (int f = 0; f < 20; ++f) {
            const Tensor3 feat = oracle::random_tensor(rng, w.i + rng.below(5), w.j + rng.below(5), 256);
            const auto got = best_position(model, feat);
            const auto want = oracle::brute_force_best(model, feat, &score_window);
            if (!got || got->r != want.r || got->c != want.c || got->score != want.score) {
                return fail("model " + std::to_string(m) + " feature " + std::to_string(f) + " disagrees");
            }
            const double direct = oracle::score(model, feat, got->r, got->c);
            worst_rel = std::max(worst_rel, std::fabs(direct - got->score) / std::max(1.0, std::fabs(direct)));
        }
    }
    if (worst_rel > 1e-5) return fail("score vs direct dot product " + fmt("%.2e", worst_rel));
    return {true, "400 scans, score vs direct " + fmt("%.2e", worst_rel)};
}

Verdict nms_properties() {
    const NmsParams p;
    auto cand = [](double x, double y, double w, double h, double s) {
        Candidate c;
        c.box = {x, y, w, h};
        c.score = s;
        return c;
    };
    auto same = [](const Candidate& a, const Candidate& b) {
        return a.box.x == b.box.x && a.box.y == b.box.y && a.box.w == b.box.w && a.box.h == b.box.h &&
               a.score == b.score;
    };
    const auto twin = nms_modified({cand(0, 0, 32, 32, 2.0), cand(0, 0, 32, 32, 0.5)}, p);
    if (twin.size() != 1 || twin[0].score != 2.0) return fail("identical boxes 2.0 / 0.5");
    const auto nested = nms_modified({cand(0, 0, 160, 160, 1.1), cand(40, 40, 48, 48, 1.2)}, p);
    if (nested.size() != 1 || nested[0].score != 1.1) return fail("small 1.2 inside large 1.1");

    Rng rng(23);
    std::size_t covered_max = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Candidate> in(1 + rng.below(20));
        for (auto& c : in) {
            c = cand(16.0 * rng.below(10), 16.0 * rng.below(10), 16.0 * (1 + rng.below(10)),
                     16.0 * (1 + rng.below(10)), std::round(rng.uniform(-2.0, 4.0) * 10.0) / 10.0);
        }
        const auto out = nms_modified(in, p);
        for (const auto& c : out) {
            if (std::none_of(in.begin(), in.end(), [&](const Candidate& x) { return same(x, c); })) {
                return fail("output not a subset");
            }
        }
        if (!std::is_sorted(out.begin(), out.end(),
                            [](const Candidate& a, const Candidate& b) { return a.score > b.score; })) {
            return fail("output not sorted");
        }
        const auto top = *std::max_element(in.begin(), in.end(),
                                           [](const Candidate& a, const Candidate& b) { return a.score < b.score; });
        const bool kept = std::any_of(out.begin(), out.end(), [&](const Candidate& c) { return same(c, top); });
        // The top box may only yield to a larger box that contains it and
        // scores within small_score_gap, as in the nested hand case.
        const bool yielded = std::any_of(out.begin(), out.end(), [&](const Candidate& c) {
            return c.box.area() > top.box.area() &&
                   intersection_area(c.box, top.box) / top.box.area() >= p.containment_thresh &&
                   c.score >= top.score - p.small_score_gap;
        });
        if (!kept && !yielded) return fail("top-score candidate lost in trial " + std::to_string(trial));
        covered_max += !kept;
        const auto again = nms_modified(out, p);
        if (again.size() != out.size() || !std::equal(again.begin(), again.end(), out.begin(), same)) {
            return fail("not idempotent in trial " + std::to_string(trial));
        }
    }
    return {true, "1000 sets, top yielded to a containing box in " + std::to_string(covered_max)};
}

Verdict svm_training() {
    Rng rng(24);
    SampleSet s{{1, 1}, {}, {}};
    for (int k = 0; k < 30; ++k) {
        auto v = oracle::random_vector(rng, 256, -0.1, 0.1);
        v[0] += 1.0f;
        s.positives.push_back(v);
    }
    for (int k = 0; k < 400; ++k) {
        auto v = oracle::random_vector(rng, 256, -0.1, 0.1);
        v[0] -= 1.0f;
        s.negative_pool.push_back(v);
    }
    TrainConfig cfg;
    cfg.min_positives = 10;
    cfg.negative_batch = 400;
    const auto full = train_svm(s, cfg);
    if (!full) return fail("window discarded");
    std::size_t wrong = 0;
    auto score = [&](const WindowModel& m, const std::vector<float>& v) {
        return score_window(m, Tensor3(1, 1, 256, v), 0, 0);
    };
    for (const auto& v : s.positives) wrong += score(full->model, v) <= 0.0;
    for (const auto& v : s.negative_pool) wrong += score(full->model, v) >= 0.0;
    if (wrong) return fail(std::to_string(wrong) + " training samples misclassified");
    if (full->final_objective > 0.9 * full->initial_objective) {
        return fail("objective " + fmt("%.4f", full->final_objective) + " vs zero-weight " +
                    fmt("%.4f", full->initial_objective));
    }
    cfg.negative_batch = 100;
    const auto mined = train_svm(s, cfg);
    if (mined->pool_positive_final > mined->pool_positive_after_first_cycle) {
        return fail("mining raised positive-scoring pool negatives " +
                    std::to_string(mined->pool_positive_after_first_cycle) + " -> " +
                    std::to_string(mined->pool_positive_final));
    }
    const auto rerun = train_svm(s, cfg);
    if (rerun->model.weights != mined->model.weights || rerun->model.bias != mined->model.bias) {
        return fail("rerun differs");
    }
    return {true, "accuracy 100%, objective " + fmt("%.4f", full->final_objective) + " vs " +
                      fmt("%.4f", full->initial_objective) + ", pool positives " +
                      std::to_string(mined->pool_positive_after_first_cycle) + " -> " +
                      std::to_string(mined->pool_positive_final)};
}

Verdict end_to_end() {
    const fs::path dir = kWork / "e2e";
    fs::remove_all(dir);
    if (cli({"synth", "--count", "200", "--seed", "7", "--out", dir.string(), "--holdout", "50"}) != 0) {
        return fail("synth failed");
    }
    const std::string cfg = (fs::path(FACEDET_SOURCE_DIR) / "configs" / "synthetic_train.json").string();
    if (cli({"train", "--manifest", (dir / "train.jsonl").string(), "--train-config", cfg, "--out",
             (dir / "bank.dfw").string()}) != 0) {
        return fail("train failed");
    }
    if (cli({"detect", "--manifest", (dir / "test.jsonl").string(), "--bank", (dir / "bank.dfw").string(), "--out",
             (dir / "detections.jsonl").string()}) != 0) {
        return fail("detect failed");
    }
    std::string report;
    if (cli({"eval", "--manifest", (dir / "test.jsonl").string(), "--detections",
             (dir / "detections.jsonl").string(), "--out-dir", (dir / "report").string(), "--iou", "0.5"},
            &report) != 0) {
        return fail("eval failed");
    }
    const auto records = join_records(read_manifest(dir / "test.jsonl").items, read_detections(dir / "detections.jsonl"));
    const Summary s = summary(records, 0.5);
    std::istringstream sweep(slurp(dir / "report" / "iou_sweep.csv"));
    std::string line;
    std::getline(sweep, line);
    std::vector<double> f1;
    while (std::getline(sweep, line)) f1.push_back(std::stod(line.substr(line.find(',') + 1)));
    std::string detail = "max F1 " + fmt("%.4f", s.max_f1) + " at IoU 0.5, sweep rows " + std::to_string(f1.size());
    if (f1.size() != 9) return fail(detail);
    for (std::size_t k = 1; k < f1.size(); ++k) {
        if (f1[k] > f1[k - 1]) return fail(detail + ", sweep increases at row " + std::to_string(k + 1));
    }
    if (s.max_f1 < 0.90) return fail(detail + " (target 0.90)");
    return {true, detail};
}

Verdict eval_arithmetic() {
    const BoundingBox g{10, 20, 100, 120};
    auto rec = [](std::optional<BoundingBox> face, std::optional<BoundingBox> box, std::optional<double> s) {
        EvalRecord r;
        r.annotation.face = face;
        r.detection = {s.has_value(), box, s};
        return r;
    };
    const std::vector<EvalRecord> records = {rec(g, g, 3.0), rec(std::nullopt, g, 2.0), rec(g, g, 0.0),
                                             rec(std::nullopt, std::nullopt, std::nullopt)};
    const PRPoint low = pr_curve(records, 0.5).back();
    if (low.precision != 2.0 / 3.0 || low.recall != 1.0 || low.accuracy != 0.75) {
        return fail("lowest threshold gives P " + fmt("%.4f", low.precision) + " R " + fmt("%.4f", low.recall) +
                    " A " + fmt("%.4f", low.accuracy));
    }
    if (iou(g, g) != 1.0 || iou({0, 0, 10, 10}, {20, 0, 10, 10}) != 0.0 ||
        iou({0, 0, 10, 10}, {0, 5, 10, 10}) != 1.0 / 3.0) {
        return fail("iou unit cases");
    }
    return {true, "P 2/3, R 1, A 3/4; iou 1, 0, 1/3"};
}

Verdict determinism() {
    const fs::path dir = kWork / "determinism";
    fs::remove_all(dir);
    if (cli({"synth", "--count", "40", "--seed", "3", "--out", dir.string(), "--holdout", "10"}) != 0) {
        return fail("synth failed");
    }
    const std::size_t max_workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    std::vector<std::size_t> counts = {1, 2, 4, max_workers};
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    std::string bank0, det0;
    for (std::size_t n : counts) {
        const std::string w = std::to_string(n);
        const fs::path bank = dir / ("bank_" + w + ".dfw"), det = dir / ("det_" + w + ".jsonl");
        if (cli({"train", "--manifest", (dir / "train.jsonl").string(), "--min-positives", "2", "--workers", w,
                 "--out", bank.string()}) != 0 ||
            cli({"detect", "--manifest", (dir / "test.jsonl").string(), "--bank", bank.string(), "--workers", w,
                 "--out", det.string()}) != 0) {
            return fail("run with " + w + " workers failed");
        }
        if (bank0.empty()) {
            bank0 = slurp(bank);
            det0 = slurp(det);
        } else if (slurp(bank) != bank0) {
            return fail("bank differs at " + w + " workers");
        } else if (slurp(det) != det0) {
            return fail("detections differ at " + w + " workers");
        }
    }
    set_worker_count(0);
    std::string list;
    for (std::size_t n : counts) list += (list.empty() ? "" : ", ") + std::to_string(n);
    return {true, "bank and detections identical at workers " + list + " (host max " + std::to_string(max_workers) + ")"};
}

Verdict bench_share() {
    std::string out;
    if (cli({"bench", "--repeat", "2"}, &out) != 0) return fail("bench failed");
    const auto at = out.find("conv_share ");
    if (at == std::string::npos) return fail("no conv_share line");
    const double share = std::stod(out.substr(at + 11));
    return {true, "conv share " + fmt("%.3f", share) + " of forward time (reported, not enforced)"};
}

}  // namespace

int main() {
    fs::create_directories(kWork);
    const std::vector<Criterion> criteria = {
        {"shape_law", 60, shape_law},
        {"layer_oracles", 60, layer_oracles},
        {"fast_exp", 1, fast_exp_bound},
        {"window_grid", 1, grid},
        {"best_position_scan", 60, best_position_scan},
        {"nms_properties", 10, nms_properties},
        {"svm_training", 60, svm_training},
        {"end_to_end_synthetic", 600, end_to_end},
        {"eval_arithmetic", 1, eval_arithmetic},
        {"determinism", 300, determinism},
        {"bench_conv_share", 60, bench_share},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (o.pass && secs > c.budget_s) {
            o = fail(o.detail + "; took " + fmt("%.1f", secs) + " s, budget " + fmt("%.0f", c.budget_s) + " s");
        }
        failed += !o.pass;
        std::printf("%s  %-22s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), secs, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
    return failed ? 1 : 0;
}
