#include "facedet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "facedet/dot.hpp"
#include "facedet/parallel.hpp"
#include "json.hpp"

namespace facedet {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
    if (t_n < t_p) throw ConfigError("train config: t_n must be >= t_p");
    if (mining_cycles < 1) throw ConfigError("train config: mining_cycles must be >= 1");
    if (!(lambda > 0.0)) throw ConfigError("train config: lambda must be > 0");
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (negative_batch < 1) throw ConfigError("train config: negative_batch must be >= 1");
    nms.validate();
}

TrainConfig parse_train_config(const std::string& json_text, TrainConfig cfg) {
    try {
        const json doc = json::parse(json_text);
        if (!doc.is_object()) throw ConfigError("train config must be a JSON object");
        for (const auto& [key, value] : doc.items()) {
            if (key == "t_p") cfg.t_p = value.get<std::size_t>();
            else if (key == "t_n") cfg.t_n = value.get<std::size_t>();
            else if (key == "negatives_per_image") cfg.negatives_per_image = value.get<std::size_t>();
            else if (key == "min_positives") cfg.min_positives = value.get<std::size_t>();
            else if (key == "negative_batch") cfg.negative_batch = value.get<std::size_t>();
            else if (key == "mining_cycles") cfg.mining_cycles = value.get<std::size_t>();
            else if (key == "lambda") cfg.lambda = value.get<double>();
            else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "detection_threshold") cfg.detection_threshold = value.get<double>();
            else if (key == "nms") {
                for (const auto& [nk, nv] : value.items()) {
                    if (nk == "overlap_thresh") cfg.nms.overlap_thresh = nv.get<double>();
                    else if (nk == "big_score_gap") cfg.nms.big_score_gap = nv.get<double>();
                    else if (nk == "small_score_gap") cfg.nms.small_score_gap = nv.get<double>();
                    else if (nk == "containment_thresh") cfg.nms.containment_thresh = nv.get<double>();
                    else throw ConfigError("train config: unknown nms key '" + nk + "'");
                }
            } else {
                throw ConfigError("train config: unknown key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open train config '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_train_config(buffer.str(), base);
}

std::string train_config_to_json(const TrainConfig& cfg) {
    json doc;
    doc["t_p"] = cfg.t_p;
    doc["t_n"] = cfg.t_n;
    doc["negatives_per_image"] = cfg.negatives_per_image;
    doc["min_positives"] = cfg.min_positives;
    doc["negative_batch"] = cfg.negative_batch;
    doc["mining_cycles"] = cfg.mining_cycles;
    doc["lambda"] = cfg.lambda;
    doc["epochs"] = cfg.epochs;
    doc["seed"] = cfg.seed;
    doc["detection_threshold"] = cfg.detection_threshold;
    doc["nms"] = {{"overlap_thresh", cfg.nms.overlap_thresh},
                  {"big_score_gap", cfg.nms.big_score_gap},
                  {"small_score_gap", cfg.nms.small_score_gap},
                  {"containment_thresh", cfg.nms.containment_thresh}};
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Sample selection

FeatureSize face_feature_size(const BoundingBox& box) {
    if (!(box.w > 0.0 && box.h > 0.0)) throw DimensionError("face box must have positive area");
    constexpr auto s = static_cast<double>(kFeatureStride);
    return {static_cast<std::size_t>(std::ceil(box.h / s)), static_cast<std::size_t>(std::ceil(box.w / s))};
}

namespace {

std::size_t abs_diff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

bool fits(const Tensor3& f, WindowSize w) { return w.i <= f.height() && w.j <= f.width(); }

}  // namespace

bool selects_positive(FeatureSize face, WindowSize window, std::size_t t_p) {
    return abs_diff(window.i, face.h) <= t_p && abs_diff(window.j, face.w) <= t_p;
}

bool selects_negative(FeatureSize face, WindowSize window, std::size_t t_n) {
    return abs_diff(window.i, face.h) > t_n && abs_diff(window.j, face.w) > t_n;
}

std::vector<std::vector<float>> harvest_positives(std::span<const TrainingImage> images, WindowSize window,
                                                  std::size_t t_p) {
    std::vector<std::vector<float>> out;
    for (const auto& img : images) {
        if (!img.face || !fits(*img.feature, window)) continue;
        if (!selects_positive(face_feature_size(*img.face), window, t_p)) continue;
        constexpr auto s = static_cast<double>(kFeatureStride);
        const auto r0 = static_cast<std::size_t>(std::max(0.0, std::floor(img.face->y / s)));
        const auto c0 = static_cast<std::size_t>(std::max(0.0, std::floor(img.face->x / s)));
        const std::size_t r = std::min(r0, img.feature->height() - window.i);
        const std::size_t c = std::min(c0, img.feature->width() - window.j);
        out.push_back(flatten_patch(*img.feature, r, c, window));
    }
    return out;
}

std::vector<std::vector<float>> harvest_negatives(std::span<const TrainingImage> images, WindowSize window,
                                                  std::size_t t_n, std::size_t negatives_per_image, Rng& rng) {
    std::vector<std::vector<float>> out;
    for (const auto& img : images) {
        if (!fits(*img.feature, window)) continue;
        if (img.face && !selects_negative(face_feature_size(*img.face), window, t_n)) continue;
        const std::size_t rows = img.feature->height() - window.i + 1;
        const std::size_t cols = img.feature->width() - window.j + 1;
        for (std::size_t n = 0; n < negatives_per_image; ++n) {
            const std::size_t r = rng.below(rows);
            const std::size_t c = rng.below(cols);
            out.push_back(flatten_patch(*img.feature, r, c, window));
        }
    }
    return out;
}

NormStats norm_stats(std::span<const std::vector<float>> samples) {
    if (samples.size() < 2) throw InsufficientDataError("norm_stats needs at least 2 samples");
    const std::size_t dim = samples.front().size();
    // Welford's running update, one pass over the samples.
    std::vector<double> mean(dim, 0.0), m2(dim, 0.0);
    double count = 0.0;
    for (const auto& s : samples) {
        if (s.size() != dim) throw DimensionError("norm_stats: samples differ in length");
        count += 1.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double x = s[k];
            const double delta = x - mean[k];
            mean[k] += delta / count;
            m2[k] += delta * (x - mean[k]);
        }
    }
    NormStats out;
    out.mean.resize(dim);
    out.std.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
        out.mean[k] = static_cast<float>(mean[k]);
        const double sd = std::sqrt(std::max(0.0, m2[k] / count));
        out.std[k] = std::max(static_cast<float>(sd), kStdFloor);
    }
    return out;
}

// ---------------------------------------------------------------------------
// SVM fitting

namespace {

std::vector<float> standardise(const std::vector<float>& x, const NormStats& stats) {
    std::vector<float> z(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) z[k] = (x[k] - stats.mean[k]) / stats.std[k];
    return z;
}

struct LinearSvm {
    std::vector<double> w;
    double b = 0.0;

    double score(const std::vector<float>& z) const { return detail::dot_f64_f32(w.data(), z.data(), z.size()) + b; }
};

// lambda/2 (|w|^2 + b^2) + 1/2 mean_pos hinge + 1/2 mean_neg hinge. The bias
// is the weight of a constant 1 input and is regularized with the rest.
double objective(const LinearSvm& svm, double lambda, const std::vector<std::vector<float>>& pos,
                 const std::vector<std::vector<float>>& neg) {
    double reg = svm.b * svm.b;
    for (double v : svm.w) reg += v * v;
    auto mean_hinge = [&](const std::vector<std::vector<float>>& set, double y) {
        if (set.empty()) return 0.0;
        double sum = 0.0;
        for (const auto& z : set) sum += std::max(0.0, 1.0 - y * svm.score(z));
        return sum / static_cast<double>(set.size());
    };
    return 0.5 * lambda * reg + 0.5 * mean_hinge(pos, 1.0) + 0.5 * mean_hinge(neg, -1.0);
}

// One full-batch subgradient step with step size 1 / (lambda * t), followed
// by projection of (w, b) onto the ball of radius 1 / sqrt(lambda).
void subgradient_step(LinearSvm& svm, double lambda, std::size_t t, const std::vector<std::vector<float>>& pos,
                      const std::vector<std::vector<float>>& neg) {
    const std::size_t dim = svm.w.size();
    std::vector<double> grad(dim, 0.0);
    double grad_b = 0.0;
    auto accumulate = [&](const std::vector<std::vector<float>>& set, double y) {
        if (set.empty()) return;
        const double weight = 0.5 / static_cast<double>(set.size());
        for (const auto& z : set) {
            if (y * svm.score(z) < 1.0) {
                const double c = weight * y;
                for (std::size_t k = 0; k < dim; ++k) grad[k] += c * z[k];
                grad_b += c;
            }
        }
    };
    accumulate(pos, 1.0);
    accumulate(neg, -1.0);

    const double eta = 1.0 / (lambda * static_cast<double>(t));
    const double shrink = 1.0 - eta * lambda;
    double norm2 = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
        svm.w[k] = shrink * svm.w[k] + eta * grad[k];
        norm2 += svm.w[k] * svm.w[k];
    }
    svm.b = shrink * svm.b + eta * grad_b;
    norm2 += svm.b * svm.b;
    const double radius = 1.0 / std::sqrt(lambda);
    if (norm2 > radius * radius) {
        const double scale = radius / std::sqrt(norm2);
        for (double& v : svm.w) v *= scale;
        svm.b *= scale;
    }
}

std::uint64_t window_stream(WindowSize w) { return w.i * 1024 + w.j; }

}  // namespace

std::optional<SvmFit> train_svm(const SampleSet& samples, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t p = samples.positives.size();
    if (p < std::max<std::size_t>(cfg.min_positives, 1) || samples.negative_pool.empty()) return std::nullopt;
    const std::size_t dim = samples.window.length();
    for (const auto& v : samples.positives) {
        if (v.size() != dim) throw DimensionError("positive sample length does not match the window");
    }
    for (const auto& v : samples.negative_pool) {
        if (v.size() != dim) throw DimensionError("negative sample length does not match the window");
    }

    Rng rng(mix_seed(cfg.seed ^ 0x5eed5eed5eedULL, window_stream(samples.window)));
    std::vector<std::size_t> pool_order(samples.negative_pool.size());
    std::iota(pool_order.begin(), pool_order.end(), 0);
    rng.shuffle(pool_order);
    std::size_t cursor = std::min(cfg.negative_batch, pool_order.size());

    // Statistics come from the positives and the first negative batch.
    std::vector<std::vector<float>> stats_set = samples.positives;
    for (std::size_t k = 0; k < cursor; ++k) stats_set.push_back(samples.negative_pool[pool_order[k]]);
    if (stats_set.size() < 2) return std::nullopt;
    const NormStats stats = norm_stats(stats_set);
    stats_set.clear();
    stats_set.shrink_to_fit();

    std::vector<std::vector<float>> pos;
    pos.reserve(p);
    for (const auto& v : samples.positives) pos.push_back(standardise(v, stats));
    std::vector<std::vector<float>> batch;
    std::vector<std::size_t> batch_ids;
    std::vector<bool> in_batch(pool_order.size(), false);
    for (std::size_t k = 0; k < cursor; ++k) {
        batch.push_back(standardise(samples.negative_pool[pool_order[k]], stats));
        batch_ids.push_back(pool_order[k]);
        in_batch[pool_order[k]] = true;
    }

    SvmFit fit;
    LinearSvm svm{std::vector<double>(dim, 0.0), 0.0};
    fit.initial_objective = objective(svm, cfg.lambda, pos, batch);
    fit.negatives_seen = cursor;

    auto count_pool_positive = [&] {
        std::size_t n = 0;
        for (const auto& v : samples.negative_pool) {
            if (svm.score(standardise(v, stats)) > 0.0) ++n;
        }
        return n;
    };

    std::size_t t = 0;
    for (std::size_t cycle = 0; cycle < cfg.mining_cycles; ++cycle) {
        for (std::size_t e = 0; e < cfg.epochs; ++e) subgradient_step(svm, cfg.lambda, ++t, pos, batch);
        if (cycle == 0) fit.pool_positive_after_first_cycle = count_pool_positive();
        if (cycle + 1 == cfg.mining_cycles) break;

        // Keep negatives on or inside the margin, then refill from the pool.
        // Once the pool is used up the draw wraps around it, so negatives
        // dropped earlier can come back and the batch keeps its size.
        std::vector<std::vector<float>> kept;
        std::vector<std::size_t> kept_ids;
        for (std::size_t k = 0; k < batch.size(); ++k) {
            if (svm.score(batch[k]) >= -1.0) {
                kept.push_back(std::move(batch[k]));
                kept_ids.push_back(batch_ids[k]);
            } else {
                in_batch[batch_ids[k]] = false;
            }
        }
        batch = std::move(kept);
        batch_ids = std::move(kept_ids);
        for (std::size_t tries = 0; batch.size() < cfg.negative_batch && tries < pool_order.size(); ++tries) {
            const std::size_t id = pool_order[cursor++ % pool_order.size()];
            if (in_batch[id]) continue;
            batch.push_back(standardise(samples.negative_pool[id], stats));
            batch_ids.push_back(id);
            in_batch[id] = true;
        }
        fit.negatives_seen = std::min(cursor, pool_order.size());
    }
    fit.final_objective = objective(svm, cfg.lambda, pos, batch);
    fit.pool_positive_final = count_pool_positive();

    fit.model.size = samples.window;
    fit.model.weights.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) fit.model.weights[k] = static_cast<float>(svm.w[k]);
    fit.model.bias = static_cast<float>(svm.b);
    fit.model.mean = stats.mean;
    fit.model.std = stats.std;
    return fit;
}

// ---------------------------------------------------------------------------
// Bank assembly

ModelBank train_bank(std::span<const TrainingImage> images, const TrainConfig& cfg, TrainReport* report) {
    cfg.validate();
    if (images.empty()) throw TrainingError("training set is empty");
    const std::vector<WindowSize> grid = window_grid();
    std::vector<std::optional<WindowModel>> models(grid.size());
    std::vector<WindowReport> reports(grid.size());

    // RNG streams are derived per window, so worker scheduling cannot change results.
    parallel_for(grid.size(), [&](std::size_t k) {
        const WindowSize window = grid[k];
        reports[k].window = window;
        SampleSet samples{window, harvest_positives(images, window, cfg.t_p), {}};
        reports[k].positives = samples.positives.size();
        if (samples.positives.size() < std::max<std::size_t>(cfg.min_positives, 1)) return;
        Rng rng(mix_seed(cfg.seed, window_stream(window)));
        samples.negative_pool = harvest_negatives(images, window, cfg.t_n, cfg.negatives_per_image, rng);
        reports[k].negatives = samples.negative_pool.size();
        if (auto fit = train_svm(samples, cfg)) {
            models[k] = std::move(fit->model);
            reports[k].trained = true;
        }
    });

    ModelBank bank;
    bank.detection_threshold = cfg.detection_threshold;
    bank.nms = cfg.nms;
    for (auto& m : models) {
        if (m) bank.models.push_back(std::move(*m));
    }
    if (report) report->windows = std::move(reports);
    if (bank.models.empty()) throw TrainingError("every window size was discarded: not enough positive samples");
    return bank;
}

ModelBank train_bank(const Manifest& manifest, const Network& network, const TrainConfig& cfg, TrainReport* report,
                     std::size_t target_long_side) {
    if (manifest.items.empty()) throw TrainingError("training manifest is empty");
    std::vector<Tensor3> features;
    std::vector<TrainingImage> images;
    features.reserve(manifest.items.size());
    for (const auto& item : manifest.items) {
        const ImagePlane image = read_ppm(manifest.resolve(item));
        std::optional<BoundingBox> face;
        if (item.face) {
            const BoundingBox& b = *item.face;
            if (b.x < 0.0 || b.y < 0.0 || b.x + b.w > static_cast<double>(image.cols) ||
                b.y + b.h > static_cast<double>(image.rows)) {
                throw FormatError("face box of '" + item.path + "' lies outside the image");
            }
        }
        const Tensor3 input = preprocess(image, target_long_side);
        if (item.face) {
            const double sy = static_cast<double>(input.height()) / static_cast<double>(image.rows);
            const double sx = static_cast<double>(input.width()) / static_cast<double>(image.cols);
            face = BoundingBox{item.face->x * sx, item.face->y * sy, item.face->w * sx, item.face->h * sy};
        }
        features.push_back(network.forward(input));
        images.push_back({nullptr, face});
    }
    for (std::size_t k = 0; k < images.size(); ++k) images[k].feature = &features[k];
    return train_bank(images, cfg, report);
}

}  // namespace facedet
