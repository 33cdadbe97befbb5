#include "facedet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>

namespace facedet {

Outcome classify(const EvalRecord& record, double iou_thresh, double score_thresh) {
    const Detection& d = record.detection;
    const bool fired = d.box && d.score && *d.score >= score_thresh;
    if (!record.annotation.face) return fired ? Outcome::fp : Outcome::tn;
    if (!fired) return Outcome::fn;
    return iou(*d.box, *record.annotation.face) > iou_thresh ? Outcome::tp : Outcome::fp;
}

Counts count_outcomes(std::span<const EvalRecord> records, double iou_thresh, double score_thresh) {
    Counts c;
    for (const auto& r : records) {
        switch (classify(r, iou_thresh, score_thresh)) {
            case Outcome::tp: ++c.tp; break;
            case Outcome::fp: ++c.fp; break;
            case Outcome::fn: ++c.fn; break;
            case Outcome::tn: ++c.tn; break;
        }
    }
    return c;
}

PRPoint pr_point(const Counts& c, double t) {
    PRPoint p;
    p.t = t;
    const auto d = [](std::size_t v) { return static_cast<double>(v); };
    p.precision = c.tp + c.fp == 0 ? 1.0 : d(c.tp) / d(c.tp + c.fp);
    p.recall = c.tp + c.fn == 0 ? 0.0 : d(c.tp) / d(c.tp + c.fn);
    p.f1 = p.precision + p.recall == 0.0 ? 0.0 : 2.0 * p.precision * p.recall / (p.precision + p.recall);
    p.accuracy = c.total() == 0 ? 0.0 : d(c.tp + c.tn) / d(c.total());
    return p;
}

std::vector<PRPoint> pr_curve(std::span<const EvalRecord> records, double iou_thresh) {
    if (records.empty()) throw InsufficientDataError("pr_curve needs at least one record");
    std::vector<double> thresholds;
    for (const auto& r : records) {
        if (r.detection.box && r.detection.score) thresholds.push_back(*r.detection.score);
    }
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.insert(thresholds.begin(), std::numeric_limits<double>::infinity());

    std::vector<PRPoint> curve;
    curve.reserve(thresholds.size());
    for (double t : thresholds) curve.push_back(pr_point(count_outcomes(records, iou_thresh, t), t));
    return curve;
}

std::optional<double> recall_at_precision(std::span<const PRPoint> curve, double min_precision) {
    std::optional<double> best;
    for (const auto& p : curve) {
        if (p.precision >= min_precision && (!best || p.recall > *best)) best = p.recall;
    }
    return best;
}

Summary summary(std::span<const EvalRecord> records, double iou_thresh, double min_precision) {
    const std::vector<PRPoint> curve = pr_curve(records, iou_thresh);
    Summary s;
    for (const auto& p : curve) {
        s.max_f1 = std::max(s.max_f1, p.f1);
        s.max_accuracy = std::max(s.max_accuracy, p.accuracy);
    }
    s.recall_at_precision = recall_at_precision(curve, min_precision);
    return s;
}

std::vector<double> default_iou_thresholds() {
    std::vector<double> t;
    for (int k = 1; k <= 9; ++k) t.push_back(k / 10.0);
    return t;
}

std::vector<SweepRow> iou_sweep(std::span<const EvalRecord> records, std::span<const double> thresholds) {
    std::vector<SweepRow> rows;
    for (double th : thresholds) {
        const Summary s = summary(records, th);
        rows.push_back({th, s.max_f1, s.max_accuracy});
    }
    return rows;
}

std::vector<EvalRecord> join_records(std::span<const Annotation> annotations,
                                     std::span<const DetectionRecord> detections) {
    std::map<std::string, const DetectionRecord*> by_path;
    for (const auto& d : detections) {
        if (!by_path.emplace(d.path, &d).second) throw FormatError("duplicate detection for '" + d.path + "'");
    }
    if (by_path.size() != annotations.size()) {
        throw FormatError("annotation and detection files list different paths (" +
                          std::to_string(annotations.size()) + " vs " + std::to_string(by_path.size()) + ")");
    }
    std::vector<EvalRecord> records;
    records.reserve(annotations.size());
    for (const auto& a : annotations) {
        const auto it = by_path.find(a.path);
        if (it == by_path.end()) throw FormatError("no detection for annotated path '" + a.path + "'");
        records.push_back({a, it->second->detection});
        by_path.erase(it);
    }
    return records;
}

namespace {

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

void write_pr_csv(std::span<const PRPoint> curve, std::ostream& out) {
    out << "t,precision,recall,f1,accuracy\n";
    for (const auto& p : curve) {
        out << fmt(p.t) << ',' << fmt(p.precision) << ',' << fmt(p.recall) << ',' << fmt(p.f1) << ','
            << fmt(p.accuracy) << '\n';
    }
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
    out << "iou_thresh,max_f1,max_accuracy\n";
    for (const auto& r : rows) out << fmt(r.iou_thresh) << ',' << fmt(r.max_f1) << ',' << fmt(r.max_accuracy) << '\n';
}

}  // namespace facedet
