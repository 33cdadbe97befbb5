#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "facedet/manifest.hpp"

namespace facedet {

struct EvalRecord {
    Annotation annotation;
    Detection detection;
};

enum class Outcome { tp, fp, fn, tn };

/// Single-detection protocol. A detection counts when it has a box and
/// score >= score_thresh; a counted detection on a face image is a TP when
/// IoU > iou_thresh and an FP otherwise.
Outcome classify(const EvalRecord& record, double iou_thresh, double score_thresh);

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const { return tp + fp + fn + tn; }
};

Counts count_outcomes(std::span<const EvalRecord> records, double iou_thresh, double score_thresh);

struct PRPoint {
    double t = 0.0;  // score threshold; +inf admits no detection
    double precision = 1.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

PRPoint pr_point(const Counts& c, double t);

/// One point per distinct detection score plus +inf, by descending threshold.
/// Precision is 1 when nothing is detected; recall is 0 when no face exists.
std::vector<PRPoint> pr_curve(std::span<const EvalRecord> records, double iou_thresh);

struct Summary {
    double max_f1 = 0.0;
    double max_accuracy = 0.0;
    std::optional<double> recall_at_precision;  // absent when no point reaches the precision
};

std::optional<double> recall_at_precision(std::span<const PRPoint> curve, double min_precision);
Summary summary(std::span<const EvalRecord> records, double iou_thresh, double min_precision = 0.95);

struct SweepRow {
    double iou_thresh = 0.0;
    double max_f1 = 0.0;
    double max_accuracy = 0.0;
};

std::vector<double> default_iou_thresholds();  // 0.1 .. 0.9 step 0.1
std::vector<SweepRow> iou_sweep(std::span<const EvalRecord> records,
                                std::span<const double> thresholds = default_iou_thresholds());

/// Joins annotations and detections on path. Every path must appear exactly
/// once on each side; otherwise FormatError.
std::vector<EvalRecord> join_records(std::span<const Annotation> annotations,
                                     std::span<const DetectionRecord> detections);

// CSV headers "t,precision,recall,f1,accuracy" and "iou_thresh,max_f1,max_accuracy".
void write_pr_csv(std::span<const PRPoint> curve, std::ostream& out);
void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);

}  // namespace facedet
