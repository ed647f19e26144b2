#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace epbc::eval {

// Pixel-unit corner-form detection. confidence is meaningful for
// predictions only; ground truth carries 1.0.
struct DetectionBox {
    int class_id = 0;
    double confidence = 1.0;
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Intersection area over union area; 0 when disjoint or degenerate.
double iou(const DetectionBox& a, const DetectionBox& b);

// Greedy per-class suppression: keep the highest-confidence box, drop
// remaining same-class boxes with IoU strictly above the threshold.
// Ties break toward the lower original index. Output is sorted by
// confidence descending.
std::vector<DetectionBox> nms(const std::vector<DetectionBox>& boxes,
                              double iou_threshold);

struct ClassCounts {
    int64_t tp = 0, fp = 0, fn = 0;
};

struct MatchOutcome {
    std::vector<bool> is_tp;          // aligned with the input predictions
    std::vector<int> matched_truth;   // truth index or -1
    std::map<int, ClassCounts> per_class;
};

// Greedy one-to-one matching by descending confidence; a prediction is a
// TP when an unmatched same-class truth overlaps with IoU >= threshold
// (taking the highest-IoU candidate). Confidence ties break toward the
// lower original index.
MatchOutcome match(const std::vector<DetectionBox>& preds,
                   const std::vector<DetectionBox>& truths,
                   double iou_threshold);

// Ranked prediction with its match label, as consumed by AP.
struct LabeledPrediction {
    double confidence = 0;
    bool is_tp = false;
};

// All-point interpolation: monotone precision envelope over the
// confidence sweep, integrated exactly over recall. Zero truths give 0.
double average_precision(std::vector<LabeledPrediction> labeled,
                         int64_t truth_count);

struct PRPoint {
    double recall = 0, precision = 0;
};

struct ClassEval {
    int class_id = 0;
    int64_t truth_count = 0;
    double ap50 = 0;
    std::array<double, 10> ap_at;  // IoU 0.50, 0.55, ..., 0.95
    double ap5095 = 0;
    std::vector<PRPoint> pr50;  // raw sweep points at IoU 0.5
};

struct MetricReport {
    std::vector<ClassEval> per_class;  // classes present in the truths
    double map50 = 0;
    double map5095 = 0;
    // Rows are actual classes, columns predicted, with one extra
    // background row/column at index num_classes.
    std::vector<std::vector<double>> confusion;       // raw counts
    std::vector<std::vector<double>> confusion_norm;  // rows sum to 1
    int num_classes = 0;
    std::vector<PRPoint> micro_pr50;
    // Micro-averaged operating point at the best F1 along the sweep.
    double precision = 0, recall = 0;
};

// Full offline evaluation over per-image predictions and truths.
// Matching reruns per IoU threshold; the confusion matrix is built at
// IoU 0.5 with class-agnostic matching.
MetricReport evaluate(const std::vector<std::vector<DetectionBox>>& preds,
                      const std::vector<std::vector<DetectionBox>>& truths);

// ---- file interface ---------------------------------------------------
// Prediction line:  image_id class_id confidence x1 y1 x2 y2
// Truth line:       image_id class_id x1 y1 x2 y2
// Images are keyed by the id token; ids appearing in either file form
// the image set (sorted for determinism).

struct DetectionFiles {
    std::vector<std::string> image_ids;
    std::vector<std::vector<DetectionBox>> preds;
    std::vector<std::vector<DetectionBox>> truths;
};

DetectionFiles load_detection_files(const std::string& pred_path,
                                    const std::string& truth_path);

void write_metrics_csv(const MetricReport& report, const std::string& path,
                       const std::vector<std::string>& class_names = {});
void write_pr_csv(const MetricReport& report, const std::string& path);

}  // namespace epbc::eval
