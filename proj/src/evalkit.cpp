#include "epbc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace epbc::eval {

double iou(const DetectionBox& a, const DetectionBox& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
    const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
    const double uni = area_a + area_b - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

namespace {

// Confidence descending, original index ascending on ties.
std::vector<size_t> confidence_order(const std::vector<DetectionBox>& boxes) {
    std::vector<size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return boxes[a].confidence > boxes[b].confidence;
    });
    return order;
}

}  // namespace

std::vector<DetectionBox> nms(const std::vector<DetectionBox>& boxes,
                              double iou_threshold) {
    std::vector<size_t> order = confidence_order(boxes);
    std::vector<bool> kept(boxes.size(), false);
    std::vector<bool> dropped(boxes.size(), false);
    for (size_t oi = 0; oi < order.size(); ++oi) {
        const size_t i = order[oi];
        if (dropped[i]) continue;
        kept[i] = true;
        for (size_t oj = oi + 1; oj < order.size(); ++oj) {
            const size_t j = order[oj];
            if (dropped[j] || boxes[j].class_id != boxes[i].class_id) continue;
            if (iou(boxes[i], boxes[j]) > iou_threshold) dropped[j] = true;
        }
    }
    std::vector<DetectionBox> out;
    for (size_t i : order)
        if (kept[i]) out.push_back(boxes[i]);
    return out;
}

MatchOutcome match(const std::vector<DetectionBox>& preds,
                   const std::vector<DetectionBox>& truths,
                   double iou_threshold) {
    MatchOutcome out;
    out.is_tp.assign(preds.size(), false);
    out.matched_truth.assign(preds.size(), -1);
    std::vector<bool> truth_used(truths.size(), false);

    for (size_t i : confidence_order(preds)) {
        const DetectionBox& p = preds[i];
        int best = -1;
        double best_iou = 0.0;
        for (size_t t = 0; t < truths.size(); ++t) {
            if (truth_used[t] || truths[t].class_id != p.class_id) continue;
            const double ov = iou(p, truths[t]);
            if (ov >= iou_threshold && ov > best_iou) {
                best_iou = ov;
                best = int(t);
            }
        }
        auto& cc = out.per_class[p.class_id];
        if (best >= 0) {
            truth_used[size_t(best)] = true;
            out.is_tp[i] = true;
            out.matched_truth[i] = best;
            cc.tp += 1;
        } else {
            cc.fp += 1;
        }
    }
    for (size_t t = 0; t < truths.size(); ++t)
        if (!truth_used[t]) out.per_class[truths[t].class_id].fn += 1;
    return out;
}

double average_precision(std::vector<LabeledPrediction> labeled,
                         int64_t truth_count) {
    if (truth_count <= 0) return 0.0;
    std::stable_sort(labeled.begin(), labeled.end(),
                     [](const LabeledPrediction& a, const LabeledPrediction& b) {
                         return a.confidence > b.confidence;
                     });
    const size_t n = labeled.size();
    std::vector<double> recall(n), precision(n);
    int64_t tp = 0;
    for (size_t k = 0; k < n; ++k) {
        if (labeled[k].is_tp) ++tp;
        recall[k] = double(tp) / double(truth_count);
        precision[k] = double(tp) / double(k + 1);
    }
    // Monotone envelope, then the exact integral of the step function.
    double env = 0.0;
    double ap = 0.0;
    double prev_recall = 0.0;
    std::vector<double> envelope(n);
    for (size_t k = n; k-- > 0;) {
        env = std::max(env, precision[k]);
        envelope[k] = env;
    }
    for (size_t k = 0; k < n; ++k) {
        ap += (recall[k] - prev_recall) * envelope[k];
        prev_recall = recall[k];
    }
    return ap;
}

namespace {

constexpr std::array<double, 10> kIouThresholds = {
    0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};

// Class-agnostic greedy matching for the confusion matrix.
void accumulate_confusion(const std::vector<DetectionBox>& preds,
                          const std::vector<DetectionBox>& truths,
                          int num_classes,
                          std::vector<std::vector<double>>& m) {
    std::vector<bool> truth_used(truths.size(), false);
    const int bg = num_classes;
    for (size_t i : confidence_order(preds)) {
        const DetectionBox& p = preds[i];
        int best = -1;
        double best_iou = 0.0;
        for (size_t t = 0; t < truths.size(); ++t) {
            if (truth_used[t]) continue;
            const double ov = iou(p, truths[t]);
            if (ov >= 0.5 && ov > best_iou) {
                best_iou = ov;
                best = int(t);
            }
        }
        if (best >= 0) {
            truth_used[size_t(best)] = true;
            m[size_t(truths[size_t(best)].class_id)][size_t(p.class_id)] += 1.0;
        } else {
            m[size_t(bg)][size_t(p.class_id)] += 1.0;
        }
    }
    for (size_t t = 0; t < truths.size(); ++t)
        if (!truth_used[t]) m[size_t(truths[t].class_id)][size_t(bg)] += 1.0;
}

}  // namespace

MetricReport evaluate(const std::vector<std::vector<DetectionBox>>& preds,
                      const std::vector<std::vector<DetectionBox>>& truths) {
    if (preds.size() != truths.size())
        throw std::invalid_argument("evaluate: image count mismatch");
    const size_t images = preds.size();

    std::set<int> class_set;
    int max_class = -1;
    for (auto& img : truths)
        for (auto& b : img) {
            class_set.insert(b.class_id);
            max_class = std::max(max_class, b.class_id);
        }
    for (auto& img : preds)
        for (auto& b : img) max_class = std::max(max_class, b.class_id);

    MetricReport report;
    report.num_classes = max_class + 1;

    // Pool labels across images, one matching pass per IoU threshold.
    // pooled[t][c] holds (confidence, tp) for class c at threshold t.
    std::map<int, int64_t> truth_count;
    for (auto& img : truths)
        for (auto& b : img) truth_count[b.class_id] += 1;

    std::vector<std::map<int, std::vector<LabeledPrediction>>> pooled(
        kIouThresholds.size());
    for (size_t t = 0; t < kIouThresholds.size(); ++t) {
        for (size_t img = 0; img < images; ++img) {
            MatchOutcome mo = match(preds[img], truths[img], kIouThresholds[t]);
            for (size_t i = 0; i < preds[img].size(); ++i)
                pooled[t][preds[img][i].class_id].push_back(
                    {preds[img][i].confidence, mo.is_tp[i]});
        }
    }

    double map50 = 0.0, map5095 = 0.0;
    for (int cls : class_set) {
        ClassEval ce;
        ce.class_id = cls;
        ce.truth_count = truth_count[cls];
        for (size_t t = 0; t < kIouThresholds.size(); ++t) {
            auto it = pooled[t].find(cls);
            std::vector<LabeledPrediction> labeled =
                it == pooled[t].end() ? std::vector<LabeledPrediction>{}
                                      : it->second;
            ce.ap_at[t] = average_precision(std::move(labeled), ce.truth_count);
        }
        ce.ap50 = ce.ap_at[0];
        ce.ap5095 = 0.0;
        for (double ap : ce.ap_at) ce.ap5095 += ap;
        ce.ap5095 /= double(kIouThresholds.size());

        // Raw sweep points at IoU 0.5 for the PR curve.
        auto it = pooled[0].find(cls);
        if (it != pooled[0].end() && ce.truth_count > 0) {
            auto labeled = it->second;
            std::stable_sort(
                labeled.begin(), labeled.end(),
                [](const LabeledPrediction& a, const LabeledPrediction& b) {
                    return a.confidence > b.confidence;
                });
            int64_t tp = 0;
            for (size_t k = 0; k < labeled.size(); ++k) {
                if (labeled[k].is_tp) ++tp;
                ce.pr50.push_back({double(tp) / double(ce.truth_count),
                                   double(tp) / double(k + 1)});
            }
        }
        map50 += ce.ap50;
        map5095 += ce.ap5095;
        report.per_class.push_back(std::move(ce));
    }
    if (!report.per_class.empty()) {
        map50 /= double(report.per_class.size());
        map5095 /= double(report.per_class.size());
    }
    report.map50 = map50;
    report.map5095 = map5095;

    // Micro sweep at IoU 0.5 over all classes pooled together.
    {
        std::vector<LabeledPrediction> all;
        for (auto& [cls, v] : pooled[0])
            all.insert(all.end(), v.begin(), v.end());
        std::stable_sort(all.begin(), all.end(),
                         [](const LabeledPrediction& a,
                            const LabeledPrediction& b) {
                             return a.confidence > b.confidence;
                         });
        int64_t total_truths = 0;
        for (auto& [cls, n] : truth_count) total_truths += n;
        int64_t tp = 0;
        double best_f1 = -1.0;
        for (size_t k = 0; k < all.size(); ++k) {
            if (all[k].is_tp) ++tp;
            const double r =
                total_truths > 0 ? double(tp) / double(total_truths) : 0.0;
            const double p = double(tp) / double(k + 1);
            report.micro_pr50.push_back({r, p});
            const double f1 = (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
            if (f1 > best_f1) {
                best_f1 = f1;
                report.precision = p;
                report.recall = r;
            }
        }
    }

    // Confusion matrix at IoU 0.5 with a background row/column.
    const int dim = report.num_classes + 1;
    report.confusion.assign(size_t(dim), std::vector<double>(size_t(dim), 0.0));
    for (size_t img = 0; img < images; ++img)
        accumulate_confusion(preds[img], truths[img], report.num_classes,
                             report.confusion);
    report.confusion_norm = report.confusion;
    for (auto& row : report.confusion_norm) {
        double s = 0.0;
        for (double v : row) s += v;
        if (s > 0.0)
            for (double& v : row) v /= s;
    }
    return report;
}

// ---- file interface ----------------------------------------------------

DetectionFiles load_detection_files(const std::string& pred_path,
                                    const std::string& truth_path) {
    auto parse = [](const std::string& path, bool with_confidence) {
        std::map<std::string, std::vector<DetectionBox>> by_image;
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot open " + path);
        std::string line;
        int line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string id;
            DetectionBox b;
            bool ok = bool(ss >> id >> b.class_id);
            if (ok && with_confidence) ok = bool(ss >> b.confidence);
            if (ok) ok = bool(ss >> b.x1 >> b.y1 >> b.x2 >> b.y2);
            if (!ok)
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": malformed detection line");
            by_image[id].push_back(b);
        }
        return by_image;
    };

    auto preds = parse(pred_path, true);
    auto truths = parse(truth_path, false);

    std::set<std::string> ids;
    for (auto& [id, v] : preds) ids.insert(id);
    for (auto& [id, v] : truths) ids.insert(id);

    DetectionFiles out;
    for (auto& id : ids) {
        out.image_ids.push_back(id);
        out.preds.push_back(preds.count(id) ? preds[id]
                                            : std::vector<DetectionBox>{});
        out.truths.push_back(truths.count(id) ? truths[id]
                                              : std::vector<DetectionBox>{});
    }
    return out;
}

void write_metrics_csv(const MetricReport& report, const std::string& path,
                       const std::vector<std::string>& class_names) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "class,truths,ap50,ap5095\n";
    char buf[64];
    for (auto& ce : report.per_class) {
        std::string name = size_t(ce.class_id) < class_names.size()
                               ? class_names[size_t(ce.class_id)]
                               : "class" + std::to_string(ce.class_id);
        snprintf(buf, sizeof buf, "%.17g,%.17g", ce.ap50, ce.ap5095);
        f << name << "," << ce.truth_count << "," << buf << "\n";
    }
    snprintf(buf, sizeof buf, "%.17g,%.17g", report.map50, report.map5095);
    f << "all,,"
      << buf << "\n";
}

void write_pr_csv(const MetricReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "class,recall,precision\n";
    char buf[64];
    for (auto& ce : report.per_class)
        for (auto& p : ce.pr50) {
            snprintf(buf, sizeof buf, "%.17g,%.17g", p.recall, p.precision);
            f << ce.class_id << "," << buf << "\n";
        }
    for (auto& p : report.micro_pr50) {
        snprintf(buf, sizeof buf, "%.17g,%.17g", p.recall, p.precision);
        f << "all," << buf << "\n";
    }
}

}  // namespace epbc::eval
