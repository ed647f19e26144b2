#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "epbc/evalkit.hpp"
#include "epbc/rng.hpp"
#include "eval_reference.hpp"

using namespace epbc::eval;
using epbc::Rng;

namespace {

DetectionBox box(int cls, double conf, double x1, double y1, double x2,
                 double y2) {
    return DetectionBox{cls, conf, x1, y1, x2, y2};
}

}  // namespace

TEST_CASE("iou identities and hand value") {
    DetectionBox a = box(0, 1, 0, 0, 2, 2);
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, box(0, 1, 5, 5, 7, 7)) == 0.0);
    CHECK(iou(a, box(0, 1, 1, 1, 3, 3)) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    // degenerate boxes
    DetectionBox z = box(0, 1, 1, 1, 1, 1);
    CHECK(iou(z, z) == 0.0);
    CHECK(iou(z, a) == 0.0);
}

TEST_CASE("nms keeps singletons, suppresses above threshold only") {
    auto single = nms({box(0, 0.9, 0, 0, 10, 10)}, 0.7);
    CHECK(single.size() == 1);

    // IoU 0.8 pair: (0,0,10,8) vs (0,0,10,10)
    auto pair_high = nms({box(0, 0.9, 0, 0, 10, 10), box(0, 0.8, 0, 0, 10, 8)},
                         0.7);
    REQUIRE(pair_high.size() == 1);
    CHECK(pair_high[0].confidence == 0.9);

    // IoU 0.5 pair: (0,0,10,5) vs (0,0,10,10)
    auto pair_low = nms({box(0, 0.9, 0, 0, 10, 10), box(0, 0.8, 0, 0, 10, 5)},
                        0.7);
    CHECK(pair_low.size() == 2);

    // different classes never suppress each other
    auto cross = nms({box(0, 0.9, 0, 0, 10, 10), box(1, 0.8, 0, 0, 10, 10)},
                     0.7);
    CHECK(cross.size() == 2);
}

TEST_CASE("nms is idempotent and sorted by confidence") {
    Rng rng(3);
    std::vector<DetectionBox> boxes;
    for (int i = 0; i < 40; ++i) {
        double x = rng.uniform(0, 80), y = rng.uniform(0, 80);
        boxes.push_back(box(rng.uniform_int(0, 2), rng.uniform(),
                            x, y, x + rng.uniform(5, 30), y + rng.uniform(5, 30)));
    }
    auto once = nms(boxes, 0.7);
    auto twice = nms(once, 0.7);
    REQUIRE(once.size() == twice.size());
    for (size_t i = 0; i < once.size(); ++i) {
        CHECK(once[i].confidence == twice[i].confidence);
        CHECK(once[i].x1 == twice[i].x1);
        if (i) CHECK(once[i - 1].confidence >= once[i].confidence);
    }
}

TEST_CASE("match on perfect predictions and double predictions") {
    std::vector<DetectionBox> truths = {box(0, 1, 0, 0, 10, 10),
                                        box(1, 1, 20, 20, 30, 30)};
    std::vector<DetectionBox> perfect = {box(0, 0.9, 0, 0, 10, 10),
                                         box(1, 0.8, 20, 20, 30, 30)};
    MatchOutcome mo = match(perfect, truths, 0.5);
    CHECK(mo.per_class[0].tp == 1);
    CHECK(mo.per_class[1].tp == 1);
    CHECK(mo.per_class[0].fp == 0);
    CHECK(mo.per_class[0].fn == 0);

    std::vector<DetectionBox> doubled = {box(0, 0.9, 0, 0, 10, 10),
                                         box(0, 0.8, 0, 0, 10, 10)};
    MatchOutcome mo2 = match(doubled, {truths[0]}, 0.5);
    CHECK(mo2.per_class[0].tp == 1);
    CHECK(mo2.per_class[0].fp == 1);
    CHECK(mo2.is_tp[0]);
    CHECK(!mo2.is_tp[1]);
}

TEST_CASE("precision and recall from counts") {
    // TP=3, FP=1, FN=1
    double precision = 3.0 / (3.0 + 1.0);
    double recall = 3.0 / (3.0 + 1.0);
    CHECK(precision == doctest::Approx(0.75));
    CHECK(recall == doctest::Approx(0.75));
}

TEST_CASE("average precision fixtures") {
    CHECK(average_precision({{0.9, true}}, 1) == doctest::Approx(1.0));
    CHECK(average_precision({{0.9, false}, {0.8, false}}, 3) ==
          doctest::Approx(0.0));
    // (TP, FP, TP) with two truths -> 5/6
    double ap = average_precision({{0.9, true}, {0.8, false}, {0.7, true}}, 2);
    CHECK(ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    // zero truths
    CHECK(average_precision({{0.9, true}}, 0) == 0.0);
}

TEST_CASE("duplicate lower-confidence TP never increases AP") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<LabeledPrediction> labeled;
        int n = rng.uniform_int(1, 8);
        for (int i = 0; i < n; ++i)
            labeled.push_back({rng.uniform(), rng.uniform() < 0.5});
        int64_t truths = rng.uniform_int(1, 6);
        double base = average_precision(labeled, truths);
        auto with_dup = labeled;
        with_dup.push_back({0.0, false});
        CHECK(average_precision(with_dup, truths) <= base + 1e-15);
    }
}

TEST_CASE("evaluate: perfect predictions give mAP 1 and identity confusion") {
    std::vector<std::vector<DetectionBox>> truths = {
        {box(0, 1, 0, 0, 10, 10), box(1, 1, 30, 30, 50, 50)},
        {box(2, 1, 5, 5, 25, 25)},
    };
    std::vector<std::vector<DetectionBox>> preds = {
        {box(0, 0.95, 0, 0, 10, 10), box(1, 0.9, 30, 30, 50, 50)},
        {box(2, 0.85, 5, 5, 25, 25)},
    };
    MetricReport report = evaluate(preds, truths);
    CHECK(report.map50 == doctest::Approx(1.0));
    CHECK(report.map5095 == doctest::Approx(1.0));
    for (auto& ce : report.per_class) CHECK(ce.ap50 == doctest::Approx(1.0));
    for (int c = 0; c < 3; ++c) {
        CHECK(report.confusion_norm[size_t(c)][size_t(c)] ==
              doctest::Approx(1.0));
    }
}

TEST_CASE("confusion matrix rows sum to one for present classes") {
    Rng rng(5);
    std::vector<std::vector<DetectionBox>> preds(6), truths(6);
    for (int img = 0; img < 6; ++img) {
        int nt = rng.uniform_int(1, 4);
        for (int t = 0; t < nt; ++t) {
            double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
            truths[size_t(img)].push_back(
                box(rng.uniform_int(0, 2), 1, x, y, x + 20, y + 20));
        }
        int np = rng.uniform_int(0, 5);
        for (int p = 0; p < np; ++p) {
            double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
            preds[size_t(img)].push_back(box(rng.uniform_int(0, 2),
                                             rng.uniform(), x, y, x + 20,
                                             y + 20));
        }
    }
    MetricReport report = evaluate(preds, truths);
    for (auto& row : report.confusion_norm) {
        double s = 0.0;
        for (double v : row) s += v;
        if (s != 0.0) CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
    // mAP is exactly the mean of per-class APs
    double mean = 0.0;
    for (auto& ce : report.per_class) mean += ce.ap50;
    mean /= double(report.per_class.size());
    CHECK(report.map50 == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("monotone confidence invariance and image order invariance") {
    Rng rng(6);
    std::vector<std::vector<DetectionBox>> preds(4), truths(4);
    for (int img = 0; img < 4; ++img) {
        int nt = rng.uniform_int(1, 4);
        for (int t = 0; t < nt; ++t) {
            double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
            truths[size_t(img)].push_back(
                box(rng.uniform_int(0, 2), 1, x, y, x + 18, y + 18));
        }
        for (auto& tb : truths[size_t(img)]) {
            if (rng.uniform() < 0.8) {
                DetectionBox p = tb;
                p.confidence = rng.uniform(0.2, 1.0);
                p.x1 += rng.uniform(-3, 3);
                p.y1 += rng.uniform(-3, 3);
                preds[size_t(img)].push_back(p);
            }
        }
        if (rng.uniform() < 0.5)
            preds[size_t(img)].push_back(box(rng.uniform_int(0, 2),
                                             rng.uniform(0.2, 1.0), 0, 0, 9,
                                             9));
    }
    MetricReport base = evaluate(preds, truths);

    auto scaled = preds;
    for (auto& img : scaled)
        for (auto& b : img) b.confidence *= 0.5;
    MetricReport after = evaluate(scaled, truths);
    CHECK(after.map50 == doctest::Approx(base.map50).epsilon(1e-15));
    CHECK(after.map5095 == doctest::Approx(base.map5095).epsilon(1e-15));

    auto preds_rev = preds;
    auto truths_rev = truths;
    std::reverse(preds_rev.begin(), preds_rev.end());
    std::reverse(truths_rev.begin(), truths_rev.end());
    MetricReport rev = evaluate(preds_rev, truths_rev);
    CHECK(rev.map50 == doctest::Approx(base.map50).epsilon(1e-15));
}

TEST_CASE("evaluate agrees with the brute-force reference on random scenes") {
    Rng rng(1234);
    double worst = 0.0;
    for (int scene = 0; scene < 1000; ++scene) {
        int n_classes = rng.uniform_int(1, 3);
        int n_truths = rng.uniform_int(1, 5);
        std::vector<DetectionBox> truths;
        std::vector<evalref::Box> rtruths;
        for (int t = 0; t < n_truths; ++t) {
            double x = rng.uniform(0, 70), y = rng.uniform(0, 70);
            double w = rng.uniform(8, 30), h = rng.uniform(8, 30);
            int cls = rng.uniform_int(0, n_classes - 1);
            truths.push_back(box(cls, 1, x, y, x + w, y + h));
            rtruths.push_back({cls, 1.0L, x, y, x + w, y + h});
        }
        std::vector<DetectionBox> preds;
        std::vector<evalref::Box> rpreds;
        int n_preds = rng.uniform_int(0, 5);
        for (int p = 0; p < n_preds; ++p) {
            DetectionBox src = truths[size_t(rng.uniform_int(0, n_truths - 1))];
            double jx = rng.uniform(-6, 6), jy = rng.uniform(-6, 6);
            double conf = rng.uniform(0.05, 1.0);
            int cls = rng.uniform() < 0.8
                          ? src.class_id
                          : rng.uniform_int(0, n_classes - 1);
            DetectionBox p2 = box(cls, conf, src.x1 + jx, src.y1 + jy,
                                  src.x2 + jx, src.y2 + jy);
            preds.push_back(p2);
            rpreds.push_back({cls, conf, p2.x1, p2.y1, p2.x2, p2.y2});
        }

        MetricReport report = evaluate({preds}, {truths});
        std::set<int> classes;
        for (auto& t : truths) classes.insert(t.class_id);
        for (auto& ce : report.per_class) {
            const double thr_list[10] = {0.50, 0.55, 0.60, 0.65, 0.70,
                                         0.75, 0.80, 0.85, 0.90, 0.95};
            for (int t = 0; t < 10; ++t) {
                long double ref = evalref::class_ap({rpreds}, {rtruths},
                                                    ce.class_id, thr_list[t]);
                double diff = std::fabs(double(ref) - ce.ap_at[size_t(t)]);
                worst = std::max(worst, diff);
            }
        }
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("detection file round trip") {
    const char* pred_path = "eval_preds_test.txt";
    const char* truth_path = "eval_truths_test.txt";
    {
        std::ofstream p(pred_path);
        p << "img1 0 0.9 0 0 10 10\n";
        p << "img1 1 0.8 20 20 30 30\n";
        p << "img2 0 0.7 5 5 15 15\n";
        std::ofstream t(truth_path);
        t << "img1 0 0 0 10 10\n";
        t << "img1 1 20 20 30 30\n";
        t << "img2 0 5 5 15 15\n";
    }
    DetectionFiles files = load_detection_files(pred_path, truth_path);
    REQUIRE(files.image_ids.size() == 2);
    MetricReport report = evaluate(files.preds, files.truths);
    CHECK(report.map50 == doctest::Approx(1.0));

    {
        std::ofstream p(pred_path);
        p << "img1 0 not_a_number 0 0 10 10\n";
    }
    CHECK_THROWS(load_detection_files(pred_path, truth_path));
    std::remove(pred_path);
    std::remove(truth_path);
}
