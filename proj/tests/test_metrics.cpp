#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "viewsched/metrics.hpp"
#include "viewsched/rng.hpp"

using namespace viewsched;

namespace {

Box3D car(double x, double y, double conf = 1.0, ObjectClass cls = ObjectClass::Car) {
  Box3D b;
  b.center = {x, y, 0.8};
  b.size = {1.9, 1.6, 4.6};
  b.cls = cls;
  b.confidence = conf;
  return b;
}

}  // namespace

TEST_CASE("match examples") {
  const std::vector<Box3D> gt = {car(10, 0)};
  CHECK(match(std::vector<Box3D>{car(10, 0)}, gt, 0.5) == std::vector<int>{0});
  const std::vector<Box3D> two = {car(10.2, 0, 0.4), car(10.3, 0, 0.9)};
  CHECK(match(two, gt, 2.0) == std::vector<int>{-1, 0});
  CHECK(match(std::vector<Box3D>{car(10, 0, 1.0, ObjectClass::Bus)}, gt, 2.0) == std::vector<int>{-1});
  CHECK(match(std::vector<Box3D>{car(12, 0)}, gt, 2.0) == std::vector<int>{-1});  // strictly within
}

TEST_CASE("match agrees with a confidence-ordered greedy replay") {
  Rng rng = make_stream(51, StreamKind::Test);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Box3D> preds, gts;
    for (int i = 0; i < 10; ++i) {
      gts.push_back(car(6 * uniform01(rng), 6 * uniform01(rng)));
      preds.push_back(car(6 * uniform01(rng), 6 * uniform01(rng), uniform01(rng)));
    }
    const double threshold = 1.0;
    std::vector<int> order(10);
    for (int i = 0; i < 10; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return preds[a].confidence > preds[b].confidence; });
    std::vector<int> expected(10, -1);
    std::vector<bool> taken(10, false);
    for (int p : order) {
      int best = -1;
      double best_d = threshold;
      for (int g = 0; g < 10; ++g) {
        const double d = (preds[p].center - gts[g].center).head<2>().norm();
        if (!taken[g] && d < best_d) {
          best_d = d;
          best = g;
        }
      }
      if (best >= 0) {
        taken[best] = true;
        expected[p] = best;
      }
    }
    CHECK(match(preds, gts, threshold) == expected);
  }
}

TEST_CASE("average precision examples") {
  const std::vector<Box3D> gt = {car(0, 0), car(10, 0), car(20, 0), car(30, 0), car(40, 0)};
  std::vector<EvalFrame> perfect = {{gt, gt}};
  CHECK(average_precision(perfect, ObjectClass::Car, 0.5).value() == doctest::Approx(1.0));
  std::vector<EvalFrame> empty = {{{}, gt}};
  CHECK(average_precision(empty, ObjectClass::Car, 0.5).value() == 0.0);
  CHECK_FALSE(average_precision(empty, ObjectClass::Bus, 0.5).has_value());

  // Confidence order: TP .9, TP .8, TP .7, FP .6, TP .5, TP .4.
  // Precision/recall staircase: (.2,1) (.4,1) (.6,1) (.6,.75) (.8,.8) (1,5/6).
  // Interpolated precision is 1 up to recall .6 and 5/6 above it.
  // Over the 90 grid points .11..1.00: 50 at 1 and 40 at 5/6, so AP = 25/27.
  std::vector<Box3D> preds = {car(0, 0, 0.9), car(10, 0, 0.8), car(20, 0, 0.7), car(50, 0, 0.6), car(30, 0, 0.5),
                              car(40, 0, 0.4)};
  std::vector<EvalFrame> staircase = {{preds, gt}};
  CHECK(average_precision(staircase, ObjectClass::Car, 0.5).value() == doctest::Approx(25.0 / 27.0).epsilon(1e-12));
}

TEST_CASE("AP monotonicity") {
  Rng rng = make_stream(52, StreamKind::Test);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Box3D> gt, preds;
    for (int i = 0; i < 8; ++i) {
      gt.push_back(car(10 * i, 0));
      if (uniform01(rng) < 0.6) preds.push_back(car(10 * i + 0.1, 0, uniform01(rng)));
      if (uniform01(rng) < 0.3) preds.push_back(car(10 * i + 5, 3, uniform01(rng)));
    }
    const std::vector<EvalFrame> base = {{preds, gt}};
    const double ap = average_precision(base, ObjectClass::Car, 1.0).value();
    // A correct detection of a missed object at top confidence.
    std::vector<Box3D> more = preds;
    for (int i = 0; i < 8; ++i) {
      const bool seen = std::any_of(preds.begin(), preds.end(),
                                    [&](const Box3D& p) { return std::abs(p.center.x() - 10 * i - 0.1) < 1e-9; });
      if (!seen) {
        more.push_back(car(10 * i, 0, 1.0));
        break;
      }
    }
    const std::vector<EvalFrame> better = {{more, gt}};
    CHECK(average_precision(better, ObjectClass::Car, 1.0).value() >= ap - 1e-12);
    // A duplicate false positive.
    std::vector<Box3D> worse = preds;
    worse.push_back(car(300, 300, uniform01(rng)));
    const std::vector<EvalFrame> noisy = {{worse, gt}};
    CHECK(average_precision(noisy, ObjectClass::Car, 1.0).value() <= ap + 1e-12);
  }
}

TEST_CASE("detection score") {
  CHECK(detection_score(0.5, 0.4, 0.3) == doctest::Approx(0.56));
  CHECK(detection_score(1.0, 0.0, 0.0) == doctest::Approx(1.0));
  CHECK(detection_score(0.0, 3.0, 2.0) == 0.0);
}

TEST_CASE("summarize: perfect, empty and worst-case conventions") {
  std::vector<Box3D> gt = {car(5, 0), car(15, 3, 1.0, ObjectClass::Pedestrian)};
  gt[0].velocity = {3, 1, 0};
  const std::vector<EvalFrame> perfect = {{gt, gt}, {gt, gt}};
  const EvalSummary s = summarize(perfect);
  CHECK(s.map == doctest::Approx(1.0));
  CHECK(s.mate == doctest::Approx(0.0));
  CHECK(s.mave == doctest::Approx(0.0));
  CHECK(s.ds == doctest::Approx(1.0));
  CHECK(s.evaluated_classes == 2);

  const std::vector<EvalFrame> blind = {{{}, gt}};
  const EvalSummary b = summarize(blind);
  CHECK(b.map == 0.0);
  CHECK(b.mate == 1.0);
  CHECK(b.mave == 1.0);
  CHECK(b.no_true_positives);
  CHECK(b.ds == 0.0);
}

TEST_CASE("summarize: translation error matches the Rayleigh mean") {
  const double sigma = 0.3;
  Rng rng = make_stream(53, StreamKind::Test);
  std::vector<EvalFrame> frames;
  for (int f = 0; f < 400; ++f) {
    EvalFrame ef;
    for (int i = 0; i < 10; ++i) {
      Box3D g = car(20.0 * i, 5.0 * f);
      Box3D p = g;
      p.center.x() += sigma * standard_normal(rng);
      p.center.y() += sigma * standard_normal(rng);
      ef.ground_truth.push_back(g);
      ef.predictions.push_back(p);
    }
    frames.push_back(std::move(ef));
  }
  const EvalSummary s = summarize(frames);
  const double expected = sigma * std::sqrt(kPi / 2.0);
  CHECK(std::abs(s.mate - expected) < 0.1 * expected);
  CHECK(s.ds >= 0.0);
  CHECK(s.ds <= 1.0);
}

TEST_CASE("errors are invariant under a shared rigid transform") {
  Rng rng = make_stream(54, StreamKind::Test);
  std::vector<EvalFrame> frames(1);
  for (int i = 0; i < 20; ++i) {
    Box3D g = car(30 * uniform01(rng), 30 * uniform01(rng));
    g.velocity = {2 * uniform01(rng), 2 * uniform01(rng), 0};
    Box3D p = g;
    p.center += Eigen::Vector3d(0.4 * standard_normal(rng), 0.4 * standard_normal(rng), 0);
    p.velocity += Eigen::Vector3d(0.5 * standard_normal(rng), 0.5 * standard_normal(rng), 0);
    p.confidence = uniform01(rng);
    frames[0].ground_truth.push_back(g);
    frames[0].predictions.push_back(p);
  }
  const EgoPose pose{13.0, -7.0, 1.1, 0};
  std::vector<EvalFrame> moved(1);
  for (const Box3D& b : frames[0].ground_truth) moved[0].ground_truth.push_back(to_ego(b, pose));
  for (const Box3D& b : frames[0].predictions) moved[0].predictions.push_back(to_ego(b, pose));
  const EvalSummary a = summarize(frames);
  const EvalSummary b = summarize(moved);
  CHECK(a.mate == doctest::Approx(b.mate).epsilon(1e-9));
  CHECK(a.mave == doctest::Approx(b.mave).epsilon(1e-9));
  CHECK(a.map == doctest::Approx(b.map).epsilon(1e-9));
}
