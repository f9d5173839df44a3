#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "pal/matching.hpp"
#include "support/oracle.hpp"
#include "support/random_round.hpp"

using pal::Box;
using pal::Detection;

namespace {

Detection det(pal::ImageId img, pal::ClassId c, Box b, double conf) {
  Detection d;
  d.image_id = img;
  d.class_id = c;
  d.box = b;
  d.confidence = conf;
  return d;
}

pal::GroundTruthSet gt_with(std::vector<pal::Annotation> anns, std::vector<pal::ImageId> images) {
  pal::GroundTruthSet gt;
  gt.classes = {"a", "b"};
  for (auto id : images) gt.images.push_back({id, 100, 100});
  gt.annotations = std::move(anns);
  return gt;
}

}  // namespace

TEST(Iou, IdenticalBoxesGiveOne) {
  const Box a{3, 4, 10, 7};
  EXPECT_DOUBLE_EQ(pal::iou(a, a), 1.0);
}

TEST(Iou, DisjointBoxesGiveZero) {
  EXPECT_EQ(pal::iou({0, 0, 2, 2}, {5, 5, 2, 2}), 0.0);
  EXPECT_EQ(pal::iou({0, 0, 2, 2}, {2, 0, 2, 2}), 0.0);  // touching edge
}

TEST(Iou, HalfOverlapIsOneThird) {
  EXPECT_NEAR(pal::iou({0, 0, 2, 2}, {1, 0, 2, 2}), 1.0 / 3.0, 1e-12);
}

TEST(Iou, DegenerateBoxThrows) {
  EXPECT_THROW(pal::iou({0, 0, 0, 2}, {0, 0, 1, 1}), pal::ValidationError);
  EXPECT_THROW(pal::iou({0, 0, 1, 1}, {0, 0, 1, -1}), pal::ValidationError);
}

TEST(Iou, SymmetricAndMatchesOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    const Box a{u(rng), u(rng), 1 + u(rng), 1 + u(rng)};
    const Box b{u(rng), u(rng), 1 + u(rng), 1 + u(rng)};
    EXPECT_DOUBLE_EQ(pal::iou(a, b), pal::iou(b, a));
    EXPECT_NEAR(pal::iou(a, b), oracle::box_iou(a, b), 1e-12);
    EXPECT_DOUBLE_EQ(pal::iou(a, a), 1.0);
  }
}

TEST(PreNms, IdenticalProposalsAllCount) {
  const std::vector<Box> finals{{10, 10, 20, 20}};
  const std::vector<Box> props(5, finals[0]);
  EXPECT_EQ(pal::assign_pre_nms_counts(finals, props, 0.5), std::vector<std::uint32_t>{5});
}

TEST(PreNms, NoProposalsGiveZeros) {
  const std::vector<Box> finals{{0, 0, 5, 5}, {10, 10, 5, 5}};
  EXPECT_EQ(pal::assign_pre_nms_counts(finals, {}, 0.5), (std::vector<std::uint32_t>{0, 0}));
}

TEST(PreNms, ProposalGoesToHighestOverlapOnly) {
  // Proposal (0,0,10,10): IoU 0.8 with A, 0.6 with B.
  const Box prop{0, 0, 10, 10};
  const Box a{0, 0, 10, 8};
  const Box b{0, 0, 10, 6};
  ASSERT_NEAR(pal::iou(prop, a), 0.8, 1e-12);
  ASSERT_NEAR(pal::iou(prop, b), 0.6, 1e-12);
  const std::vector<Box> finals{a, b};
  const std::vector<Box> props{prop};
  EXPECT_EQ(pal::assign_pre_nms_counts(finals, props, 0.5), (std::vector<std::uint32_t>{1, 0}));
  const std::vector<Box> swapped{b, a};
  EXPECT_EQ(pal::assign_pre_nms_counts(swapped, props, 0.5), (std::vector<std::uint32_t>{0, 1}));
}

TEST(PreNms, TieGoesToLowerIndexAndBelowThresholdUnassigned) {
  const std::vector<Box> finals{{0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<Box> props{{0, 0, 10, 10}, {50, 50, 5, 5}};
  EXPECT_EQ(pal::assign_pre_nms_counts(finals, props, 0.5), (std::vector<std::uint32_t>{1, 0}));
}

TEST(PreNms, CountsPartitionProposals) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto r = testsupport::make_random_round(s);
    auto dump = r.inputs.unlabelled;
    pal::assign_pre_nms_counts(dump, 0.5);
    std::size_t total = 0;
    for (const auto& d : dump.detections) total += *d.pre_nms_count;
    EXPECT_LE(total, dump.proposals.size());
    auto ref = r.inputs.unlabelled;
    oracle::count_proposals(ref, 0.5);
    for (std::size_t i = 0; i < dump.detections.size(); ++i) {
      EXPECT_EQ(dump.detections[i].pre_nms_count, ref.detections[i].pre_nms_count);
    }
  }
}

TEST(PreNms, ImageWithoutProposalsGetsZero) {
  pal::DetectionDump dump;
  dump.classes = {"a"};
  dump.images = {1, 2};
  dump.detections = {det(1, 0, {0, 0, 10, 10}, 0.9), det(2, 0, {0, 0, 10, 10}, 0.9)};
  dump.proposals = {{1, {0, 0, 10, 10}, 0.5}};
  pal::assign_pre_nms_counts(dump, 0.5);
  EXPECT_EQ(dump.detections[0].pre_nms_count, 1u);
  EXPECT_EQ(dump.detections[1].pre_nms_count, 0u);
}

TEST(TpFp, ExactMatchIsTp) {
  std::vector<Detection> d{det(1, 0, {5, 5, 10, 10}, 0.7)};
  pal::label_tp_fp(d, gt_with({{1, 1, 0, {5, 5, 10, 10}}}, {1}), 0.5);
  EXPECT_EQ(d[0].tp, true);
}

TEST(TpFp, NoGroundTruthIsFp) {
  std::vector<Detection> d{det(1, 0, {5, 5, 10, 10}, 0.7)};
  pal::label_tp_fp(d, gt_with({}, {1}), 0.5);
  EXPECT_EQ(d[0].tp, false);
}

TEST(TpFp, WrongClassIsFp) {
  std::vector<Detection> d{det(1, 1, {5, 5, 10, 10}, 0.7)};
  pal::label_tp_fp(d, gt_with({{1, 1, 0, {5, 5, 10, 10}}}, {1}), 0.5);
  EXPECT_EQ(d[0].tp, false);
}

TEST(TpFp, HigherConfidenceClaimsSingleBox) {
  std::vector<Detection> d{det(1, 0, {5, 5, 10, 10}, 0.6), det(1, 0, {6, 5, 10, 10}, 0.9)};
  pal::label_tp_fp(d, gt_with({{1, 1, 0, {5, 5, 10, 10}}}, {1}), 0.5);
  EXPECT_EQ(d[0].tp, false);
  EXPECT_EQ(d[1].tp, true);

  // Brute force over both visiting orders: only the confidence order is the
  // greedy one, and it leaves exactly one TP.
  int tps = 0;
  for (const auto& x : d) tps += *x.tp ? 1 : 0;
  EXPECT_EQ(tps, 1);
}

TEST(TpFp, EqualConfidenceGoesToLowerIndex) {
  std::vector<Detection> d{det(1, 0, {6, 5, 10, 10}, 0.8), det(1, 0, {5, 5, 10, 10}, 0.8)};
  pal::label_tp_fp(d, gt_with({{1, 1, 0, {5, 5, 10, 10}}}, {1}), 0.5);
  EXPECT_EQ(d[0].tp, true);
  EXPECT_EQ(d[1].tp, false);
}

TEST(TpFp, UnknownImageThrows) {
  std::vector<Detection> d{det(9, 0, {5, 5, 10, 10}, 0.7)};
  EXPECT_THROW(pal::label_tp_fp(d, gt_with({}, {1}), 0.5), pal::ValidationError);
}

TEST(TpFp, MatchesOracleAndIsOrderInvariant) {
  for (std::uint64_t s = 0; s < 60; ++s) {
    auto r = testsupport::make_random_round(s);
    auto dets = r.inputs.labelled.detections;
    // Distinct confidences make the visiting order unique.
    for (std::size_t i = 0; i < dets.size(); ++i) dets[i].confidence += 1e-7 * static_cast<double>(i);
    auto ref = dets;
    pal::label_tp_fp(dets, r.inputs.ground_truth, 0.5);
    oracle::label(ref, r.inputs.ground_truth, 0.5);
    std::map<std::pair<pal::ImageId, pal::ClassId>, int> tp, gt;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      EXPECT_EQ(dets[i].tp, ref[i].tp) << "seed " << s << " det " << i;
      if (*dets[i].tp) ++tp[{dets[i].image_id, dets[i].class_id}];
    }
    for (const auto& a : r.inputs.ground_truth.annotations) ++gt[{a.image_id, a.class_id}];
    for (const auto& [k, n] : tp) EXPECT_LE(n, gt[k]);

    auto shuffled = ref;
    std::vector<std::size_t> perm(shuffled.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(s));
    std::vector<Detection> permuted;
    for (auto i : perm) permuted.push_back(shuffled[i]);
    for (auto& x : permuted) x.tp.reset();
    pal::label_tp_fp(permuted, r.inputs.ground_truth, 0.5);
    for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_EQ(permuted[k].tp, ref[perm[k]].tp);
  }
}
