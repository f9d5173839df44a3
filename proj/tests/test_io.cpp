#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "pal/io.hpp"
#include "support/random_round.hpp"

namespace fs = std::filesystem;
using pal::io::json;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("pal_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

pal::GroundTruthSet sample_gt() {
  pal::GroundTruthSet gt;
  gt.classes = {"car", "person", "bike"};
  gt.images = {{1, 640, 480}, {2, 320, 240}};
  gt.annotations = {{10, 1, 0, {1.5, 2, 30, 40}},
                    {11, 1, 2, {0, 0, 5, 5}},
                    {12, 2, 1, {100.25, 7, 12.5, 9}},
                    {13, 2, 1, {3, 3, 3, 3}},
                    {14, 2, 0, {0.1, 0.2, 0.3, 0.4}}};
  return gt;
}

std::string emb_bytes(std::uint32_t dim, std::uint32_t count, const std::vector<std::pair<std::uint64_t, std::vector<float>>>& recs) {
  std::string s("PALEMB1\0", 8);
  auto put = [&](std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put(dim, 4);
  put(count, 4);
  for (const auto& [id, v] : recs) {
    put(id, 8);
    for (float f : v) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put(u, 4);
    }
  }
  return s;
}

}  // namespace

TEST(Config, DefaultsAndPaperWeights) {
  const auto cfg = pal::io::parse_config(json::parse(R"({"alpha":0.9,"beta":0.04,"gamma":0.02,"d":0.1,"budget_b":100})"));
  EXPECT_EQ(cfg.alpha, 0.9);
  EXPECT_EQ(cfg.budget_b, 100u);
  const auto empty = pal::io::parse_config(json::object());
  EXPECT_EQ(empty.alpha, 0.9);
  EXPECT_EQ(empty.beta, 0.04);
  EXPECT_EQ(empty.gamma, 0.02);
  EXPECT_EQ(empty.d, 0.1);
}

TEST(Config, LiusOnlyWeightsAreValid) {
  EXPECT_NO_THROW(pal::io::parse_config(json::parse(R"({"alpha":1.0,"d":0.0,"beta":0.0,"gamma":0.0})")));
}

TEST(Config, ConstraintViolationNamesKeys) {
  try {
    pal::io::parse_config(json::parse(R"({"alpha":0.9,"d":0.2,"beta":0.05,"gamma":0.1})"));
    FAIL();
  } catch (const pal::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha+d must equal 1"), std::string::npos);
  }
  try {
    pal::io::parse_config(json::parse(R"({"beta":0.05})"));
    FAIL();
  } catch (const pal::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("2*beta+gamma must equal d"), std::string::npos);
  }
}

TEST(Config, RejectsUnknownKeysBadTypesAndThresholds) {
  EXPECT_THROW(pal::io::parse_config(json::parse(R"({"alpah":0.9})")), pal::ValidationError);
  EXPECT_THROW(pal::io::parse_config(json::parse(R"({"alpha":"x"})")), pal::ValidationError);
  EXPECT_THROW(pal::io::parse_config(json::parse(R"({"iou_tp":1.5})")), pal::ValidationError);
  EXPECT_THROW(pal::io::parse_config(json::parse(R"({"budget_b":0})")), pal::ValidationError);
  EXPECT_THROW(pal::io::parse_config(json::parse("[1]")), pal::ValidationError);
}

TEST(Config, FileRoundTrip) {
  const auto dir = temp_dir("cfg");
  pal::SelectionConfig cfg;
  cfg.budget_b = 37;
  cfg.seed = 5;
  cfg.classifier.min_pos = 3;
  pal::io::write_text(dir / "c.json", pal::io::config_to_json(cfg).dump(2));
  const auto back = pal::io::load_config(dir / "c.json");
  EXPECT_EQ(back.budget_b, 37u);
  EXPECT_EQ(back.seed, 5u);
  EXPECT_EQ(back.classifier.min_pos, 3u);
  pal::io::write_text(dir / "bad.json", "{not json");
  EXPECT_THROW(pal::io::load_config(dir / "bad.json"), pal::ValidationError);
}

TEST(GroundTruth, RoundTripPreservesCounts) {
  const auto gt = sample_gt();
  const auto back = pal::io::parse_ground_truth(pal::io::format_ground_truth(gt), "mem");
  EXPECT_EQ(back, gt);
  EXPECT_EQ(back.images.size(), 2u);
  EXPECT_EQ(back.annotations.size(), 5u);
}

TEST(GroundTruth, EmptyAnnotations) {
  const std::string text = "#schema pal.groundtruth 1\n#classes a\n"
                           "{\"type\":\"image\",\"id\":1,\"width\":5,\"height\":5}\n"
                           "{\"type\":\"image\",\"id\":2,\"width\":5,\"height\":5}\n"
                           "# a comment\n\n"
                           "{\"type\":\"image\",\"id\":3,\"width\":5,\"height\":5}\n";
  const auto gt = pal::io::parse_ground_truth(text, "mem");
  EXPECT_EQ(gt.images.size(), 3u);
  EXPECT_TRUE(gt.annotations.empty());
}

TEST(GroundTruth, Errors) {
  const std::string head = "#schema pal.groundtruth 1\n#classes a,b\n{\"type\":\"image\",\"id\":1,\"width\":5,\"height\":5}\n";
  auto expect_error = [&](const std::string& body, const std::string& needle) {
    try {
      pal::io::parse_ground_truth(head + body, "gt.txt");
      ADD_FAILURE() << "accepted: " << body;
    } catch (const pal::ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error(R"({"type":"ann","id":1,"image_id":1,"class_id":0,"bbox":[0,0,0,4]})", "degenerate box");
  expect_error(R"({"type":"ann","id":1,"image_id":7,"class_id":0,"bbox":[0,0,3,4]})", "unknown image");
  expect_error("{\"type\":\"ann\",\"id\":1,\"image_id\":1,\"class_id\":0,\"bbox\":[0,0,3,4]}\n"
               "{\"type\":\"ann\",\"id\":1,\"image_id\":1,\"class_id\":1,\"bbox\":[0,0,3,4]}",
               "duplicate annotation id");
  expect_error(R"({"type":"ann","id":1,"image_id":1,"class_id":2,"bbox":[0,0,3,4]})", "class_id 2");
  expect_error(R"({"type":"ann","id":1,"image_id":1,"class_id":0})", "bbox");
  expect_error("{oops", "gt.txt:4");
  expect_error(R"({"id":3})", "type");
  EXPECT_THROW(pal::io::parse_ground_truth("#classes a\n", "x"), pal::ValidationError);
  EXPECT_THROW(pal::io::parse_ground_truth("#schema pal.detections 1\n#classes a\n", "x"), pal::ValidationError);
  EXPECT_THROW(pal::io::parse_ground_truth("#schema pal.groundtruth 1\n", "x"), pal::ValidationError);
}

TEST(Detections, RoundTripPreservesOrder) {
  pal::DetectionDump dump;
  dump.classes = {"a", "b"};
  dump.images = {5, 3};
  for (int i = 0; i < 10; ++i) {
    pal::Detection d;
    d.image_id = i % 2 ? 5 : 3;
    d.class_id = static_cast<pal::ClassId>(i % 2);
    d.box = {i * 1.1, 2.0 / (i + 1), 3.0 + i, 4.125};
    d.confidence = 0.1 * i;
    if (i % 3 == 0) d.class_probs = {0.3 + 0.01 * i, 0.7 - 0.01 * i};
    if (i % 4 == 0) d.pre_nms_count = static_cast<std::uint32_t>(i);
    if (i % 5 == 0) d.tp = i == 5;
    dump.detections.push_back(d);
  }
  dump.proposals = {{5, {1, 2, 3, 4}, 0.25}, {3, {0.5, 0.5, 1, 1}, 1.0}};
  const auto back = pal::io::parse_detection_dump(pal::io::format_detection_dump(dump), "mem");
  EXPECT_EQ(back, dump);
  ASSERT_EQ(back.detections.size(), 10u);

  // Proposals in a separate file.
  auto split = pal::io::parse_detection_dump(pal::io::format_detection_dump(dump, false), "mem");
  EXPECT_TRUE(split.proposals.empty());
  pal::io::merge_proposals(split, pal::io::format_proposals(dump), "props");
  EXPECT_EQ(split, dump);
}

TEST(Detections, EmptyProposalsGiveZeroCounts) {
  const std::string text = "#schema pal.detections 1\n#classes a\n{\"type\":\"image\",\"id\":1}\n"
                           R"({"type":"det","image_id":1,"class_id":0,"bbox":[0,0,3,4],"confidence":0.5})";
  auto dump = pal::io::parse_detection_dump(text, "mem");
  EXPECT_TRUE(dump.proposals.empty());
  pal::assign_pre_nms_counts(dump, 0.5);
  EXPECT_EQ(dump.detections[0].pre_nms_count, 0u);
}

TEST(Detections, Errors) {
  const std::string head = "#schema pal.detections 1\n#classes a,b\n{\"type\":\"image\",\"id\":1}\n";
  auto bad = [&](const std::string& body) {
    EXPECT_THROW(pal::io::parse_detection_dump(head + body, "mem"), pal::ValidationError) << body;
  };
  bad(R"({"type":"det","image_id":1,"class_id":0,"bbox":[0,0,3,4],"confidence":1.2})");
  bad(R"({"type":"det","image_id":1,"class_id":0,"bbox":[0,0,3,4],"confidence":0.5,"probs":[1.0]})");
  bad(R"({"type":"det","image_id":1,"class_id":0,"bbox":[0,0,3,4],"confidence":0.5,"probs":[0.5,0.6]})");
  bad(R"({"type":"det","image_id":1,"class_id":0,"bbox":[0,0,3,4],"confidence":0.5,"pre_nms":-1})");
  bad(R"({"type":"det","image_id":1,"class_id":0,"bbox":[0,0,3,4],"confidence":0.5,"tp":1})");
  bad(R"({"type":"det","image_id":2,"class_id":0,"bbox":[0,0,3,4],"confidence":0.5})");
  bad(R"({"type":"prop","image_id":2,"bbox":[0,0,3,4],"confidence":0.5})");
  bad(R"({"type":"weird"})");
  bad("{\"type\":\"image\",\"id\":1}");

  pal::DetectionDump dump = pal::io::parse_detection_dump(head, "mem");
  EXPECT_THROW(pal::io::merge_proposals(dump, "#schema pal.proposals 1\n#classes a\n", "p"), pal::ValidationError);
  EXPECT_THROW(pal::io::merge_proposals(dump, "#schema pal.proposals 1\n#classes a,b\n"
                                              R"({"type":"prop","image_id":9,"bbox":[0,0,3,4],"confidence":0.5})", "p"),
               pal::ValidationError);
}

TEST(Embeddings, RoundTrip) {
  pal::EmbeddingStore s;
  s.dim = 4;
  s.rows = {{7, {1.f, -2.5f, 0.f, 3.25f}}, {2, {0.1f, 0.2f, 0.3f, 0.4f}}};
  const auto bytes = pal::io::encode_embeddings(s);
  EXPECT_EQ(bytes.size(), 16u + 2 * (8 + 16));
  const auto back = pal::io::decode_embeddings(bytes, "mem");
  EXPECT_EQ(back.dim, 4u);
  EXPECT_EQ(back.rows, s.rows);

  const auto dir = temp_dir("emb");
  pal::io::write_embeddings(s, dir / "e.bin");
  EXPECT_EQ(pal::io::load_embeddings(dir / "e.bin").rows, s.rows);
}

TEST(Embeddings, LittleEndianLayout) {
  const auto bytes = emb_bytes(2, 1, {{0x0102030405060708ULL, {1.0f, -1.0f}}});
  const auto s = pal::io::decode_embeddings(bytes, "mem");
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_EQ(s.rows.begin()->first, 0x0102030405060708ULL);
  EXPECT_EQ(s.rows.begin()->second, (std::vector<float>{1.0f, -1.0f}));
  pal::EmbeddingStore st;
  st.dim = 2;
  st.rows = s.rows;
  EXPECT_EQ(pal::io::encode_embeddings(st), bytes);
}

TEST(Embeddings, Errors) {
  auto msg = [](const std::string& bytes) {
    try {
      pal::io::decode_embeddings(bytes, "mem");
    } catch (const pal::ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  EXPECT_NE(msg(emb_bytes(4, 1, {})).find("truncated"), std::string::npos);
  EXPECT_NE(msg(emb_bytes(2, 1, {{1, {1, 2}}}) + "x").find("trailing"), std::string::npos);
  EXPECT_NE(msg(emb_bytes(2, 2, {{1, {1, 2}}, {1, {3, 4}}})).find("duplicate"), std::string::npos);
  EXPECT_NE(msg(emb_bytes(2, 1, {{1, {std::nanf(""), 2}}})).find("non-finite"), std::string::npos);
  EXPECT_NE(msg(emb_bytes(2, 1, {{1, {std::numeric_limits<float>::infinity(), 2}}})).find("non-finite"),
            std::string::npos);
  EXPECT_NE(msg(emb_bytes(0, 0, {})).find("dim"), std::string::npos);
  EXPECT_NE(msg("PALEMB2" + std::string(9, '\0')).find("magic"), std::string::npos);
  EXPECT_NE(msg("PAL").find("truncated"), std::string::npos);

  pal::EmbeddingStore s;
  s.dim = 3;
  s.rows = {{1, {1, 2}}};
  EXPECT_THROW(pal::io::encode_embeddings(s), pal::ValidationError);
}

TEST(Manifest, DeterministicAndRoundTrip) {
  const auto r = testsupport::make_random_round(12);
  auto m = pal::run_round(r.inputs, r.cfg, r.state);
  m.round = 2;
  const auto a = pal::io::format_selection_manifest(m);
  EXPECT_EQ(a, pal::io::format_selection_manifest(m));
  const auto back = pal::io::parse_selection_manifest(a, "mem");
  EXPECT_EQ(pal::io::format_selection_manifest(back), a);
  EXPECT_EQ(back.round, 2u);
  ASSERT_EQ(back.per_class.size(), m.per_class.size());
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    EXPECT_EQ(back.per_class[c].b, m.per_class[c].b);
    ASSERT_EQ(back.per_class[c].selected.size(), m.per_class[c].selected.size());
    for (std::size_t k = 0; k < m.per_class[c].selected.size(); ++k) {
      EXPECT_EQ(back.per_class[c].selected[k].image_id, m.per_class[c].selected[k].image_id);
      EXPECT_NEAR(back.per_class[c].selected[k].score, m.per_class[c].selected[k].score, 5e-7);
    }
  }
}

TEST(Manifest, ExactRoundTripForSixDecimalValues) {
  pal::SelectionManifest m;
  m.round = 2;
  m.budget = 3;
  m.per_class.resize(2);
  m.per_class[0] = {0, 4, 6, 0.25, 2, 0, {{9, 1, 0.5, 1.0, 0.75, 0.125, 0.5}, {12, 0, 0.25, 0.5, 1.0, 1.0, 0.3}}};
  m.per_class[1] = {1, 1, 2, 0.75, 1, 1, {}};
  const auto text = pal::io::format_selection_manifest(m);
  EXPECT_EQ(pal::io::parse_selection_manifest(text, "mem"), m);
}

TEST(Manifest, EmptySelectionAndLayout) {
  pal::SelectionManifest m;
  m.budget = 0;
  m.per_class.push_back({0, 1, 1, -0.0, 0, 0, {}});
  const auto text = pal::io::format_selection_manifest(m);
  EXPECT_EQ(text,
            "{\n"
            "  \"schema\": \"pal.manifest/1\",\n"
            "  \"round\": 1,\n"
            "  \"budget\": 0,\n"
            "  \"per_class\": [\n"
            "    {\n"
            "      \"class_id\": 0,\n"
            "      \"n_l\": 1,\n"
            "      \"n_u\": 1,\n"
            "      \"r_c\": 0.000000,\n"
            "      \"b_c\": 0,\n"
            "      \"deficit\": 0,\n"
            "      \"selected\": []\n"
            "    }\n"
            "  ],\n"
            "  \"totals\": {\"selected\": 0, \"budget\": 0, \"deficit\": 0}\n"
            "}\n");
  EXPECT_NO_THROW(pal::io::parse_selection_manifest(text, "mem"));
}

TEST(Manifest, SortsBlocksAndIds) {
  pal::SelectionManifest m;
  m.per_class.push_back({1, 0, 0, 0, 2, 0, {{8}, {3}}});
  m.per_class.push_back({0, 0, 0, 0, 0, 0, {}});
  const auto text = pal::io::format_selection_manifest(m);
  EXPECT_LT(text.find("\"class_id\": 0"), text.find("\"class_id\": 1"));
  EXPECT_LT(text.find("\"image_id\": 3"), text.find("\"image_id\": 8"));
}

TEST(Manifest, InconsistentTotalsRejected) {
  pal::SelectionManifest m;
  m.per_class.push_back({0, 0, 0, 0, 1, 0, {{4}}});
  auto text = pal::io::format_selection_manifest(m);
  text.replace(text.find("\"selected\": 1"), 13, "\"selected\": 2");
  EXPECT_THROW(pal::io::parse_selection_manifest(text, "mem"), pal::ValidationError);
}

TEST(RoundState, RoundTripAndOverlap) {
  pal::RoundState st;
  st.round = 3;
  st.budget = 7;
  st.labelled = {1, 4};
  st.unlabelled = {2, 3};
  st.history = {{4}, {}};
  const auto back = pal::io::parse_round_state(json::parse(pal::io::format_round_state(st)), "mem");
  EXPECT_EQ(back, st);
  EXPECT_THROW(pal::io::parse_round_state(json::parse(R"({"round":1,"budget":1,"labelled":[1],"unlabelled":[1]})"), "m"),
               pal::ValidationError);
  EXPECT_THROW(pal::io::parse_round_state(json::parse(R"({"round":0,"budget":1,"labelled":[],"unlabelled":[]})"), "m"),
               pal::ValidationError);
}

TEST(Classifiers, RoundTripBitExact) {
  const auto r = testsupport::make_random_round(2);
  auto in = r.inputs;
  pal::prepare_pools(in, r.cfg);
  const auto set = pal::train_classifiers(in.labelled.detections, in.labelled.classes.size(), r.cfg.classifier);
  const auto dir = temp_dir("clc");
  pal::io::write_text(dir / "m.json", pal::io::format_classifiers(set, in.labelled.classes));
  std::vector<std::string> classes;
  const auto back = pal::io::load_classifiers(dir / "m.json", &classes);
  EXPECT_EQ(classes, in.labelled.classes);
  EXPECT_EQ(back.per_class, set.per_class);
  EXPECT_EQ(back.fallback_fitted, set.fallback_fitted);
  if (set.fallback_fitted) {
    EXPECT_EQ(back.fallback, set.fallback);
  }
}

TEST(Fixed6, Formatting) {
  EXPECT_EQ(pal::io::fixed6(-0.0), "0.000000");
  EXPECT_EQ(pal::io::fixed6(-1e-9), "0.000000");
  EXPECT_EQ(pal::io::fixed6(0.6931471805599453), "0.693147");
  EXPECT_EQ(pal::io::fixed6(1.0), "1.000000");
}
