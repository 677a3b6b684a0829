// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "radsnn/config.hpp"
#include "radsnn/manifest.hpp"
#include "support/test_util.hpp"

namespace radsnn {
namespace {

using nlohmann::json;
using testing::error_code_of;
using testing::ScratchDir;

Manifest sample_manifest(const std::string& sub) {
  Manifest m;
  m.subcommand = sub;
  m.config = {{"k", 1}};
  m.inputs = {{"a.json", "0123456789abcdef"}};
  m.outputs = {{"b.csv", "fedcba9876543210"}};
  m.seed = 99;
  return m;
}

TEST(Manifest, SealThenLoad) {
  ScratchDir dir("manifest");
  const json payload{{"values", {1, 2, 3}}, {"name", "x"}};
  const auto sealed = seal(payload, sample_manifest("train"));
  EXPECT_EQ(sealed["manifest"]["content_hash"], payload_hash(payload));
  EXPECT_EQ(payload_hash(sealed), payload_hash(payload));
  write_artifact(dir / "m.json", sealed);

  const auto a = load_artifact(dir / "m.json", "train");
  EXPECT_EQ(a.manifest.subcommand, "train");
  EXPECT_EQ(a.manifest.seed, 99u);
  ASSERT_EQ(a.manifest.inputs.size(), 1u);
  EXPECT_EQ(a.manifest.inputs[0].path, "a.json");
  EXPECT_EQ(a.manifest.outputs[0].hash, "fedcba9876543210");
  EXPECT_EQ(a.manifest.tool_version, kToolVersion);
  EXPECT_EQ(a.file_hash, file_hash(dir / "m.json"));
  EXPECT_EQ(a.payload["values"], payload["values"]);
}

TEST(Manifest, RejectsTamperingAndWrongProducer) {
  ScratchDir dir("manifest");
  auto sealed = seal({{"v", 1}}, sample_manifest("quantize"));
  write_artifact(dir / "ok.json", sealed);
  EXPECT_EQ(error_code_of([&] { load_artifact(dir / "ok.json", "convert"); }), "wrong_artifact");
  EXPECT_EQ(error_code_of([&] { load_artifact(dir / "ok.json"); }), "");

  sealed["v"] = 2;
  write_artifact(dir / "tampered.json", sealed);
  EXPECT_EQ(error_code_of([&] { load_artifact(dir / "tampered.json"); }), "hash_mismatch");

  write_artifact(dir / "bare.json", json{{"v", 1}});
  EXPECT_EQ(error_code_of([&] { load_artifact(dir / "bare.json"); }), "invalid_manifest");

  auto broken = sealed;
  broken["manifest"].erase("seed");
  write_artifact(dir / "broken.json", broken);
  EXPECT_EQ(error_code_of([&] { load_artifact(dir / "broken.json"); }), "invalid_manifest");

  write_text(dir / "junk.json", "{not json");
  EXPECT_EQ(error_code_of([&] { load_artifact(dir / "junk.json"); }), "parse_error");
  EXPECT_EQ(error_code_of([&] { load_artifact(dir / "missing.json"); }), "io_error");
}

TEST(Manifest, ReadVerified) {
  ScratchDir dir("manifest");
  write_text(dir / "t.csv", "a,b\n1,2\n");
  const auto h = text_hash("a,b\n1,2\n");
  EXPECT_EQ(h, file_hash(dir / "t.csv"));
  EXPECT_EQ(read_verified(dir / "t.csv", h), "a,b\n1,2\n");
  write_text(dir / "t.csv", "a,b\n1,3\n");
  EXPECT_EQ(error_code_of([&] { read_verified(dir / "t.csv", h); }), "hash_mismatch");
}

TEST(Manifest, HashIsKeyOrderIndependent) {
  // nlohmann::json objects are sorted maps, so insertion order cannot leak in.
  json a, b;
  a["x"] = 1;
  a["y"] = 2;
  b["y"] = 2;
  b["x"] = 1;
  EXPECT_EQ(payload_hash(a), payload_hash(b));
  b["x"] = 3;
  EXPECT_NE(payload_hash(a), payload_hash(b));
}

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = config_from_json(json::object());
  const ToolConfig d;
  EXPECT_EQ(to_json(c), to_json(d));
  EXPECT_EQ(c.pipeline.timing.input_policy, InputPolicy::kHandshake);
  EXPECT_EQ(c.write_streams, StreamDump::kTest);
}

TEST(Config, RoundTripThroughJson) {
  const json overrides{{"ann", {{"n_hidden", 17}, {"epochs", 3}}},
                       {"npu", {{"input_policy", "strict"}, {"stall_cycles_after_fire", 0}}},
                       {"gen", {{"write_streams", "none"}, {"distances_cm", {10, 50}}}},
                       {"preprocess", {{"norm_mode", "MAX"}}},
                       {"eval", {{"trials", 4}, {"threads", 3}}}};
  const auto c = config_from_json(overrides);
  EXPECT_EQ(c.pipeline.train.n_hidden, 17u);
  EXPECT_EQ(c.pipeline.timing.input_policy, InputPolicy::kStrict);
  EXPECT_EQ(c.write_streams, StreamDump::kNone);
  EXPECT_EQ(c.pipeline.threads, 3);

  const auto resolved = to_json(c);
  EXPECT_FALSE(resolved["eval"].contains("threads"));
  const auto again = config_from_json(resolved);
  EXPECT_EQ(to_json(again), resolved);
  EXPECT_EQ(config_hash(again), config_hash(c));
  EXPECT_NE(config_hash(c), config_hash(ToolConfig{}));
}

TEST(Config, ThreadCountDoesNotChangeHash) {
  const auto one = config_from_json({{"eval", {{"threads", 1}}}});
  const auto many = config_from_json({{"eval", {{"threads", 8}}}});
  EXPECT_EQ(config_hash(one), config_hash(many));
}

TEST(Config, RejectsUnknownOrInvalidEntries) {
  const auto code = [](const json& j) { return error_code_of([&] { config_from_json(j); }); };
  EXPECT_EQ(code(json::array()), "invalid_config");
  EXPECT_EQ(code({{"bogus", json::object()}}), "invalid_config");
  EXPECT_EQ(code({{"ann", {{"n_hiden", 4}}}}), "invalid_config");
  EXPECT_EQ(code({{"ann", 4}}), "invalid_config");
  EXPECT_EQ(code({{"ann", {{"n_hidden", "four"}}}}), "invalid_config");
  EXPECT_EQ(code({{"ann", {{"n_hidden", 0}}}}), "invalid_config");
  EXPECT_EQ(code({{"gen", {{"distances_cm", {10, 75}}}}}), "invalid_config");
  EXPECT_EQ(code({{"gen", {{"write_streams", "some"}}}}), "invalid_config");
  EXPECT_EQ(code({{"npu", {{"input_policy", "lenient"}}}}), "invalid_config");
  EXPECT_EQ(code({{"eval", {{"rate_hz", 0}}}}), "invalid_config");
  EXPECT_EQ(code({{"eval", {{"early_stop_margin", 0}}}}), "invalid_config");
  EXPECT_EQ(code({{"convert", {{"threshold_percentile", 101}}}}), "invalid_config");
  EXPECT_EQ(code({{"convert", {{"accumulator_bits", 40}}}}), "invalid_config");
}

TEST(Config, EnumParsers) {
  EXPECT_EQ(parse_input_policy("strict"), InputPolicy::kStrict);
  EXPECT_EQ(parse_input_policy("handshake"), InputPolicy::kHandshake);
  EXPECT_STREQ(to_string(InputPolicy::kStrict), "strict");
  for (auto s : {StreamDump::kNone, StreamDump::kTest, StreamDump::kAll})
    EXPECT_EQ(parse_stream_dump(to_string(s)), s);
  EXPECT_EQ(error_code_of([] { parse_stream_dump("ALL"); }), "invalid_config");
}

}  // namespace
}  // namespace radsnn
