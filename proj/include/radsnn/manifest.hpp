// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Run manifests. Every JSON artifact carries a "manifest" member next to its
// payload; the manifest's content_hash is the FNV-1a hash of the payload
// serialized without the manifest. Files that are not JSON (CSV, JSONL) are
// listed by path and hash in the manifest of the JSON artifact that owns them.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "radsnn/error.hpp"
#include "radsnn/rng.hpp"
#include "radsnn/spectra.hpp"

namespace radsnn {

inline constexpr const char* kToolVersion = "0.1.0";

struct FileRef {
  std::string path;  // relative to the artifact that lists it
  std::string hash;
};

struct Manifest {
  std::string subcommand;
  nlohmann::json config = nlohmann::json::object();
  std::vector<FileRef> inputs;
  std::vector<FileRef> outputs;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  std::string content_hash;
};

inline nlohmann::json to_json(const FileRef& f) { return {{"path", f.path}, {"hash", f.hash}}; }

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json in = nlohmann::json::array(), out = nlohmann::json::array();
  for (const auto& f : m.inputs) in.push_back(to_json(f));
  for (const auto& f : m.outputs) out.push_back(to_json(f));
  return {{"subcommand", m.subcommand}, {"config", m.config},   {"inputs", in},
          {"outputs", out},             {"seed", m.seed},
          {"tool_version", m.tool_version}, {"content_hash", m.content_hash}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.value("config", nlohmann::json::object());
    for (const auto& f : j.value("inputs", nlohmann::json::array()))
      m.inputs.push_back({f.at("path").get<std::string>(), f.at("hash").get<std::string>()});
    for (const auto& f : j.value("outputs", nlohmann::json::array()))
      m.outputs.push_back({f.at("path").get<std::string>(), f.at("hash").get<std::string>()});
    m.seed = j.at("seed").get<std::uint64_t>();
    m.tool_version = j.value("tool_version", "");
    m.content_hash = j.at("content_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail("invalid_manifest", "malformed manifest: ", e.what());
  }
  return m;
}

inline std::string payload_hash(nlohmann::json payload) {
  payload.erase("manifest");
  return hash_hex(payload.dump());
}

inline std::string text_hash(std::string_view text) { return hash_hex(text); }

inline std::string file_hash(const std::filesystem::path& p) { return hash_hex(read_file(p)); }

inline nlohmann::json seal(nlohmann::json payload, Manifest m) {
  m.content_hash = payload_hash(payload);
  payload["manifest"] = to_json(m);
  return payload;
}

inline void write_text(const std::filesystem::path& p, std::string_view text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  require(static_cast<bool>(out), "io_error", p.string(), ": cannot open for writing");
  out << text;
  require(static_cast<bool>(out), "io_error", p.string(), ": write failed");
}

inline void write_artifact(const std::filesystem::path& p, const nlohmann::json& sealed) {
  write_text(p, sealed.dump(1) + "\n");
}

struct Artifact {
  nlohmann::json payload;  // includes the manifest member
  Manifest manifest;
  std::string file_hash;  // hash of the file bytes
  std::filesystem::path path;
};

// Parse, check the embedded content hash, and optionally the producing
// subcommand.
inline Artifact load_artifact(const std::filesystem::path& p, const std::string& subcommand = "") {
  const std::string text = read_file(p);
  Artifact a;
  a.path = p;
  a.file_hash = hash_hex(text);
  try {
    a.payload = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail("parse_error", p.string(), ": ", e.what());
  }
  require(a.payload.is_object() && a.payload.contains("manifest"), "invalid_manifest", p.string(),
          ": no manifest");
  a.manifest = manifest_from_json(a.payload["manifest"]);
  const auto actual = payload_hash(a.payload);
  require(actual == a.manifest.content_hash, "hash_mismatch", p.string(),
          ": content hash ", actual, " does not match manifest ", a.manifest.content_hash);
  if (!subcommand.empty())
    require(a.manifest.subcommand == subcommand, "wrong_artifact", p.string(), ": produced by '",
            a.manifest.subcommand, "', expected '", subcommand, "'");
  return a;
}

// Read a file that a manifest lists, rejecting it when its bytes changed.
inline std::string read_verified(const std::filesystem::path& p, const std::string& expected_hash) {
  std::string text = read_file(p);
  const auto actual = hash_hex(text);
  require(actual == expected_hash, "hash_mismatch", p.string(), ": hash ", actual,
          " does not match recorded ", expected_hash);
  return text;
}

}  // namespace radsnn
