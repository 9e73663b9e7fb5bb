// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Checkpoint format: a text header with the config and an ordered manifest of
// (name, shape, byte offset) lines, then raw little-endian float32 payloads in
// manifest order.

#pragma once

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "cadb/config_kv.hpp"
#include "cadb/model.hpp"

namespace cadb {

inline constexpr const char* kCheckpointMagic = "CADBCKPT 1";

inline void save_checkpoint(const std::string& path, Model<float>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("save_checkpoint: cannot open '" + path + "' for writing");
  out << kCheckpointMagic << "\n";
  for (const auto& [k, v] : model_config_kv(model.config()))
    out << "config " << k << " " << v << "\n";
  int64_t offset = 0;
  for (const auto& item : model.parameters().items()) {
    out << "tensor " << item.name << " ";
    const Shape& s = item.tensor.shape();
    for (size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
    out << " " << offset << "\n";
    offset += item.tensor.numel() * static_cast<int64_t>(sizeof(float));
  }
  out << "end_header\n";
  for (const auto& item : model.parameters().items())
    out.write(reinterpret_cast<const char*>(item.tensor.data()),
              static_cast<std::streamsize>(item.tensor.numel() * sizeof(float)));
  if (!out) fail("save_checkpoint: write failed for '" + path + "'");
}

namespace detail {

struct ManifestRow {
  std::string name;
  Shape shape;
  int64_t offset = 0;
};

struct CheckpointHeader {
  ModelConfig config;
  std::vector<ManifestRow> manifest;
  std::streampos payload_start;
};

inline CheckpointHeader read_checkpoint_header(std::istream& in, const std::string& path) {
  CheckpointHeader h;
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    fail("checkpoint '" + path + "': bad magic (not a checkpoint file?)");
  while (std::getline(in, line)) {
    if (line == "end_header") {
      h.payload_start = in.tellg();
      return h;
    }
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "config") {
      std::string key, value;
      ss >> key >> value;
      if (!apply_model_config_key(h.config, key, value))
        fail("checkpoint '" + path + "': unknown config key '" + key + "'");
    } else if (kind == "tensor") {
      ManifestRow row;
      std::string dims;
      ss >> row.name >> dims >> row.offset;
      if (!ss) fail("checkpoint '" + path + "': malformed manifest line: " + line);
      std::istringstream ds(dims);
      std::string d;
      while (std::getline(ds, d, ',')) row.shape.push_back(std::stoll(d));
      h.manifest.push_back(std::move(row));
    } else {
      fail("checkpoint '" + path + "': unexpected header line: " + line);
    }
  }
  fail("checkpoint '" + path + "': missing end_header");
}

}  // namespace detail

inline ModelConfig read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("checkpoint: cannot open '" + path + "'");
  return detail::read_checkpoint_header(in, path).config;
}

// Loads payloads into an existing model; every manifest row must match the
// model's parameter of the same position in name and shape.
inline void load_checkpoint(const std::string& path, Model<float>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("checkpoint: cannot open '" + path + "'");
  detail::CheckpointHeader h = detail::read_checkpoint_header(in, path);
  const auto& items = model.parameters().items();
  if (h.manifest.size() != items.size())
    fail("checkpoint '" + path + "': has " + std::to_string(h.manifest.size()) +
         " tensors but the model expects " + std::to_string(items.size()));
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& row = h.manifest[i];
    const auto& item = items[i];
    if (row.name != item.name)
      fail("checkpoint '" + path + "': tensor " + std::to_string(i) + " is '" + row.name +
           "' but the model expects '" + item.name + "'");
    if (row.shape != item.tensor.shape())
      fail("checkpoint '" + path + "': shape of '" + row.name + "' is " +
           shape_str(row.shape) + " but the model expects " +
           shape_str(item.tensor.shape()));
  }
  for (size_t i = 0; i < items.size(); ++i) {
    in.seekg(h.payload_start + static_cast<std::streamoff>(h.manifest[i].offset));
    Tensor<float> t = items[i].tensor;
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in)
      fail("checkpoint '" + path + "': truncated payload for '" + items[i].name + "'");
  }
}

inline Model<float> load_checkpoint_model(const std::string& path) {
  ModelConfig cfg = read_checkpoint_config(path);
  Model<float> model(cfg);
  load_checkpoint(path, model);
  return model;
}

}  // namespace cadb
