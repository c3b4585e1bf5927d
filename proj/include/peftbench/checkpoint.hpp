// Copyright 2026 The peftbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include <json.hpp>

#include "peftbench/microformer.hpp"

namespace peftbench {

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// A checkpoint is two files sharing a stem:
///   <stem>.json  manifest {format, config, seed, parameters[{name, rows, cols,
///                frozen}], total_values, extra}
///   <stem>.bin   parameters() values concatenated as little-endian doubles.
/// `extra` carries caller data (vocabulary, task framing).
void save_checkpoint(const Microformer& model, const std::filesystem::path& stem,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  Microformer model;
  nlohmann::json extra;
};

/// Accepts the stem, the .json path, or a directory containing "checkpoint.json".
/// Throws DataError on missing files, schema mismatch or a length mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path checkpoint_stem(const std::filesystem::path& path);

/// Adapter-only document: {method, seed, shapes, parameters[{name, rows, cols,
/// values: [decimal strings]}]}. Values print with 17 significant digits so
/// reloading is exact.
nlohmann::json adapters_to_json(const Microformer& model);
/// The model must already carry adapters of the same method and shapes.
void adapters_from_json(Microformer& model, const nlohmann::json& doc);

}  // namespace peftbench
