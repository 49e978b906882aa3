#pragma once

// Binary model checkpoints:
//   "FGGSLCK\x01" | u32 header length | header JSON |
//   u32 tensor count | { u32 name length | name | u64 rows | u64 cols | f64 values (row-major) }*
// All integers and doubles are little-endian.

#include "fggsl/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace fggsl {

struct CheckpointHeader {
    ModelConfig model;
    double alpha = 1.0;
    double beta = 1.0;
    int features = 0;
    int classes = 0;
    std::string candidate = "full";
    std::uint64_t seed = 0;
    int split_id = 0;

    nlohmann::json to_json() const;
    static CheckpointHeader from_json(const nlohmann::json& j);
};

struct Checkpoint {
    CheckpointHeader header;
    FgGSLModel model;
};

/// Throws IoError when the file cannot be written.
void save_checkpoint(const std::filesystem::path& path, const FgGSLModel& model, const CheckpointHeader& header);
/// Throws IoError when the file cannot be read, ParseError on malformed content.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fggsl
