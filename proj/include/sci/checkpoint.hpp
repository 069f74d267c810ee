#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sci/tensor.hpp"

namespace sci {

/// Shape-tagged little-endian f32 array inside a checkpoint section.
struct TensorRecord {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct CheckpointSection {
    std::string name;
    std::vector<TensorRecord> tensors;

    const TensorRecord* find(const std::string& tensor_name) const;
};

/// Versioned binary container with the resolved run config embedded.
/// Round-trips bit-exactly; load rejects version mismatches.
struct Checkpoint {
    uint32_t version = 1;
    std::string config_json;
    std::vector<CheckpointSection> sections;

    const CheckpointSection* find(const std::string& section_name) const;
    CheckpointSection& section(const std::string& section_name); // creates on demand
    void add(const std::string& section_name, const std::string& tensor_name, const Tensor& t);
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path); // IoError on format/version problems

} // namespace sci
