#pragma once

// Named-tensor archive.
//
//   "LUTF" | u32 version | u32 entry count
//   per entry: u32 name length, UTF-8 name, u32 rank, u64 extents[rank],
//              little-endian f32 payload
//   u64 metadata length | UTF-8 metadata (JSON)
//
// Entries keep insertion order so save -> load -> save is byte-identical.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lutfuse/tensor.hpp"

namespace lutfuse::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

class Checkpoint {
public:
    // Inserts or replaces.
    void put(const std::string& name, const Tensor& t);
    void put(const std::string& name, Shape shape, std::vector<float> values);

    bool contains(const std::string& name) const { return find(name) != nullptr; }
    const CheckpointEntry* find(const std::string& name) const;
    // Throws ParseError when missing.
    const CheckpointEntry& at(const std::string& name) const;
    Tensor tensor(const std::string& name) const;
    // Copies the stored values into `dst`, checking the shape.
    void restore(const std::string& name, Tensor& dst) const;

    const std::vector<CheckpointEntry>& entries() const { return entries_; }
    std::string& metadata() { return metadata_; }
    const std::string& metadata() const { return metadata_; }

    std::string serialize() const;
    static Checkpoint deserialize(std::string_view bytes);
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    std::vector<CheckpointEntry> entries_;
    std::string metadata_;
};

}  // namespace lutfuse::ad
