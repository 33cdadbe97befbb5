#pragma once

// DFW1: little-endian container for named float arrays.
//
//   "DFW1" | u32 entry_count | entries...
//   entry: u32 name_len | name bytes | u32 rank | rank x u32 dims | prod(dims) x f32
//
// Used for network weights, trained model banks and feature dumps.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "facedet/tensor.hpp"

namespace facedet {

/// A ranked float array. Rank 0 holds a single scalar.
struct Array {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;

    static Array scalar(float v) { return Array{{}, {v}}; }
    static Array vector(std::vector<float> v);
    static Array from_tensor(const Tensor3& t);

    std::size_t element_count() const;
    Tensor3 to_tensor() const;  // requires rank 3

    bool operator==(const Array&) const = default;
};

/// Named arrays in insertion order. Names are unique and non-empty.
class WeightStore {
public:
    using Entry = std::pair<std::string, Array>;

    void put(std::string name, Array value);  // replaces an existing entry in place
    bool contains(std::string_view name) const;
    const Array& at(std::string_view name) const;
    const Array* find(std::string_view name) const;
    float scalar(std::string_view name) const;

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    bool operator==(const WeightStore&) const = default;

private:
    std::vector<Entry> entries_;
};

std::uint64_t dfw_write(const WeightStore& store, std::ostream& sink);
WeightStore dfw_read(std::istream& source);

void dfw_save(const WeightStore& store, const std::filesystem::path& path);
WeightStore dfw_load(const std::filesystem::path& path);

}  // namespace facedet
