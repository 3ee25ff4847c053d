#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "partfield/tensor.hpp"

namespace partfield {

/// Named parameter tensors, serialized as a directory checkpoint:
/// manifest.json (names, shapes, dtype, byte offsets, free-form meta)
/// plus params.bin, one little-endian raw blob of all f64 values.
/// Round-trips bit-exactly.
class ParamSet {
public:
    void add(std::string name, ad::Tensor tensor);
    bool contains(const std::string& name) const;
    const ad::Tensor& get(const std::string& name) const;
    ad::Tensor& get(const std::string& name);

    std::size_t count() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::vector<ad::Tensor> tensors_;
};

void save_checkpoint(const std::filesystem::path& dir, const ParamSet& params,
                     const nlohmann::json& meta);

/// Throws on missing files, version mismatch, or truncated blob.
ParamSet load_checkpoint(const std::filesystem::path& dir, nlohmann::json* meta_out = nullptr);

}  // namespace partfield
