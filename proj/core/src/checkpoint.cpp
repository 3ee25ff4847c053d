#include "partfield/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace partfield {

using nlohmann::json;

void ParamSet::add(std::string name, ad::Tensor tensor) {
    if (contains(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(tensor));
}

bool ParamSet::contains(const std::string& name) const {
    for (const auto& n : names_)
        if (n == name) return true;
    return false;
}

const ad::Tensor& ParamSet::get(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return tensors_[i];
    throw std::out_of_range("ParamSet: no tensor named " + name);
}

ad::Tensor& ParamSet::get(const std::string& name) {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return tensors_[i];
    throw std::out_of_range("ParamSet: no tensor named " + name);
}

void save_checkpoint(const std::filesystem::path& dir, const ParamSet& params, const json& meta) {
    std::filesystem::create_directories(dir);

    json manifest;
    manifest["format_version"] = 1;
    manifest["dtype"] = "f64";
    manifest["byte_order"] = "little";
    manifest["meta"] = meta;

    std::ofstream blob(dir / "params.bin", std::ios::binary);
    if (!blob) throw std::runtime_error("save_checkpoint: cannot open params.bin in " + dir.string());

    json entries = json::array();
    std::size_t offset = 0;
    for (const auto& name : params.names()) {
        const ad::Tensor& t = params.get(name);
        json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset"] = offset;
        e["count"] = t.size();
        entries.push_back(e);
        blob.write(reinterpret_cast<const char*>(t.data()),
                   static_cast<std::streamsize>(t.size() * sizeof(double)));
        offset += t.size() * sizeof(double);
    }
    manifest["tensors"] = entries;
    blob.close();
    if (!blob) throw std::runtime_error("save_checkpoint: write failed");

    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

ParamSet load_checkpoint(const std::filesystem::path& dir, json* meta_out) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("load_checkpoint: no manifest.json in " + dir.string());
    json manifest = json::parse(mf);
    if (manifest.at("format_version").get<int>() != 1)
        throw std::runtime_error("load_checkpoint: unsupported format version");
    if (manifest.at("dtype").get<std::string>() != "f64")
        throw std::runtime_error("load_checkpoint: unsupported dtype");
    if (meta_out) *meta_out = manifest.value("meta", json::object());

    std::ifstream blob(dir / "params.bin", std::ios::binary);
    if (!blob) throw std::runtime_error("load_checkpoint: no params.bin in " + dir.string());

    ParamSet out;
    for (const auto& e : manifest.at("tensors")) {
        std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        std::size_t count = e.at("count").get<std::size_t>();
        std::size_t offset = e.at("offset").get<std::size_t>();
        std::vector<double> data(count);
        blob.seekg(static_cast<std::streamoff>(offset));
        blob.read(reinterpret_cast<char*>(data.data()),
                  static_cast<std::streamsize>(count * sizeof(double)));
        if (!blob) throw std::runtime_error("load_checkpoint: truncated params.bin");
        out.add(e.at("name").get<std::string>(), ad::Tensor(shape, std::move(data)));
    }
    return out;
}

}  // namespace partfield
