#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sbd/common.hpp"

// Checkpoint container: a text manifest ("<name> <ndim> <d0> <d1> ..." per
// line, in blob order) plus a flat binary blob of little-endian doubles.

namespace sbd {

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

inline void save_archive(const std::string& prefix, const std::vector<NamedTensor>& tensors) {
    std::ofstream man(prefix + ".manifest");
    require(man.good(), "cannot write manifest: " + prefix + ".manifest");
    std::ofstream blob(prefix + ".bin", std::ios::binary);
    require(blob.good(), "cannot write blob: " + prefix + ".bin");
    for (const auto& t : tensors) {
        require(numel(t.shape) == t.values.size(), "archive: shape/value mismatch for " + t.name);
        man << t.name << " " << t.shape.size();
        for (int d : t.shape) man << " " << d;
        man << "\n";
        blob.write(reinterpret_cast<const char*>(t.values.data()),
                   static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    }
    require(man.good() && blob.good(), "archive write failed: " + prefix);
}

inline std::vector<NamedTensor> load_archive(const std::string& prefix) {
    std::ifstream man(prefix + ".manifest");
    require(man.good(), "cannot read manifest: " + prefix + ".manifest");
    std::ifstream blob(prefix + ".bin", std::ios::binary);
    require(blob.good(), "cannot read blob: " + prefix + ".bin");
    std::vector<NamedTensor> out;
    std::string name;
    while (man >> name) {
        std::size_t nd = 0;
        require(static_cast<bool>(man >> nd), "archive: malformed manifest line");
        Shape s(nd);
        for (auto& d : s) require(static_cast<bool>(man >> d), "archive: malformed dims");
        NamedTensor t{name, s, std::vector<double>(numel(s))};
        blob.read(reinterpret_cast<char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(double)));
        require(blob.gcount() == static_cast<std::streamsize>(t.values.size() * sizeof(double)),
                "archive: blob truncated at " + name);
        ensure_finite(t.values, "archive");
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace sbd
