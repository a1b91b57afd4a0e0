#pragma once

#include <string>
#include <utility>
#include <vector>

#include "geogan/tensor.hpp"
#include "json.hpp"

namespace geogan {

// Named-f32-tensor container used for model checkpoints. Same layout family
// as tile files: "CKPT" magic, u32-LE length of a newline-terminated JSON
// header, then raw little-endian f32 payloads in declared order. The header
// carries arbitrary metadata under "meta" plus per-tensor name/shape.
struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  void add(std::string name, Tensor<float> t) {
    tensors.emplace_back(std::move(name), std::move(t));
  }
  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
  const Tensor<float>& at(const std::string& name) const {
    const Tensor<float>* t = find(name);
    if (!t) throw FormatError("archive: missing tensor '" + name + "'");
    return *t;
  }
};

void write_archive(const TensorArchive& ar, const std::string& path);
TensorArchive read_archive(const std::string& path);

}  // namespace geogan
