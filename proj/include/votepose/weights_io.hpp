#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "votepose/network.hpp"

namespace votepose {

namespace detail {

struct TensorRecord {
  std::string name;
  std::vector<uint64_t> dims;
  std::vector<float> data;
};

// Binary container: magic "APW1", u32 length + UTF-8 key-value block, then
// per-tensor records (u32 name length, name, u32 rank, u64 dims, f32 data),
// all little-endian.
void write_weights_file(const std::filesystem::path& path, const std::string& kv,
                        const std::vector<TensorRecord>& tensors);
std::pair<std::string, std::vector<TensorRecord>> read_weights_file(
    const std::filesystem::path& path);

std::string encode_config(const NetworkConfig& config);
NetworkConfig decode_config(const std::string& kv,
                            const std::filesystem::path& origin);

// Applies fn(base_name, linear) over every linear map in visit_params order.
template <typename Model, typename Fn>
void visit_linears(Model& model, Fn&& fn) {
  for (std::size_t c = 0; c < model.convs.size(); ++c)
    fn("conv" + std::to_string(c), model.convs[c].lin);
  auto visit_head = [&](const char* name, auto& head) {
    for (std::size_t l = 0; l < head.layers.size(); ++l)
      fn(std::string(name) + "." + std::to_string(l), head.layers[l]);
  };
  visit_head("head_seg", model.head_seg);
  visit_head("head_center", model.head_center);
  visit_head("head_top", model.head_top);
}

}  // namespace detail

template <typename T>
void save_weights(const NetworkModelT<T>& model, const std::filesystem::path& path) {
  std::vector<detail::TensorRecord> tensors;
  detail::visit_linears(model, [&](const std::string& base, const LinearT<T>& lin) {
    detail::TensorRecord w;
    w.name = base + ".w";
    w.dims = {uint64_t(lin.out), uint64_t(lin.in)};
    w.data.assign(lin.w.begin(), lin.w.end());
    tensors.push_back(std::move(w));
    detail::TensorRecord b;
    b.name = base + ".b";
    b.dims = {uint64_t(lin.out)};
    b.data.assign(lin.b.begin(), lin.b.end());
    tensors.push_back(std::move(b));
  });
  detail::write_weights_file(path, detail::encode_config(model.config), tensors);
}

template <typename T>
NetworkModelT<T> load_weights(const std::filesystem::path& path) {
  auto [kv, tensors] = detail::read_weights_file(path);
  NetworkModelT<T> model = make_network<T>(detail::decode_config(kv, path));
  std::size_t next = 0;
  auto take = [&](const std::string& name,
                  const std::vector<uint64_t>& dims) -> const detail::TensorRecord& {
    if (next >= tensors.size())
      throw DataError("weights file is missing tensor '" + name +
                      "': " + path.string());
    const detail::TensorRecord& rec = tensors[next++];
    if (rec.name != name)
      throw DataError("weights file tensor order mismatch (got '" + rec.name +
                      "', expected '" + name + "'): " + path.string());
    if (rec.dims != dims)
      throw DataError("weights file shape mismatch for '" + name +
                      "': " + path.string());
    return rec;
  };
  detail::visit_linears(model, [&](const std::string& base, LinearT<T>& lin) {
    const auto& w = take(base + ".w", {uint64_t(lin.out), uint64_t(lin.in)});
    lin.w.assign(w.data.begin(), w.data.end());
    const auto& b = take(base + ".b", {uint64_t(lin.out)});
    lin.b.assign(b.data.begin(), b.data.end());
  });
  if (next != tensors.size())
    throw DataError("weights file contains unexpected extra tensors: " +
                    path.string());
  return model;
}

}  // namespace votepose
