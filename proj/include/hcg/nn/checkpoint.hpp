#pragma once

#include "hcg/dataset.hpp"
#include "hcg/nn/module.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace hcg::nn {

inline constexpr const char* kCheckpointMagic = "HCGCKPT1";

// Named-tensor container: 8-byte magic, u64 LE header length, header JSON
// (names, shapes, byte offsets), then a little-endian float32 payload.
inline void save_checkpoint(const std::string& path, const std::vector<ParamRef>& params) {
  nlohmann::json header;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const ParamRef& p : params) {
    header["tensors"].push_back({{"name", p.name},
                                 {"rows", p.node->value.rows},
                                 {"cols", p.node->value.cols},
                                 {"offset", offset}});
    offset += p.node->value.size() * 4;
  }
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  out.write(kCheckpointMagic, 8);
  const std::uint64_t hlen = header_str.size();
  unsigned char lenb[8];
  for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>((hlen >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(lenb), 8);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const ParamRef& p : params) {
    for (double v : p.node->value.data) put_f32_le(static_cast<float>(v), out);
  }
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != kCheckpointMagic) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  unsigned char lenb[8];
  in.read(reinterpret_cast<char*>(lenb), 8);
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= static_cast<std::uint64_t>(lenb[i]) << (8 * i);
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  const nlohmann::json header = nlohmann::json::parse(header_str);
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());

  std::map<std::string, Tensor> tensors;
  for (const auto& jt : header.at("tensors")) {
    Tensor t(jt.at("rows").get<int>(), jt.at("cols").get<int>());
    std::uint64_t off = jt.at("offset");
    for (double& v : t.data) {
      v = get_f32_le(payload.data() + off);
      off += 4;
    }
    tensors.emplace(jt.at("name").get<std::string>(), std::move(t));
  }
  return tensors;
}

// Copies loaded tensors into matching params; every parameter must be
// present with the right shape.
inline void apply_checkpoint(const std::map<std::string, Tensor>& tensors,
                             const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) {
      throw std::runtime_error("apply_checkpoint: missing tensor " + p.name);
    }
    if (!it->second.same_shape(p.node->value)) {
      throw std::runtime_error("apply_checkpoint: shape mismatch for " + p.name);
    }
    p.node->value = it->second;
  }
}

}  // namespace hcg::nn
