#include "pelc/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "pelc/common.hpp"

namespace pelc {

namespace {
constexpr char kMagic[8] = {'P', 'E', 'L', 'C', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json meta = ckpt.meta;
  meta["format_version"] = 1;
  auto& index = meta["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    index.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"dtype", "f32"}});
  }
  std::string header = meta.dump();

  std::string blob;
  blob.reserve(8 + 8 + header.size());
  blob.append(kMagic, 8);
  std::uint64_t len = header.size();
  blob.append(reinterpret_cast<const char*>(&len), 8);
  blob += header;
  for (const auto& [name, t] : ckpt.tensors) {
    auto f = t.to(torch::kFloat32).contiguous();
    blob.append(reinterpret_cast<const char*>(f.data_ptr<float>()),
                std::size_t(f.numel()) * 4);
  }
  write_file_atomic(path, blob);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string blob = read_file(path);
  if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, 8) != 0)
    throw std::runtime_error("not a pelc checkpoint: " + path);
  std::uint64_t len;
  std::memcpy(&len, blob.data() + 8, 8);
  if (blob.size() < 16 + len) throw std::runtime_error("truncated checkpoint: " + path);
  Checkpoint ckpt;
  ckpt.meta = nlohmann::json::parse(blob.substr(16, len));
  std::size_t off = 16 + len;
  for (const auto& e : ckpt.meta.at("tensors")) {
    auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    std::int64_t numel = 1;
    for (auto s : shape) numel *= s;
    if (off + std::size_t(numel) * 4 > blob.size())
      throw std::runtime_error("truncated checkpoint data: " + path);
    auto t = torch::from_blob(const_cast<char*>(blob.data() + off), shape,
                              torch::kFloat32)
                 .clone();
    ckpt.tensors.emplace_back(e.at("name").get<std::string>(), t);
    off += std::size_t(numel) * 4;
  }
  return ckpt;
}

std::vector<std::pair<std::string, torch::Tensor>> snapshot_module(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters())
    out.emplace_back("param/" + p.key(), p.value().detach().clone());
  for (const auto& b : m.named_buffers())
    out.emplace_back("buffer/" + b.key(), b.value().detach().clone());
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

void restore_module(torch::nn::Module& m,
                    const std::vector<std::pair<std::string, torch::Tensor>>& tensors) {
  torch::NoGradGuard ng;
  auto params = m.named_parameters();
  auto buffers = m.named_buffers();
  for (const auto& [name, t] : tensors) {
    if (name.rfind("param/", 0) == 0) {
      auto* p = params.find(name.substr(6));
      if (!p) throw std::runtime_error("checkpoint restore: unknown parameter " + name);
      p->copy_(t);
    } else if (name.rfind("buffer/", 0) == 0) {
      auto* b = buffers.find(name.substr(7));
      if (!b) throw std::runtime_error("checkpoint restore: unknown buffer " + name);
      b->copy_(t);
    }
  }
}

}  // namespace pelc
