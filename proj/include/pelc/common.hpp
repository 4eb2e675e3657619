#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <torch/torch.h>

namespace pelc {

// FNV-1a, used for config/dataset/metric-file hashing.
std::uint64_t fnv1a64(std::string_view bytes);
std::string to_hex(std::uint64_t v);
std::uint64_t hash_file(const std::string& path);

// Writes via temp file + rename so partial runs never leave torn artifacts.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);
void ensure_dir(const std::string& path);

// Fresh CPU generator for a seed-partitioned stream.
at::Generator make_generator(std::uint64_t seed);

// Full-precision, locale-independent double rendering for metric files.
std::string format_double(double v);

}  // namespace pelc
