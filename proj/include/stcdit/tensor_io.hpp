#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "stcdit/tensor.hpp"

namespace stcdit {

/// ASCII dump: `ndim d0 d1 ...` then one value per line, 9 significant digits.
void write_tensor(std::ostream& out, const Tensor32& t);
Tensor32 read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& file, const Tensor32& t);
Tensor32 load_tensor(const std::filesystem::path& file);

using NamedTensors = std::vector<std::pair<std::string, Tensor32>>;

/// Directory of dump files plus `manifest.txt` with `name shape file` lines;
/// shape is written as `d0xd1x...`.
void save_checkpoint(const std::filesystem::path& dir, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& dir);

}  // namespace stcdit
