#include "stcdit/tensor_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "stcdit/error.hpp"

namespace stcdit {

namespace fs = std::filesystem;

void write_tensor(std::ostream& out, const Tensor32& t) {
  out << t.shape().rank();
  for (std::size_t d : t.shape().dims()) out << ' ' << d;
  out << '\n';
  for (float v : t.data()) out << fmt::format("{:.9g}\n", v);
}

Tensor32 read_tensor(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::UnsupportedFormat, "empty tensor dump");
  std::istringstream hs(header);
  std::size_t rank = 0;
  if (!(hs >> rank) || rank == 0 || rank > 5) throw Error(ErrorCode::UnsupportedFormat, "bad tensor header: " + header);
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) {
    if (!(hs >> d)) throw Error(ErrorCode::UnsupportedFormat, "bad tensor header: " + header);
  }
  Shape shape(dims);
  std::vector<float> values(shape.numel());
  for (auto& v : values) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::DimensionMismatch, "tensor dump ends early");
    try {
      v = std::stof(line);
    } catch (const std::exception&) {
      throw Error(ErrorCode::UnsupportedFormat, "bad tensor value: " + line);
    }
  }
  return Tensor32(shape, std::move(values));
}

void save_tensor(const fs::path& file, const Tensor32& t) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::MissingInput, "cannot write " + file.string());
  write_tensor(out, t);
}

Tensor32 load_tensor(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + file.string());
  return read_tensor(in);
}

namespace {

std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.rank(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const NamedTensors& tensors) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error(ErrorCode::MissingInput, "cannot write manifest in " + dir.string());
  for (const auto& [name, t] : tensors) {
    if (name.empty() || name.find_first_of(" \t\n/") != std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "tensor name '" + name + "' is not a plain token");
    }
    const std::string file = name + ".txt";
    manifest << name << ' ' << shape_token(t.shape()) << ' ' << file << '\n';
    save_tensor(dir / file, t);
  }
}

NamedTensors load_checkpoint(const fs::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error(ErrorCode::MissingInput, "no manifest.txt in " + dir.string());
  NamedTensors out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, shape, file;
    if (!(ls >> name >> shape >> file)) throw Error(ErrorCode::UnsupportedFormat, "bad manifest line: " + line);
    Tensor32 t = load_tensor(dir / file);
    if (shape_token(t.shape()) != shape) {
      throw Error(ErrorCode::DimensionMismatch, fmt::format("{}: manifest says {}, file has {}", name, shape, shape_token(t.shape())));
    }
    out.emplace_back(name, std::move(t));
  }
  return out;
}

}  // namespace stcdit
