#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "stcdit/error.hpp"
#include "stcdit/tensor.hpp"
#include "stcdit/video_io.hpp"

namespace stcdit::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("stcdit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

/// Runs fn and reports the ErrorCode it threw, if any.
template <typename Fn>
bool throws_code(Fn&& fn, ErrorCode code) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

/// Seeded random texture of uniform bytes.
inline Frame noise_frame(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
  for (auto& p : px) p = static_cast<std::uint8_t>(d(rng));
  return Frame(w, h, PixelFormat::Gray8, std::move(px));
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, T lo = T(-1), T hi = T(1)) {
  std::mt19937_64 rng(seed);
  return uniform<T>(std::move(shape), lo, hi, rng);
}

inline std::vector<double> to_vec(const Tensor64& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace stcdit::test
