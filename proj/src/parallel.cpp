#include "stcdit/parallel.hpp"

#include <cstdlib>
#include <string>

namespace stcdit {

int thread_budget(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("STCDIT_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace stcdit
