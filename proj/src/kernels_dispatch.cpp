#include <atomic>

#include "coln/kernels.hpp"

namespace coln::kernels {

#if defined(__x86_64__) || defined(__i386__)
const KernelTable *avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable *neon_table();
#endif

namespace {

const KernelTable *detect() {
#if defined(__x86_64__) || defined(__i386__)
  if (__builtin_cpu_supports("avx2")) return avx2_table();
#endif
#if defined(__aarch64__)
  return neon_table();
#endif
  return &scalar();
}

std::atomic<const KernelTable *> g_active{nullptr};

}  // namespace

const KernelTable &active() {
  const KernelTable *t = g_active.load(std::memory_order_acquire);
  if (!t) {
    t = detect();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

bool select(const std::string &name) {
  if (name == "scalar") {
    g_active.store(&scalar(), std::memory_order_release);
    return true;
  }
#if defined(__x86_64__) || defined(__i386__)
  if (name == "avx2" && __builtin_cpu_supports("avx2")) {
    g_active.store(avx2_table(), std::memory_order_release);
    return true;
  }
#endif
#if defined(__aarch64__)
  if (name == "neon") {
    g_active.store(neon_table(), std::memory_order_release);
    return true;
  }
#endif
  return false;
}

}  // namespace coln::kernels
