// Global allocation on 64-byte boundaries.
//
// Vectorized Eigen reductions and small products peel a prefix up to the
// first SIMD-aligned element. With malloc's 16-byte alignment that prefix
// depends on where a buffer lands, so identical inputs could round
// differently between calls. Fixing the alignment makes every result a
// function of the inputs alone.

#include <cstdint>
#include <cstdlib>
#include <new>

namespace {

constexpr std::size_t kAlignment = 64;

// malloc a little more and keep the original pointer just below the aligned
// block; this stays on malloc's fast path, unlike aligned_alloc.
void* allocate(std::size_t size) {
  void* raw = std::malloc(size + kAlignment);
  if (!raw) throw std::bad_alloc();
  const auto addr = (reinterpret_cast<std::uintptr_t>(raw) + kAlignment) & ~(kAlignment - 1);
  void** block = reinterpret_cast<void**>(addr);
  block[-1] = raw;
  return block;
}

void release(void* p) noexcept {
  if (p) std::free(static_cast<void**>(p)[-1]);
}

}  // namespace

void* operator new(std::size_t size) { return allocate(size); }
void* operator new[](std::size_t size) { return allocate(size); }
void operator delete(void* p) noexcept { release(p); }
void operator delete[](void* p) noexcept { release(p); }
void operator delete(void* p, std::size_t) noexcept { release(p); }
void operator delete[](void* p, std::size_t) noexcept { release(p); }
