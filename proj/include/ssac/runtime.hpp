#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ssac {

/// Keeps large freed blocks in the heap instead of returning them to the
/// OS. Training allocates many same-sized activation buffers per step; with
/// the default glibc policy each one is a fresh mmap and pays for its page
/// faults. Process-wide; executables call it once at startup.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace ssac
