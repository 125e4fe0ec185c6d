#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace tgn {

// Training allocates and frees many large temporaries per step. Keeping them
// on the heap instead of fresh mmap regions avoids page-fault churn.
inline void configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace tgn
