#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace advmap {

// Training and attack loops allocate multi-megabyte Eigen temporaries every
// step. glibc serves those with mmap and returns them with munmap, so most of
// the run ends up in page faults. Keeping them on the heap avoids that.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
#endif
}

}  // namespace advmap
