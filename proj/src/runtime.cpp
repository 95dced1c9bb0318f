#include "sedattack/runtime.hpp"

#if __has_include(<malloc.h>)
#include <malloc.h>
#endif

namespace sedattack {

void configure_allocator() {
#if defined(M_MMAP_THRESHOLD) && defined(M_TRIM_THRESHOLD)
  // 32 MiB is the largest mmap threshold glibc accepts.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

}  // namespace sedattack
