#pragma once

namespace sedattack {

// Keeps freed tape buffers in the heap instead of returning them to the OS
// after every iteration. Call once at process start; no-op off glibc.
void configure_allocator();

}  // namespace sedattack
