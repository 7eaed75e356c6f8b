#include "cli.hpp"

#include <malloc.h>

#include <iostream>

int main(int argc, char** argv) {
  // Training allocates and frees large buffers every step; keep them in the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return xrot::cli::run(argc, argv, std::cout, std::cerr);
}
