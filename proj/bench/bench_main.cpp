#include <cstdlib>
#include <cstring>
#include <iostream>

#include "kernel_bench.hpp"

int main(int argc, char** argv) {
  odesr::bench::KernelBenchOptions opts;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--quick") == 0)
      opts.quick = true;
    else if (std::strcmp(argv[i], "--threads") == 0 && i + 1 < argc)
      opts.threads = std::atoi(argv[++i]);
    else if (std::strcmp(argv[i], "--repeats") == 0 && i + 1 < argc)
      opts.repeats = std::atoi(argv[++i]);
    else {
      std::cerr << "usage: odesr_bench [--quick] [--threads N] [--repeats N]\n";
      return 1;
    }
  }
  return odesr::bench::run_kernel_benchmark(std::cout, opts) ? 0 : 2;
}
