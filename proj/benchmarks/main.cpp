#include <benchmark/benchmark.h>

// The distro benchmark_main archive carries LTO bytecode from another GCC
// release, so the entry point is compiled here instead.
BENCHMARK_MAIN();
