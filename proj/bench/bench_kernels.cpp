// Compares the kd-tree-backed parallel metric kernels against the
// exhaustive-scan serial reference: wall time and exact result agreement.

#include <chrono>
#include <cstdio>
#include <random>

#include "mapfuse/map_eval.hpp"
#include "mapfuse/serial_ref.hpp"

using namespace mapfuse;

namespace {

ColoredPointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = [&] { return (rng() >> 11) * 0x1.0p-53; };
  ColoredPointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.append(Vec3(10 * u(), 10 * u(), 10 * u()), Vec3(u(), u(), u()));
  return c;
}

template <typename F>
double time_ms(F&& f, double& out) {
  const auto t0 = std::chrono::steady_clock::now();
  out = f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void row(const char* name, double par_ms, double ser_ms, double par_v,
         double ser_v) {
  std::printf("%-18s parallel %9.2f ms   serial %9.2f ms   speedup %5.1fx   %s\n",
              name, par_ms, ser_ms, ser_ms / par_ms,
              par_v == ser_v ? "exact match" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t n = 20000;
  if (argc > 1) n = static_cast<std::size_t>(std::strtoull(argv[1], nullptr, 10));
  const ColoredPointCloud a = random_cloud(n, 1);
  const ColoredPointCloud b = random_cloud(n, 2);
  std::printf("n = %zu points per cloud\n", n);

  double pv, sv;
  double pt, st;

  pt = time_ms([&] { return color_distance(a, b); }, pv);
  st = time_ms([&] { return serial::color_distance(a, b); }, sv);
  row("color_distance", pt, st, pv, sv);

  pt = time_ms([&] { return local_color_recall(a, b, 0.1, 0.5); }, pv);
  st = time_ms([&] { return serial::local_color_recall(a, b, 0.1, 0.5); }, sv);
  row("local_color_recall", pt, st, pv, sv);

  pt = time_ms([&] { return color_consistency_score(a, 0.1); }, pv);
  st = time_ms([&] { return serial::color_consistency_score(a, 0.1); }, sv);
  row("color_consistency", pt, st, pv, sv);

  pt = time_ms([&] { return geometric_chamfer(a, b); }, pv);
  st = time_ms([&] { return serial::geometric_chamfer(a, b); }, sv);
  row("geometric_chamfer", pt, st, pv, sv);

  pt = time_ms([&] { return overlap_fitness(a, b, 0.5); }, pv);
  st = time_ms([&] { return serial::overlap_fitness(a, b, 0.5); }, sv);
  row("overlap_fitness", pt, st, pv, sv);
  return 0;
}
