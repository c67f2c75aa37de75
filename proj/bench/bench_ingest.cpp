// Serial vs OpenMP ingest over a synthetic bundle.
//   bench_ingest [templates=100] [lines=100000] [repeats=3]
#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <iostream>

#include "logtree/matcher.hpp"
#include "logtree/synth.hpp"

using namespace logtree;

namespace {

template <class Fn>
double best_of(int repeats, Fn fn) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t templates = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 100;
  std::size_t lines = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 100000;
  int repeats = argc > 3 ? std::atoi(argv[3]) : 3;

  synth::Options opt;
  opt.templates = templates;
  opt.seed = 13;
  Bundle b = synth::random_bundle(opt);
  auto corpus = synth::sample_corpus(b, lines, 17);
  CompiledTree ct(b.tree);

  std::vector<MatchResult> serial, parallel;
  double ts = best_of(repeats, [&] { serial = ingest_serial(ct, corpus.lines); });
  double tp = best_of(repeats, [&] { parallel = ingest_parallel(ct, corpus.lines); });

  bool same = serial.size() == parallel.size();
  for (std::size_t i = 0; same && i < serial.size(); ++i) same = serial[i].record == parallel[i].record;

  std::cout << "templates " << b.tree.leaf_count() << ", lines " << lines << ", threads " << omp_get_max_threads()
            << "\n"
            << "serial    " << ts << " s  " << static_cast<long>(lines / ts) << " lines/s\n"
            << "parallel  " << tp << " s  " << static_cast<long>(lines / tp) << " lines/s\n"
            << "speedup   " << ts / tp << "\n"
            << "outputs " << (same ? "identical" : "DIFFER") << "\n";
  return same ? 0 : 1;
}
