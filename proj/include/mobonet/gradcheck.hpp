#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mobo {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int instances = 0;
};

// Central finite-difference sweep over every differentiable op and both
// losses, in double precision. Each op gets `instances` random cases; the
// reported value is the worst relative error between analytic and numeric
// gradients over all input elements. Deterministic for a fixed seed.
std::vector<GradCheckEntry> run_gradcheck(std::uint64_t seed = 1, int instances = 20);

}  // namespace mobo
