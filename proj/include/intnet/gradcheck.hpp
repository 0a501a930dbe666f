#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "intnet/autodiff.hpp"

namespace intnet {

struct GradCheckEntry {
  std::string name;
  ad::Scalar error = 0;
  ad::Scalar threshold = 0;
  bool pass() const { return error < threshold; }
};

// Central-difference verification (eps = 1e-5, 64-bit) of every tape
// operation, the recurrent and CRF composites, each character encoder, and
// the end-to-end sentence NLL of an IntNet-5 + BiLSTM(H=8) + CRF(K=3) model
// on a 3-token fixture. Fixtures are re-seeded until their values sit away
// from ReLU and max-pool kinks so the finite differences are trustworthy.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed = 42);

}  // namespace intnet
