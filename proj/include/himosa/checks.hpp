#pragma once

#include <vector>

#include "himosa/oracle.hpp"

namespace himosa {

// Forward-equivalence comparisons against the reference implementations:
// routed attention at full density vs the dense oracle, convolutions vs
// quadruple loops, bicubic vs per-pixel evaluation (byte-exact), metrics vs
// loop references, and exact structural round trips.
std::vector<OracleReport> run_oracle_suite();

// Central-difference gradient checks (h=1e-5, ≥5 seeds, rel tol 1e-4) for
// every differentiable op, the mid-level blocks, and a composed one-block
// network. Token selection is pinned to the sequential strategy where a
// top-k index flip would make the finite-difference probe ill-posed.
std::vector<OracleReport> run_grad_suite();

}  // namespace himosa
