#pragma once

// Reference solvers. They reuse the posterior, noise and pruning code of the
// inference engine but carry their own variance updates, so they can serve
// as independent checks on the diversified updates.

#include "divsbl/inference.hpp"
#include "divsbl/model.hpp"

namespace divsbl {

enum class BaselineKind { classic_sbl, bsbl_strong };

/// One EM step of the relevance vector machine: computes the posterior at
/// Sigma0 = diag(gamma) with the model's beta (own M x M solve), then returns
/// gamma_j = Sigma_jj + mu_j^2.
Vector sbl_reference_step(const MeasurementModel& model, const Vector& gammas);

/// Element-wise SBL: one variance per coefficient, no block structure.
SolveResult sbl_solve(const MeasurementModel& model, const SolverConfig& config,
                      const IterationObserver& observer = {});

/// Block SBL with a scalar variance per block and a single correlation
/// matrix B shared by all blocks:
///   gamma_i <- tr(B^{-1} (Sigma_i + mu_i mu_i^T)) / L
///   B       <- mean over active blocks of (Sigma_i + mu_i mu_i^T) / gamma_i, then Toeplitz.
SolveResult bsbl_strong_solve(const MeasurementModel& model, const BlockLayout& layout, const SolverConfig& config,
                              const IterationObserver& observer = {});

}  // namespace divsbl
