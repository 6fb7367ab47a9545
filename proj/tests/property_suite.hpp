#pragma once

// Deterministic property checks shared by the unit tests and the acceptance
// runner.

#include <string>
#include <vector>

namespace lfoica::props {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kReplayTolerance = 1e-10;
inline constexpr double kAlignTolerance = 1e-12;

std::vector<Check> gradient_checks();
std::vector<Check> mmd_checks();
std::vector<Check> prox_checks();
std::vector<Check> block_identity_checks();
std::vector<Check> replay_checks();
std::vector<Check> align_checks();
std::vector<Check> determinism_checks();

// All of the above, in order.
std::vector<Check> run_all();

// k = 1 reductions: conditional training against a least-squares VAR fit,
// and the divided rollout against a direct VAR(1) rollout.
inline constexpr double kLeastSquaresTolerance = 0.1;
std::vector<Check> k1_checks();

}  // namespace lfoica::props
