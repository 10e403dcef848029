#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pcta/backprop.hpp"

namespace pcta {

// Central-difference verification of every adjoint in the tensor core plus
// both engines' weight gradients. Step 1e-5, relative tolerance 1e-6 in
// 64-bit; test points are generated away from ReLU/maxpool kinks.
inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-6;

struct FdCheck {
  std::string name;
  double worst_rel_error = 0.0;
  std::size_t coords_checked = 0;
  bool passed = false;
};

/// Mixed relative/absolute discrepancy metric used by all checks.
double fd_rel_error(double analytic, double fd);

/// Compares an analytic gradient vector against finite-difference values.
FdCheck check_against_fd(const std::string& name, const std::vector<double>& analytic,
                         const std::vector<double>& fd);

std::vector<FdCheck> finite_difference_suite(std::uint64_t seed);

struct GradcheckReport {
  std::vector<FdCheck> fd_checks;
  EquivalenceReport linear_fixture;
  EquivalenceReport relu_fixture;
  bool all_passed = false;
};

GradcheckReport run_gradcheck(std::uint64_t seed);
void print_gradcheck(const GradcheckReport& report, std::ostream& out);

}  // namespace pcta
