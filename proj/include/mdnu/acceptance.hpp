#pragma once

// The acceptance battery: eleven end-to-end checks with fixed tolerances,
// shared by the acceptance test binary and `mdnu suite`.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mdnu::acceptance {

inline constexpr int kNumCriteria = 11;

struct Options {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::ostream* log = nullptr;  // progress notes; nullptr keeps quiet
  std::string artifact_dir;     // grids, metrics and episode tables land here when set
};

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;  // measured values next to their limits
  double seconds = 0.0;
};

/// Runs the requested criteria (all when `ids` is empty) in ascending order.
/// Criteria 9 and 10 share one trained driving stack. A criterion that
/// throws is reported as failed with the message in `detail`.
std::vector<CriterionResult> run(const Options& options, std::vector<int> ids = {});

/// "PASS  1 <title>: <detail> [1.2 s]"
std::string format_line(const CriterionResult& r);

}  // namespace mdnu::acceptance
