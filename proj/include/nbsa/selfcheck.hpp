#pragma once

#include <string>
#include <vector>

namespace nbsa {
namespace selfcheck {

struct SuiteResult {
  std::string name;
  int checks = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

// Runs every invariant suite: gradient oracles, degenerate equivalences,
// the skew/naive identity, cost-model audits, metric oracles, generator and
// backbone checks. `inject` is a mutation fixture hook ("" = none;
// "neg_logit_scale" flips the sign of the attention logit scaling inside the
// gradient-check forward, which a healthy suite must detect and report).
std::vector<SuiteResult> run_all(const std::string& inject = "");

// Pretty-prints one line per suite with counts; returns true when all pass.
bool report(const std::vector<SuiteResult>& results, std::ostream& os);

}  // namespace selfcheck
}  // namespace nbsa
