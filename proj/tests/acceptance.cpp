// Full-size acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any criterion fails. RWRE_WORKERS sets the thread count.

#include <iostream>

#include "rwre/rwre.hpp"

int main() {
  rwre::AcceptanceContext ctx;
  ctx.workers = rwre::resolve_workers(std::nullopt);
  int failed = 0;
  rwre::run_acceptance(ctx, rwre::acceptance_ids(), [&](const rwre::CheckResult& r) {
    std::cout << rwre::format_result_line(r) << "  (" << std::fixed << std::setprecision(1) << r.seconds << " s)"
              << std::defaultfloat << std::endl;
    failed += !r.pass;
  });
  std::cout << (failed ? std::to_string(failed) + " of 14 criteria failed" : "all 14 criteria passed") << std::endl;
  return failed ? 1 : 0;
}
