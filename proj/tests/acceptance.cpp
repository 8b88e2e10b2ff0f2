// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.
#include <filesystem>
#include <iostream>

#include "thinfilm/acceptance.hpp"

int main(int argc, char** argv) {
  namespace acc = thinfilm::acceptance;
  acc::Options opt;
  opt.out_dir = argc > 1 ? std::filesystem::path(argv[1]) : "acceptance_out";
  opt.on_result = [](const acc::CriterionResult& r) {
    std::cout << acc::format_line(r) << '\n';
    for (const auto& note : r.notes) std::cout << "    " << note << '\n';
    std::cout.flush();
  };
  int failed = 0;
  for (const auto& r : acc::run_all(opt)) failed += r.pass() ? 0 : 1;
  std::cout << failed << " of 9 criteria failed\n";
  return failed == 0 ? 0 : 1;
}
