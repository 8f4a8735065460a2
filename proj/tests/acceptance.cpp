// Runs the numbered acceptance criteria and prints one PASS/FAIL line each.
#include <iostream>

#include "invprob/cli.hpp"

int main() {
  const invprob::selftest::CliRunner runner =
      [](const std::vector<std::string>& a, std::ostream& o, std::ostream& e) {
        return invprob::cli::cli_main(a, o, e);
      };
  const auto report = invprob::selftest::run_all(runner, &std::cout);
  std::cout << (report.all_passed() ? "acceptance: all criteria passed\n"
                                    : "acceptance: FAILED\n");
  return report.all_passed() ? 0 : 1;
}
