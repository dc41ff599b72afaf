#pragma once

// Single entry point for every role: proxy, backend, agent, loadgen,
// report, status and the demo scenarios.

#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace isoha::cli {

enum class Scenario { cpu_failover, iso_failover, baseline_defect };

std::optional<Scenario> parse_scenario(std::string_view name);  // cpu | iso | baseline
std::string to_string(Scenario s);

// Runs the scenario against real local ports and writes a transcript.
// Returns true when every check held.
bool run_demo(Scenario s, std::ostream& transcript);

// 0 ok, 1 runtime failure, 2 usage error. Long-running roles block until
// SIGINT or SIGTERM.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace isoha::cli
