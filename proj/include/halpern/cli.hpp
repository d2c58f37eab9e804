#pragma once

// Command-line harness: experiment configs, figure jobs and verification
// suites. Everything the `halpern` binary does is reachable from here so the
// tests can drive it without spawning processes.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "halpern/engine.hpp"
#include "halpern/operators.hpp"
#include "halpern/schedules.hpp"

namespace halpern::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertion = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; `#` starts a comment. Malformed lines throw UsageError.
KeyValues parse_key_values(std::string_view text);
KeyValues load_config_file(const std::filesystem::path& path);

struct ExperimentConfig {
  std::string op = "rotation"; // rotation | cyclic | goebel | l1shift
  double rho = 0.98;
  double theta = 1.5707963267948966;
  std::size_t dim = 2;
  std::size_t grid = 101;
  NormKind norm = NormKind::LInf;
  ScheduleKind schedule = ScheduleKind::MOpt;
  std::vector<double> betas; // fixed schedules, beta_1..beta_n
  std::optional<Vec> x0;     // literal start; otherwise seeded U[-1,1]
  std::uint64_t seed = 42;
  std::size_t n_max = 100;
  std::string trace_csv;
  std::string bounds_csv;
  std::string svg;
};

ExperimentConfig make_config(const KeyValues& kv);
OperatorSpec make_operator(const ExperimentConfig& cfg);
Vec make_x0(const ExperimentConfig& cfg, const OperatorSpec& op);

struct RunOutput {
  IterationTrace trace;
  std::vector<std::string> header; // metadata lines, written as `# ...`
  std::optional<std::vector<ScheduleRow>> bound_rows;
  double scale = 0.0;
  std::string scale_rule;
  std::size_t violations = 0;
};

RunOutput run_experiment(const ExperimentConfig& cfg);
std::string trace_csv_text(const RunOutput& run);
std::string bounds_csv_text(const RunOutput& run);
int cmd_run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

/// `n,beta,bound` (or `n,beta,frozen,l_star` for the affine kind).
std::string schedule_csv_text(ScheduleKind kind, Rho rho, std::size_t n_max, const std::vector<double>& betas = {});
int cmd_schedule(ScheduleKind kind, Rho rho, std::size_t n_max, const std::string& out, std::ostream& stdout_stream,
                 const std::vector<double>& betas = {});

std::vector<std::string> figure_ids();

struct FigureOutput {
  std::string id;
  std::string csv;
  std::string svg;
};

FigureOutput make_figure(std::string_view id, const KeyValues& overrides = {});
int cmd_figure(const std::vector<std::string>& ids, const std::filesystem::path& out_dir, const KeyValues& overrides,
               unsigned jobs, bool svg, std::ostream& err);

struct VerifyOptions {
  std::size_t n = 10;
  std::optional<double> rho;
  std::size_t budget = 5;
  std::uint64_t seed = 1;
};

struct VerifyRecord {
  std::string suite;
  std::string check;
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = true;
};

std::vector<std::string> suite_names();
std::vector<VerifyRecord> run_suite(std::string_view suite, const VerifyOptions& opts);
std::string to_jsonl(const std::vector<VerifyRecord>& records);
int cmd_verify(std::string_view suite, const VerifyOptions& opts, const std::string& out, unsigned jobs,
               std::ostream& stdout_stream, std::ostream& err);

/// Entry point of the `halpern` binary.
int main_entry(int argc, char** argv);

} // namespace halpern::cli
