#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <hbt/scheduler.hpp>
#include <hbt/traversal.hpp>
#include <hbt/tree.hpp>

namespace hbt::bench {

enum class OutputFormat { Human, CSV, JSON };

auto parse_output_format(std::string_view name) -> OutputFormat;

struct BenchConfig {
  // Row label; the tree kind's name when empty.
  std::string input;
  TreeSpec spec;
  std::vector<VariantId> variants = {VariantId::V5_SerialIterative, VariantId::V6_Heartbeat};
  std::vector<unsigned> workers = {1};
  // Heartbeat period; calibrated against target_overhead when absent.
  std::optional<std::uint64_t> heartbeat = 512;
  double target_overhead = 0.10;
  unsigned repetitions = 5;
  unsigned warmup = 1;
  std::uint64_t scheduler_seed = 0;
  // Receives non-fatal warnings (oversubscription, failed calibration).
  std::function<void(std::string_view)> warn;
};

struct BenchResult {
  std::string input;
  VariantId variant = VariantId::V5_SerialIterative;
  unsigned workers = 1;
  std::uint64_t heartbeat = 0;
  // Absent for a refused (variant, input) pair.
  std::optional<double> median_seconds;
  std::optional<double> speedup_vs_v5;
  std::optional<std::int64_t> checksum;
  double baseline_seconds = 0;
  sched::Counters counters;                 // last timed run
  std::vector<sched::Counters> run_counters; // every timed run
  std::string note;

  auto refused() const -> bool { return ! median_seconds.has_value(); }
};

class checksum_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class calibration_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Input sizes used when the command line names only the input kind.
auto desk_spec(TreeKind kind) -> TreeSpec;

// Node count for AllOnes trees, the worklist oracle otherwise.
auto expected_checksum(const Tree& tree, const TreeSpec& spec) -> std::int64_t;

struct Measurement {
  double median_seconds = 0;
  std::vector<double> seconds;
  std::vector<sched::Counters> counters;
  std::int64_t checksum = 0;
};

struct MeasureOptions {
  unsigned workers = 1;
  std::uint64_t heartbeat = 512;
  unsigned repetitions = 5;
  unsigned warmup = 1;
  std::uint64_t scheduler_seed = 0;
};

/// Times `id` on `tree` (traversal only, monotonic clock) and returns the
/// median. Every run's answer is checked against `expected` and a mismatch
/// throws checksum_error. Does not check compatibility.
auto measure(VariantId id, const Tree& tree, std::int64_t expected, const MeasureOptions& options) -> Measurement;

/*---------------------------------------------------------------------*/
/* Heartbeat calibration */

// Candidate periods, smallest first: 16, 32, ..., 4096.
auto heartbeat_sweep() -> std::vector<std::uint64_t>;

struct CalibrationProfile {
  double serial_seconds = 0;
  std::vector<std::pair<std::uint64_t, double>> heartbeat_seconds; // single-worker V6
};

struct Calibration {
  std::uint64_t heartbeat = 0;
  bool satisfied = false;  // false: no candidate met the target, sweep maximum returned
  CalibrationProfile profile;
};

// Below this V5 runtime the timings are too noisy to calibrate on.
inline constexpr double calibration_floor_seconds = 0.010;

auto measure_profile(const Tree& tree, std::int64_t expected, unsigned repetitions, unsigned warmup) -> CalibrationProfile;

// Smallest H whose V6 time is within (1 + target_overhead) of V5.
auto select_heartbeat(const CalibrationProfile& profile, double target_overhead) -> Calibration;

auto calibrate_H(const Tree& tree, std::int64_t expected, double target_overhead,
                 unsigned repetitions = 5, unsigned warmup = 1) -> Calibration;
auto calibrate_H(const TreeSpec& spec, double target_overhead, unsigned repetitions = 5) -> Calibration;

/*---------------------------------------------------------------------*/
/* Harness */

/// Runs every (variant, workers) cell of `cfg`. Serial variants get one row
/// with workers = 1; refused pairs get an n/a row. The V5 row, when asked
/// for, is the baseline measurement itself.
auto run_bench(const BenchConfig& cfg) -> std::vector<BenchResult>;

auto emit(std::span<const BenchResult> results, OutputFormat format) -> std::string;

// Reads back the CSV form. Counters beyond the CSV columns come back zero.
auto parse_csv(std::string_view text) -> std::vector<BenchResult>;

inline constexpr std::string_view csv_header =
  "input,variant,workers,H,median_seconds,speedup_vs_v5,tasks_created,promotions,steals,checksum";

} // namespace hbt::bench
