#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <hbt/kont.hpp>
#include <hbt/scheduler.hpp>
#include <hbt/tree.hpp>

namespace hbt {

struct SumResult {
  std::int64_t total = 0;
  friend auto operator==(const SumResult&, const SumResult&) -> bool = default;
};

// One entry per rung of the refactoring ladder, from plain recursion to the
// heartbeat traversal.
enum class VariantId {
  V0_Recursive,
  V1_Fork2Join,
  V2_ParallelDefunc,
  V3_SerialCPS,
  V4_SerialDefunc,
  V5_SerialIterative,
  V6_Heartbeat,
};

inline constexpr VariantId all_variants[] = {
  VariantId::V0_Recursive, VariantId::V1_Fork2Join, VariantId::V2_ParallelDefunc,
  VariantId::V3_SerialCPS, VariantId::V4_SerialDefunc, VariantId::V5_SerialIterative,
  VariantId::V6_Heartbeat,
};

auto is_parallel(VariantId id) -> bool;
auto short_name(VariantId id) -> std::string_view;  // "V0" .. "V6"
auto long_name(VariantId id) -> std::string_view;   // "recursive", ...
// Accepts either form, case-insensitive for the short one.
auto parse_variant(std::string_view name) -> VariantId;

/*---------------------------------------------------------------------*/
/* Serial variants */

// Direct recursion. Call depth equals tree height.
auto sum_recursive(const Node* root) -> SumResult;

// Closure continuations. Without guaranteed tail calls the call stack grows
// with every step, i.e. with node count.
auto sum_serial_cps(const Node* root) -> SumResult;

// Defunctionalized records linked by explicit tail pointers, with mutually
// recursive sum/apply. Call depth grows with node count, as for CPS.
auto sum_serial_defunc(const Node* root) -> SumResult;

// Stack machine over a SerialStack; constant call-stack depth.
auto sum_serial_iterative(const Node* root) -> SumResult;

/*---------------------------------------------------------------------*/
/* Parallel variants (run on `pool`) */

// CPS closures over fork2join: one join task per node.
auto sum_fork2join(const Node* root, sched::WorkerPool& pool) -> SumResult;

// Parallel traversal with KTerm/KPBranch records: two child tasks and one
// join task per node.
auto sum_parallel_defunc(const Node* root, sched::WorkerPool& pool) -> SumResult;

using PromotionObserver = std::function<void(const ContinuationStack&, Position)>;

struct HeartbeatOptions {
  // Called on the promoting worker with the stack and the chosen position,
  // before the stack is modified.
  PromotionObserver on_promote;
  // Decline to promote when the outermost latent branch has an empty second
  // child. Off by default.
  bool skip_empty_second_branch = false;

  static auto defaults() -> const HeartbeatOptions& {
    static const HeartbeatOptions instance;
    return instance;
  }
};

// Serial stack machine that, on every heartbeat of the worker's clock,
// promotes the outermost latent branch into a task. H is the pool's
// heartbeat period.
auto sum_heartbeat(const Node* root, sched::WorkerPool& pool,
                   const HeartbeatOptions& options = HeartbeatOptions::defaults()) -> SumResult;

/// Turns the outermost KSBranch0 frame of `k` into a fork: the frame becomes
/// KPBranch{0}, a task for the second branch is forked with base KPBranch{1},
/// and the frames outer to the split move into the join task, which resumes
/// them with KSBranch1{s[0] + s[1]}. No-op without a KSBranch0. Must run on
/// a worker; `options` must outlive the tasks it spawns. Returns whether a
/// promotion happened.
auto try_promote(ContinuationStack& k, const HeartbeatOptions& options = HeartbeatOptions::defaults()) -> bool;

/*---------------------------------------------------------------------*/
/* Dispatch */

// Height above which the variants that nest calls per tree level refuse an
// input (V0, V1, V2).
inline constexpr std::uint64_t max_recursive_height = 100'000;

// Node count above which the variants whose call depth grows with every step
// refuse an input (V3, V4).
inline constexpr std::uint64_t max_cps_nodes = 500'000;

// Stack given to the thread that runs serial recursive variants.
inline constexpr std::size_t recursive_stack_bytes = std::size_t(1) << 30;

class incompatible_input : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Reason the variant must not run on `tree`, or nothing if it may.
auto refusal_reason(VariantId id, const Tree& tree) -> std::optional<std::string>;

// Runs one variant on `tree`; `pool` is required for parallel variants.
// Serial variants run on the calling thread. Does not check compatibility.
auto run_on(VariantId id, const Tree& tree, sched::WorkerPool* pool) -> SumResult;

struct VariantRun {
  SumResult sum;
  sched::Counters counters;
};

struct RunOptions {
  unsigned workers = 1;
  std::uint64_t heartbeat = 512;
  std::uint64_t seed = 0;
};

// Checks compatibility (throwing incompatible_input), then runs the variant.
// Parallel variants get a fresh pool; V0, V3 and V4 run on a thread with a
// recursive_stack_bytes stack.
auto run_variant(VariantId id, const Tree& tree, const RunOptions& options) -> VariantRun;

// Same, building the tree from `spec` first.
auto run_variant(VariantId id, const TreeSpec& spec, unsigned workers, std::uint64_t heartbeat) -> VariantRun;

} // namespace hbt
