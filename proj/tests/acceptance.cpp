// Acceptance suite: one PASS/FAIL line per criterion.
//
//   hbt-acceptance            run all criteria
//   hbt-acceptance --only 3   run one
//
// Exit status is 0 only if every criterion that ran passed.

#include <atomic>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <hbt/bench.hpp>
#include <hbt/stack_thread.hpp>
#include <hbt/traversal.hpp>

#include "oracles.hpp"

using namespace hbt;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

auto fmt(const char* f, auto... args) -> std::string {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr unsigned reps = 5;
constexpr unsigned warmup = 1;

auto median_of(VariantId id, const Tree& tree, std::int64_t expected, unsigned workers, std::uint64_t h)
  -> bench::Measurement {
  return bench::measure(id, tree, expected,
                        {.workers = workers, .heartbeat = h, .repetitions = reps, .warmup = warmup});
}

/*---------------------------------------------------------------------*/

auto oracle_equivalence() -> Verdict {
  constexpr std::uint64_t trees = 500;
  constexpr std::uint64_t seeds = 20;
  const unsigned worker_counts[] = {1, 2, 4, 8};
  const std::uint64_t periods[] = {1, 16, 256};

  std::map<std::pair<std::uint64_t, unsigned>, std::unique_ptr<sched::WorkerPool>> pools;
  auto pool_for = [&] (std::uint64_t seed, unsigned workers) -> sched::WorkerPool& {
    auto& p = pools[{seed, workers}];
    if (! p) {
      p = std::make_unique<sched::WorkerPool>(
        sched::PoolOptions{.workers = workers, .heartbeat = periods[seed % 3], .seed = seed});
    }
    return *p;
  };

  std::mt19937_64 rng(2024);
  std::uint64_t runs = 0, mismatches = 0;
  std::string first_failure;
  for (std::uint64_t i = 0; i < trees; i++) {
    // Tree 0 is empty; the rest cycle kinds and value modes, up to 10^4 nodes.
    Tree t = i == 0 ? Tree::empty() : generate(oracle::random_spec(i, 10'000, rng));
    auto expected = oracle::bfs_sum(t.root());
    auto record = [&] (VariantId id, unsigned workers, std::int64_t got) {
      runs++;
      if (got != expected) {
        mismatches++;
        if (first_failure.empty()) {
          first_failure = fmt("%s on tree %llu with %u workers: %lld != %lld", std::string(short_name(id)).c_str(),
                              (unsigned long long)i, workers, (long long)got, (long long)expected);
        }
      }
    };
    auto serial = run_with_stack(recursive_stack_bytes, [&] {
      return std::array{sum_recursive(t.root()).total, sum_serial_cps(t.root()).total,
                        sum_serial_defunc(t.root()).total, sum_serial_iterative(t.root()).total};
    });
    record(VariantId::V0_Recursive, 1, serial[0]);
    record(VariantId::V3_SerialCPS, 1, serial[1]);
    record(VariantId::V4_SerialDefunc, 1, serial[2]);
    record(VariantId::V5_SerialIterative, 1, serial[3]);
    for (auto w : worker_counts) {
      auto& pool = pool_for(i % seeds, w);
      for (auto id : {VariantId::V1_Fork2Join, VariantId::V2_ParallelDefunc, VariantId::V6_Heartbeat}) {
        record(id, w, run_on(id, t, &pool).total);
      }
    }
  }
  Verdict v;
  v.pass = mismatches == 0;
  v.detail = fmt("%llu trees, %llu runs, %llu mismatches", (unsigned long long)trees,
                 (unsigned long long)runs, (unsigned long long)mismatches);
  if (! first_failure.empty()) {
    v.detail += "; first: " + first_failure;
  }
  return v;
}

/*---------------------------------------------------------------------*/

auto stack_safety() -> Verdict {
  constexpr std::uint64_t n = 10'000'000;
  constexpr std::size_t small_stack = std::size_t(1) << 20;
  auto chain = generate({.kind = TreeKind::Chain, .count = n});
  auto expected = static_cast<std::int64_t>(n);
  std::vector<std::string> problems;

  auto v5 = run_with_stack(small_stack, [&] { return sum_serial_iterative(chain.root()).total; });
  if (v5 != expected) {
    problems.push_back(fmt("V5 returned %lld", (long long)v5));
  }
  for (unsigned workers : {1u, 4u}) {
    sched::WorkerPool pool({.workers = workers, .heartbeat = 512, .stack_bytes = small_stack});
    auto v6 = sum_heartbeat(chain.root(), pool).total;
    if (v6 != expected) {
      problems.push_back(fmt("V6 on %u workers returned %lld", workers, (long long)v6));
    }
  }
  bool refused = false;
  try {
    run_variant(VariantId::V0_Recursive, chain, {});
  } catch (const incompatible_input&) {
    refused = true;
  }
  if (! refused) {
    problems.push_back("V0 was not refused");
  }
  Verdict v;
  v.pass = problems.empty();
  v.detail = "10^7-node chain, 1 MiB stacks: V5 ok, V6 ok on 1 and 4 workers, V0 refused";
  if (! v.pass) {
    v.detail = problems.front();
  }
  return v;
}

/*---------------------------------------------------------------------*/

struct DeskInput {
  TreeSpec spec;
  Tree tree;
  std::int64_t expected = 0;
  std::uint64_t heartbeat = 0;
  bool calibrated = false;
};

auto desk(TreeKind kind) -> DeskInput {
  DeskInput d;
  d.spec = bench::desk_spec(kind);
  d.tree = generate(d.spec);
  d.expected = bench::expected_checksum(d.tree, d.spec);
  auto c = bench::calibrate_H(d.tree, d.expected, 0.10, reps, warmup);
  d.heartbeat = c.heartbeat;
  d.calibrated = c.satisfied;
  return d;
}

auto work_efficiency() -> Verdict {
  auto d = desk(TreeKind::Perfect);
  auto v5 = median_of(VariantId::V5_SerialIterative, d.tree, d.expected, 1, d.heartbeat);
  auto v6 = median_of(VariantId::V6_Heartbeat, d.tree, d.expected, 1, d.heartbeat);
  auto ratio = v6.median_seconds / v5.median_seconds;
  return {ratio <= 1.3, fmt("perfect h=22, H=%llu%s: V6@1 %.4fs / V5 %.4fs = %.3f (bound 1.3)",
                            (unsigned long long)d.heartbeat, d.calibrated ? "" : " (sweep maximum)",
                            v6.median_seconds, v5.median_seconds, ratio)};
}

auto speedup(TreeKind kind, const char* label, double bound) -> Verdict {
  auto d = desk(kind);
  auto v5 = median_of(VariantId::V5_SerialIterative, d.tree, d.expected, 1, d.heartbeat);
  auto v6 = median_of(VariantId::V6_Heartbeat, d.tree, d.expected, 4, d.heartbeat);
  auto s = v5.median_seconds / v6.median_seconds;
  return {s >= bound, fmt("%s, H=%llu, %u hardware threads: V5 %.4fs / V6@4 %.4fs = %.2fx (bound %.1fx)", label,
                          (unsigned long long)d.heartbeat, std::thread::hardware_concurrency(),
                          v5.median_seconds, v6.median_seconds, s, bound)};
}

auto nil_parallelism() -> Verdict {
  auto d = desk(TreeKind::Chain);
  auto v5 = median_of(VariantId::V5_SerialIterative, d.tree, d.expected, 1, d.heartbeat);
  auto v6 = median_of(VariantId::V6_Heartbeat, d.tree, d.expected, 4, d.heartbeat);
  auto ratio = v6.median_seconds / v5.median_seconds;
  return {ratio <= 4.0, fmt("10^7 chain, H=%llu: V6@4 %.4fs / V5 %.4fs = %.2f (bound 4.0)",
                            (unsigned long long)d.heartbeat, v6.median_seconds, v5.median_seconds, ratio)};
}

/*---------------------------------------------------------------------*/

auto granularity() -> Verdict {
  std::uint64_t runs = 0, violations = 0;
  std::string first;
  for (auto kind : {TreeKind::Perfect, TreeKind::Random, TreeKind::Chains, TreeKind::Chain}) {
    auto spec = bench::desk_spec(kind);
    auto tree = generate(spec);
    auto expected = bench::expected_checksum(tree, spec);
    for (std::uint64_t h : {64, 512, 4096}) {
      for (unsigned w : {1u, 4u}) {
        auto m = bench::measure(VariantId::V6_Heartbeat, tree, expected,
                                {.workers = w, .heartbeat = h, .repetitions = 3, .warmup = 0});
        for (auto& c : m.counters) {
          runs++;
          auto bound = (c.loop_trips + h - 1) / h;
          if (c.promotions > bound) {
            violations++;
            if (first.empty()) {
              first = fmt("%s H=%llu w=%u: %llu promotions > %llu", std::string(to_string(kind)).c_str(),
                          (unsigned long long)h, w, (unsigned long long)c.promotions, (unsigned long long)bound);
            }
          }
        }
      }
    }
  }

  auto spec = bench::desk_spec(TreeKind::Perfect);
  auto tree = generate(spec);
  auto expected = bench::expected_checksum(tree, spec);
  const std::uint64_t never = std::uint64_t(1) << 30;
  auto v5 = median_of(VariantId::V5_SerialIterative, tree, expected, 1, never);
  auto v6 = median_of(VariantId::V6_Heartbeat, tree, expected, 1, never);
  auto v6_four = bench::measure(VariantId::V6_Heartbeat, tree, expected,
                                {.workers = 4, .heartbeat = never, .repetitions = 3, .warmup = 0});
  std::uint64_t quiet_promotions = 0;
  for (auto& c : v6.counters) quiet_promotions += c.promotions;
  for (auto& c : v6_four.counters) quiet_promotions += c.promotions;
  auto ratio = v6.median_seconds / v5.median_seconds;

  Verdict v;
  v.pass = violations == 0 && quiet_promotions == 0 && ratio <= 1.2;
  v.detail = fmt("%llu runs, %llu bound violations; H=2^30: %llu promotions, V6@1/V5 = %.3f (bound 1.2)",
                 (unsigned long long)runs, (unsigned long long)violations,
                 (unsigned long long)quiet_promotions, ratio);
  if (! first.empty()) {
    v.detail += "; first: " + first;
  }
  return v;
}

/*---------------------------------------------------------------------*/

auto kont_suite() -> Verdict {
  std::mt19937_64 rng(77);
  std::vector<Node> nodes(64);
  std::int64_t cell = 0, slots[2] = {0, 0};
  std::uint64_t checks = 0;
  std::vector<std::string> problems;
  auto fail = [&] (std::string what) {
    if (problems.empty()) problems.push_back(std::move(what));
  };
  auto node = [&] { return &nodes[rng() % nodes.size()]; };

  // Random push/pop/split sequences against a full scan.
  std::uint64_t splits = 0;
  for (int seq = 0; seq < 10'000 && problems.empty(); seq++) {
    ContinuationStack k(Frame::term(&cell));
    auto ops = 1 + rng() % 60;
    for (std::uint64_t op = 0; op < ops; op++) {
      auto r = rng() % 10;
      if (k.empty()) {
        k.push(Frame::pbranch(1, slots, nullptr));
      } else if (r < 6) {
        k.push(rng() % 2 ? Frame::sbranch0(node()) : Frame::sbranch1(static_cast<std::int64_t>(op), node()));
      } else if (r < 9) {
        k.pop();
      } else {
        auto pots = oracle::scan_potentials(k);
        if (! pots.empty()) {
          auto at = pots[rng() % pots.size()];
          auto before = k.size();
          auto outer = k.split_and_replace(at, Frame::pbranch(0, slots, nullptr));
          splits++;
          if (outer.size() + k.size() != before) {
            fail(fmt("split lost frames: %zu + %zu != %zu", outer.size(), k.size(), before));
          }
          auto scan = oracle::scan_potentials(outer);
          if (! std::equal(scan.begin(), scan.end(), outer.potentials().begin(), outer.potentials().end())) {
            fail("outer part potentials differ from a full scan");
          }
        }
      }
      auto scan = oracle::scan_potentials(k);
      checks++;
      if (! std::equal(scan.begin(), scan.end(), k.potentials().begin(), k.potentials().end())) {
        fail(fmt("potentials differ from a full scan in sequence %d", seq));
      }
    }
  }

  // find_outermost_potential against a linear scan.
  for (int round = 0; round < 1000; round++) {
    ContinuationStack k(Frame::term(&cell));
    auto n = rng() % 300;
    auto rate = 1 + rng() % 30;
    for (std::uint64_t i = 0; i < n; i++) {
      k.push(rng() % rate == 0 ? Frame::sbranch0(node()) : Frame::sbranch1(0, node()));
    }
    for (auto pops = rng() % (n + 1); pops > 0; pops--) {
      k.pop();
    }
    checks++;
    if (k.find_outermost_potential() != oracle::scan_outermost(k)) {
      fail(fmt("outermost potential differs from a linear scan on stack %d", round));
    }
  }

  Verdict v;
  v.pass = problems.empty();
  v.detail = fmt("10^4 sequences (%llu splits), 10^3 stacks, %llu checks",
                 (unsigned long long)splits, (unsigned long long)checks);
  if (! v.pass) {
    v.detail += "; " + problems.front();
  }
  return v;
}

/*---------------------------------------------------------------------*/

auto scheduler_suite() -> Verdict {
  std::vector<std::string> problems;

  // Exactly-once over 10^4 tasks.
  for (unsigned workers : {1u, 4u, 8u}) {
    sched::WorkerPool pool({.workers = workers, .seed = workers});
    constexpr int n = 10'000;
    std::vector<std::atomic<int>> runs(n);
    pool.run_to_completion(sched::new_task([&] {
      auto j = sched::new_task([] { });
      sched::add_dependency(*j);
      for (int i = 0; i < n; i++) {
        sched::fork(sched::new_task([&runs, i, jp = j.get()] {
          runs[i]++;
          sched::join(*jp);
        }), *j);
      }
      sched::join(*j);
    }));
    for (int i = 0; i < n; i++) {
      if (runs[i] != 1) {
        problems.push_back(fmt("task %d ran %d times on %u workers", i, runs[i].load(), workers));
        break;
      }
    }
  }

  // Sentinel visibility over 10^3 randomized fan-ins.
  std::mt19937_64 rng(5);
  sched::WorkerPool pool({.workers = 4, .seed = 9});
  int bad_fanins = 0;
  for (int round = 0; round < 1000; round++) {
    auto n = 1 + rng() % 48;
    auto sentinel = static_cast<std::int64_t>(rng());
    std::vector<std::int64_t> cells(n, 0);
    bool seen_all = false;
    pool.run_to_completion(sched::new_task([&] {
      auto j = sched::new_task([&] {
        seen_all = true;
        for (std::size_t i = 0; i < n; i++) {
          seen_all &= cells[i] == sentinel + static_cast<std::int64_t>(i);
        }
      });
      sched::add_dependency(*j);
      for (std::size_t i = 0; i < n; i++) {
        sched::fork(sched::new_task([&cells, i, sentinel, jp = j.get()] {
          cells[i] = sentinel + static_cast<std::int64_t>(i);
          sched::join(*jp);
        }), *j);
      }
      sched::join(*j);
    }));
    bad_fanins += ! seen_all;
  }
  if (bad_fanins) {
    problems.push_back(fmt("%d fan-ins missed a joiner's write", bad_fanins));
  }

  // Heartbeat periodicity, directly and on a worker.
  for (std::uint64_t h : {1, 3, 64}) {
    constexpr std::uint64_t calls = 100'000;
    sched::HeartbeatClock clock(h);
    std::uint64_t fires = 0;
    bool in_phase = true;
    for (std::uint64_t i = 1; i <= calls; i++) {
      bool beat = clock.beat();
      fires += beat;
      in_phase &= beat == (i % h == 0);
    }
    std::uint64_t worker_fires = 0;
    sched::WorkerPool p({.workers = 1, .heartbeat = h});
    p.run_to_completion(sched::new_task([&] {
      for (std::uint64_t i = 0; i < calls; i++) worker_fires += sched::this_worker_clock().beat();
    }));
    if (fires != calls / h || worker_fires != calls / h || ! in_phase) {
      problems.push_back(fmt("H=%llu: %llu fires (worker %llu), expected %llu", (unsigned long long)h,
                             (unsigned long long)fires, (unsigned long long)worker_fires,
                             (unsigned long long)(calls / h)));
    }
  }

  Verdict v;
  v.pass = problems.empty();
  v.detail = "10^4-task tally on 1/4/8 workers, 10^3 fan-ins, H in {1,3,64}";
  if (! v.pass) {
    v.detail = problems.front();
  }
  return v;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

} // end namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
    {1, "oracle equivalence", oracle_equivalence},
    {2, "stack safety", stack_safety},
    {3, "work efficiency", work_efficiency},
    {4, "speedup, abundant parallelism", [] { return speedup(TreeKind::Perfect, "perfect h=22", 2.0); }},
    {5, "speedup, scarce parallelism", [] { return speedup(TreeKind::Chains, "chains h=12 30x10^5", 1.2); }},
    {6, "bounded slowdown, nil parallelism", nil_parallelism},
    {7, "granularity control", granularity},
    {8, "continuation stack suite", kont_suite},
    {9, "scheduler suite", scheduler_suite},
  };

  bool all = true;
  for (auto& c : criteria) {
    if (only != 0 && c.id != only) {
      continue;
    }
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    all &= v.pass;
    std::printf("%s  %d. %s: %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
