#include <hbt/traversal.hpp>

#include <array>
#include <memory>

namespace hbt {

namespace {

// State shared between the two halves of a promoted fork point. Both tasks
// hold it, and capturing only the pointer keeps their thunks small enough
// to avoid a separate allocation. KPBranch frames point into `s`.
struct fork_point {
  std::array<std::int64_t, 2> s = {0, 0};
  const Node* n = nullptr;
  const HeartbeatOptions* options = nullptr;
  sched::Task* join = nullptr;
  ContinuationStack outer;
};

auto heartbeat_loop(const Node* n, ContinuationStack& k, const HeartbeatOptions& options) -> void {
  // The loop never yields, so the worker's clock is worked on as a local
  // copy and written back on exit. Trips are not counted one by one: with f
  // fires they number f * H plus the drop in the clock's countdown.
  auto& worker_clock = sched::this_worker_clock();
  auto clock = worker_clock;
  auto& counters = sched::this_worker_counters();
  const auto start = clock.remaining();
  std::uint64_t fires = 0;
  ContinuationStack::cursor c(k);
  auto finish = [&] {
    c.store();
    worker_clock = clock;
    counters.loop_trips += fires * clock.period() + start - clock.remaining();
  };
  auto tick = [&] {
    if (clock.beat()) [[unlikely]] {
      fires++;
      counters.heartbeat_fires++;
      c.store();
      try_promote(k, options);
      c.load();
    }
  };
  while (true) {
    tick();
    if (n == nullptr) {
      std::int64_t sa = 0;
      while (true) {
        tick();
        if (c.back().kind() == FrameKind::KSBranch0) {
          n = c.resolve_back(sa)->bs[1];
          break;
        }
        Frame f = c.pop();
        if (f.kind() == FrameKind::KSBranch1) {
          sa = wrapping_add(wrapping_add(f.s0(), sa), f.node()->v);
        } else if (f.kind() == FrameKind::KPBranch) {
          f.results()[f.branch()] = sa;
          finish();
          sched::join(*f.join_task());
          return;
        } else {
          *f.ans() = sa;
          finish();
          return;
        }
      }
    } else {
      c.push_sbranch0(n);
      n = n->bs[0];
    }
  }
}

} // end namespace

auto try_promote(ContinuationStack& k, const HeartbeatOptions& options) -> bool {
  auto at = k.find_outermost_potential();
  if (! at) {
    return false;
  }
  const Node* n = k.at(*at).node();
  if (options.skip_empty_second_branch && n->bs[1] == nullptr) {
    return false;
  }
  if (options.on_promote) {
    options.on_promote(k, *at);
  }
  auto fp = std::make_shared<fork_point>();
  fp->n = n;
  fp->options = &options;
  auto tj = sched::new_task([fp] {
    fp->outer.push(Frame::sbranch1(wrapping_add(fp->s[0], fp->s[1]), fp->n));
    heartbeat_loop(nullptr, fp->outer, *fp->options);
  });
  fp->join = tj.get();
  fp->outer = k.split_and_replace(*at, Frame::pbranch(0, fp->s.data(), tj.get()));
  // Edge for the traversal already under way in the first branch.
  sched::add_dependency(*tj);
  auto t1 = sched::new_task([fp] {
    ContinuationStack k1(Frame::pbranch(1, fp->s.data(), fp->join));
    heartbeat_loop(fp->n->bs[1], k1, *fp->options);
  });
  sched::fork(t1, *tj);
  sched::this_worker_counters().promotions++;
  return true;
}

auto sum_heartbeat(const Node* root, sched::WorkerPool& pool, const HeartbeatOptions& options) -> SumResult {
  std::int64_t ans = 0;
  pool.run_to_completion(sched::new_task([root, &ans, &options] {
    ContinuationStack k(Frame::term(&ans));
    heartbeat_loop(root, k, options);
  }));
  return {ans};
}

} // namespace hbt
