#include <hbt/scheduler.hpp>

#include <thread>

#include <hbt/chase_lev.hpp>
#include <hbt/stack_thread.hpp>

namespace hbt::sched {

struct Worker {
  Worker(WorkerPool& pool, unsigned id, const PoolOptions& options)
    : pool(pool), id(id), clock(options.heartbeat), rng(seed_rng(options.seed, id)) { }

  static auto seed_rng(std::uint64_t seed, unsigned id) -> std::uint64_t {
    // splitmix64 step; xorshift must not start from zero
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z == 0 ? 1 : z;
  }

  auto next_random() -> std::uint64_t {
    rng ^= rng >> 12;
    rng ^= rng << 25;
    rng ^= rng >> 27;
    return rng * 2685821657736338717ull;
  }

  WorkerPool& pool;
  unsigned id;
  ChaseLevDeque<Task*> deque;
  HeartbeatClock clock;
  Counters counters;
  std::uint64_t rng;
  std::unique_ptr<StackThread> thread;
};

namespace {

thread_local Worker* current = nullptr;

thread_local Counters scratch_counters;

// Failed find_work rounds (each followed by a yield) before a worker parks.
constexpr int spin_rounds = 64;

auto require_worker(const char* what) -> Worker& {
  expects(current != nullptr, what);
  return *current;
}

} // end namespace

/*---------------------------------------------------------------------*/
/* Task primitives */

auto new_task(thunk f) -> TaskRef {
  if (current != nullptr) {
    current->counters.tasks_created++;
  }
  return TaskRef(new Task(std::move(f)));
}

auto add_dependency(Task& k) -> void {
  Worker& w = require_worker("add_dependency outside a worker");
  expects(k.state() == TaskState::Created, "edge onto a task that was already scheduled");
  k.retain();
  if (k.pending_.fetch_add(1, std::memory_order_acq_rel) == 0) {
    w.pool.blocked_.fetch_add(1, std::memory_order_relaxed);
  }
}

auto fork(const TaskRef& c, Task& k) -> void {
  Worker& w = require_worker("fork outside a worker");
  expects(static_cast<bool>(c), "fork of a null task");
  expects(k.state() == TaskState::Created, "fork onto a join task that was already scheduled");
  auto expected = TaskState::Created;
  expects(c->state_.compare_exchange_strong(expected, TaskState::Ready, std::memory_order_acq_rel),
          "fork of a task that is not Created");
  add_dependency(k);
  w.pool.make_ready(w, c.get());
}

auto join(Task& j) -> void {
  Worker& w = require_worker("join outside a worker");
  auto old = j.pending_.fetch_sub(1, std::memory_order_acq_rel);
  if (old <= 0) {
    j.pending_.fetch_add(1, std::memory_order_relaxed);
    throw contract_violation("join on a task with no pending edges");
  }
  w.counters.joins++;
  if (old == 1) {
    w.pool.blocked_.fetch_sub(1, std::memory_order_relaxed);
    j.state_.store(TaskState::Ready, std::memory_order_release);
    w.pool.make_ready(w, &j);
  }
  j.release();
}

auto fork2join(std::function<void(Task&)> f0, std::function<void(Task&)> f1, thunk k) -> void {
  auto tj = new_task(std::move(k));
  // Hold tj while forking so a fast first branch cannot release it early.
  add_dependency(*tj);
  for (auto* f : {&f0, &f1}) {
    auto t = new_task([body = std::move(*f), j = tj.get()] { body(*j); });
    fork(t, *tj);
  }
  join(*tj);
}

/*---------------------------------------------------------------------*/
/* Worker pool */

WorkerPool::WorkerPool(PoolOptions options) : options_(options) {
  if (options_.workers == 0) {
    throw std::invalid_argument("worker pool needs at least one worker");
  }
  if (options_.heartbeat == 0) {
    throw std::invalid_argument("heartbeat period must be >= 1");
  }
  workers_.reserve(options_.workers);
  for (unsigned i = 0; i < options_.workers; i++) {
    workers_.push_back(std::make_unique<Worker>(*this, i, options_));
  }
  for (auto& w : workers_) {
    Worker* self = w.get();
    w->thread = std::make_unique<StackThread>(options_.stack_bytes, [this, self] { worker_loop(*self); });
  }
}

WorkerPool::~WorkerPool() {
  shutdown_.store(true, std::memory_order_seq_cst);
  epoch_.fetch_add(1, std::memory_order_seq_cst);
  epoch_.notify_all();
  for (auto& w : workers_) {
    w->thread->join();
  }
}

auto WorkerPool::run_to_completion(TaskRef root) -> void {
  expects(static_cast<bool>(root), "run_to_completion needs a task");
  std::lock_guard<std::mutex> guard(run_mutex_);
  auto expected = TaskState::Created;
  expects(root->state_.compare_exchange_strong(expected, TaskState::Ready, std::memory_order_acq_rel),
          "root task must be Created");
  for (auto& w : workers_) {
    w->clock.reset();
  }
  error_ = nullptr;
  finished_.store(false, std::memory_order_relaxed);
  active_.store(1, std::memory_order_relaxed);
  // The handle's reference becomes the queue reference.
  inbox_.store(std::exchange(root.task_, nullptr), std::memory_order_release);
  std::atomic_thread_fence(std::memory_order_seq_cst);
  if (sleepers_.load(std::memory_order_relaxed) > 0) {
    wake_one();
  }
  while (! finished_.load(std::memory_order_acquire)) {
    finished_.wait(false, std::memory_order_acquire);
  }
  auto blocked = blocked_.exchange(0, std::memory_order_acq_rel);
  if (error_) {
    std::rethrow_exception(std::exchange(error_, nullptr));
  }
  if (blocked != 0) {
    throw deadlock_error("worker pool quiescent with " + std::to_string(blocked) +
                         " task(s) still waiting on unresolved edges");
  }
}

auto WorkerPool::counters() const -> Counters {
  Counters total;
  for (auto& w : workers_) {
    total += w->counters;
  }
  return total;
}

auto WorkerPool::worker_counters() const -> std::vector<Counters> {
  std::vector<Counters> out;
  for (auto& w : workers_) {
    out.push_back(w->counters);
  }
  return out;
}

auto WorkerPool::reset_counters() -> void {
  for (auto& w : workers_) {
    w->counters = Counters{};
  }
}

auto WorkerPool::worker_loop(Worker& w) -> void {
  current = &w;
  int idle = 0;
  while (! shutdown_.load(std::memory_order_acquire)) {
    if (Task* t = find_work(w)) {
      execute(w, t);
      idle = 0;
    } else if (++idle < spin_rounds) {
      std::this_thread::yield();
    } else {
      park(w);
      idle = 0;
    }
  }
  current = nullptr;
}

auto WorkerPool::find_work(Worker& w) -> Task* {
  if (Task* t = w.deque.take()) {
    return t;
  }
  if (inbox_.load(std::memory_order_relaxed) != nullptr) {
    if (Task* t = inbox_.exchange(nullptr, std::memory_order_acq_rel)) {
      return t;
    }
  }
  auto n = static_cast<unsigned>(workers_.size());
  if (n < 2) {
    return nullptr;
  }
  for (unsigned attempt = 0; attempt < n; attempt++) {
    auto victim = static_cast<unsigned>(w.next_random() % (n - 1));
    if (victim >= w.id) {
      victim++;
    }
    if (Task* t = workers_[victim]->deque.steal()) {
      w.counters.steals++;
      return t;
    }
  }
  return nullptr;
}

auto WorkerPool::execute(Worker&, Task* t) -> void {
  t->state_.store(TaskState::Running, std::memory_order_relaxed);
  try {
    t->body_();
  } catch (...) {
    std::lock_guard<std::mutex> guard(error_mutex_);
    if (! error_) {
      error_ = std::current_exception();
    }
  }
  t->body_ = nullptr;
  t->state_.store(TaskState::Done, std::memory_order_release);
  t->release();
  if (active_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
    finished_.store(true, std::memory_order_release);
    finished_.notify_all();
  }
}

auto WorkerPool::make_ready(Worker& w, Task* t) -> void {
  t->retain();
  active_.fetch_add(1, std::memory_order_acq_rel);
  w.deque.push(t);
  // Pairs with the fence in park: either the sleeper sees the task or we
  // see the sleeper.
  std::atomic_thread_fence(std::memory_order_seq_cst);
  if (sleepers_.load(std::memory_order_relaxed) > 0) {
    wake_one();
  }
}

auto WorkerPool::wake_one() -> void {
  epoch_.fetch_add(1, std::memory_order_release);
  epoch_.notify_one();
}

auto WorkerPool::has_visible_work() const -> bool {
  if (inbox_.load(std::memory_order_relaxed) != nullptr) {
    return true;
  }
  for (auto& w : workers_) {
    if (w->deque.size_hint() > 0) {
      return true;
    }
  }
  return false;
}

auto WorkerPool::park(Worker&) -> void {
  auto e = epoch_.load(std::memory_order_acquire);
  sleepers_.fetch_add(1, std::memory_order_seq_cst);
  std::atomic_thread_fence(std::memory_order_seq_cst);
  if (! shutdown_.load(std::memory_order_relaxed) && ! has_visible_work()) {
    epoch_.wait(e, std::memory_order_acquire);
  }
  sleepers_.fetch_sub(1, std::memory_order_relaxed);
}

/*---------------------------------------------------------------------*/
/* Per-worker state */

auto this_worker_clock() -> HeartbeatClock& {
  return require_worker("heartbeat clock requested outside a worker").clock;
}

auto this_worker_counters() -> Counters& {
  return current != nullptr ? current->counters : scratch_counters;
}

auto current_worker_id() -> std::optional<unsigned> {
  if (current == nullptr) {
    return std::nullopt;
  }
  return current->id;
}

} // namespace hbt::sched
