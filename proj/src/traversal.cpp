#include <hbt/traversal.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <deque>
#include <memory>

#include <hbt/stack_thread.hpp>

namespace hbt {

namespace {

auto node_sum(std::int64_t s0, std::int64_t s1, const Node* n) -> std::int64_t {
  return wrapping_add(wrapping_add(s0, s1), n->v);
}

} // end namespace

/*---------------------------------------------------------------------*/
/* Names */

auto is_parallel(VariantId id) -> bool {
  return id == VariantId::V1_Fork2Join || id == VariantId::V2_ParallelDefunc || id == VariantId::V6_Heartbeat;
}

auto short_name(VariantId id) -> std::string_view {
  switch (id) {
  case VariantId::V0_Recursive:       return "V0";
  case VariantId::V1_Fork2Join:       return "V1";
  case VariantId::V2_ParallelDefunc:  return "V2";
  case VariantId::V3_SerialCPS:       return "V3";
  case VariantId::V4_SerialDefunc:    return "V4";
  case VariantId::V5_SerialIterative: return "V5";
  case VariantId::V6_Heartbeat:       return "V6";
  }
  return "?";
}

auto long_name(VariantId id) -> std::string_view {
  switch (id) {
  case VariantId::V0_Recursive:       return "recursive";
  case VariantId::V1_Fork2Join:       return "fork2join";
  case VariantId::V2_ParallelDefunc:  return "parallel-defunc";
  case VariantId::V3_SerialCPS:       return "serial-cps";
  case VariantId::V4_SerialDefunc:    return "serial-defunc";
  case VariantId::V5_SerialIterative: return "serial-iterative";
  case VariantId::V6_Heartbeat:       return "heartbeat";
  }
  return "?";
}

auto parse_variant(std::string_view name) -> VariantId {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [] (unsigned char c) { return std::tolower(c); });
  for (auto id : all_variants) {
    std::string s(short_name(id));
    s[0] = 'v';
    if (lower == s || lower == long_name(id)) {
      return id;
    }
  }
  throw std::invalid_argument("unknown variant: " + std::string(name));
}

/*---------------------------------------------------------------------*/
/* V0: recursion */

namespace {

auto recursive(const Node* n) -> std::int64_t {
  if (n == nullptr) {
    return 0;
  }
  auto s0 = recursive(n->bs[0]);
  auto s1 = recursive(n->bs[1]);
  return node_sum(s0, s1, n);
}

} // end namespace

auto sum_recursive(const Node* root) -> SumResult {
  return {recursive(root)};
}

/*---------------------------------------------------------------------*/
/* V3: serial CPS */

namespace {

using cont = std::function<void(std::int64_t)>;

auto sum_cps(const Node* n, const cont& k) -> void {
  if (n == nullptr) {
    k(0);
    return;
  }
  sum_cps(n->bs[0], [n, &k] (std::int64_t s0) {
    sum_cps(n->bs[1], [n, &k, s0] (std::int64_t s1) {
      k(node_sum(s0, s1, n));
    });
  });
}

} // end namespace

auto sum_serial_cps(const Node* root) -> SumResult {
  std::int64_t ans = 0;
  sum_cps(root, [&ans] (std::int64_t s) { ans = s; });
  return {ans};
}

/*---------------------------------------------------------------------*/
/* V4: serial, defunctionalized */

namespace {

struct linked_frame {
  Frame f;
  const linked_frame* k;
};

class serial_defunc {
public:
  auto run(const Node* root) -> std::int64_t {
    std::int64_t ans = 0;
    sum(root, record(Frame::term(&ans), nullptr));
    return ans;
  }

private:
  auto record(Frame f, const linked_frame* k) -> const linked_frame* {
    return &records_.emplace_back(linked_frame{f, k});
  }

  auto sum(const Node* n, const linked_frame* k) -> void {
    if (n == nullptr) {
      apply(k, 0);
      return;
    }
    sum(n->bs[0], record(Frame::sbranch0(n), k));
  }

  auto apply(const linked_frame* k, std::int64_t sa) -> void {
    const Frame& f = k->f;
    switch (f.kind()) {
    case FrameKind::KSBranch0:
      sum(f.node()->bs[1], record(Frame::sbranch1(sa, f.node()), k->k));
      return;
    case FrameKind::KSBranch1:
      apply(k->k, node_sum(f.s0(), sa, f.node()));
      return;
    case FrameKind::KTerm:
      *f.ans() = sa;
      return;
    case FrameKind::KPBranch:
      break;
    }
    throw contract_violation("serial traversal met a KPBranch frame");
  }

  std::deque<linked_frame> records_;
};

} // end namespace

auto sum_serial_defunc(const Node* root) -> SumResult {
  return {serial_defunc().run(root)};
}

/*---------------------------------------------------------------------*/
/* V5: serial, iterative */

auto sum_serial_iterative(const Node* n) -> SumResult {
  std::int64_t ans = 0;
  SerialStack k(Frame::term(&ans));
  while (true) {
    if (n == nullptr) {
      std::int64_t sa = 0;
      while (true) {
        if (k.back().kind() == FrameKind::KSBranch0) {
          n = k.resolve_back(sa)->bs[1];
          break;
        }
        Frame f = k.pop();
        if (f.kind() == FrameKind::KSBranch1) {
          sa = node_sum(f.s0(), sa, f.node());
        } else if (f.kind() == FrameKind::KTerm) {
          *f.ans() = sa;
          return {ans};
        } else {
          throw contract_violation("serial traversal met a KPBranch frame");
        }
      }
    } else {
      k.push(Frame::sbranch0(n));
      n = n->bs[0];
    }
  }
}

/*---------------------------------------------------------------------*/
/* V1: fork2join in CPS */

namespace {

auto sum_f2j(const Node* n, cont k) -> void {
  if (n == nullptr) {
    k(0);
    return;
  }
  auto s = std::make_shared<std::array<std::int64_t, 2>>();
  auto branch = [n, s] (int i) {
    return [n, s, i] (sched::Task& tj) {
      sum_f2j(n->bs[i], [s, i, &tj] (std::int64_t si) {
        (*s)[i] = si;
        sched::join(tj);
      });
    };
  };
  sched::fork2join(branch(0), branch(1), [n, s, k = std::move(k)] {
    k(node_sum((*s)[0], (*s)[1], n));
  });
}

} // end namespace

auto sum_fork2join(const Node* root, sched::WorkerPool& pool) -> SumResult {
  std::int64_t ans = 0;
  pool.run_to_completion(sched::new_task([root, &ans] {
    sum_f2j(root, [&ans] (std::int64_t s) { ans = s; });
  }));
  return {ans};
}

/*---------------------------------------------------------------------*/
/* V2: parallel, defunctionalized */

namespace {

auto apply_parallel(Frame k, std::int64_t sa) -> void {
  switch (k.kind()) {
  case FrameKind::KPBranch:
    k.results()[k.branch()] = sa;
    sched::join(*k.join_task());
    return;
  case FrameKind::KTerm:
    *k.ans() = sa;
    return;
  default:
    throw contract_violation("parallel traversal met a serial frame");
  }
}

auto sum_parallel(const Node* n, Frame k) -> void {
  if (n == nullptr) {
    apply_parallel(k, 0);
    return;
  }
  auto s = std::make_shared<std::array<std::int64_t, 2>>();
  auto tj = sched::new_task([k, s, n] { apply_parallel(k, node_sum((*s)[0], (*s)[1], n)); });
  // Our own edge keeps tj from running before both children are forked.
  sched::add_dependency(*tj);
  for (int i = 0; i < 2; i++) {
    auto ti = sched::new_task([n, i, s, j = tj.get()] {
      sum_parallel(n->bs[i], Frame::pbranch(i, s->data(), j));
    });
    sched::fork(ti, *tj);
  }
  sched::join(*tj);
}

} // end namespace

auto sum_parallel_defunc(const Node* root, sched::WorkerPool& pool) -> SumResult {
  std::int64_t ans = 0;
  pool.run_to_completion(sched::new_task([root, &ans] { sum_parallel(root, Frame::term(&ans)); }));
  return {ans};
}

/*---------------------------------------------------------------------*/
/* Dispatch */

auto refusal_reason(VariantId id, const Tree& tree) -> std::optional<std::string> {
  switch (id) {
  case VariantId::V0_Recursive:
  case VariantId::V1_Fork2Join:
  case VariantId::V2_ParallelDefunc:
    if (tree.height() > max_recursive_height) {
      return std::string(short_name(id)) + " refused: tree height " + std::to_string(tree.height()) +
             " exceeds " + std::to_string(max_recursive_height) + " (call-stack overflow hazard)";
    }
    break;
  case VariantId::V3_SerialCPS:
  case VariantId::V4_SerialDefunc:
    if (tree.node_count() > max_cps_nodes) {
      return std::string(short_name(id)) + " refused: " + std::to_string(tree.node_count()) +
             " nodes exceeds " + std::to_string(max_cps_nodes) +
             " (call depth grows with every step; call-stack overflow hazard)";
    }
    break;
  case VariantId::V5_SerialIterative:
  case VariantId::V6_Heartbeat:
    break;
  }
  return std::nullopt;
}

auto run_on(VariantId id, const Tree& tree, sched::WorkerPool* pool) -> SumResult {
  const Node* root = tree.root();
  if (is_parallel(id)) {
    expects(pool != nullptr, "parallel variant needs a worker pool");
  }
  switch (id) {
  case VariantId::V0_Recursive:       return sum_recursive(root);
  case VariantId::V1_Fork2Join:       return sum_fork2join(root, *pool);
  case VariantId::V2_ParallelDefunc:  return sum_parallel_defunc(root, *pool);
  case VariantId::V3_SerialCPS:       return sum_serial_cps(root);
  case VariantId::V4_SerialDefunc:    return sum_serial_defunc(root);
  case VariantId::V5_SerialIterative: return sum_serial_iterative(root);
  case VariantId::V6_Heartbeat:       return sum_heartbeat(root, *pool);
  }
  return {};
}

auto run_variant(VariantId id, const Tree& tree, const RunOptions& options) -> VariantRun {
  if (auto why = refusal_reason(id, tree)) {
    throw incompatible_input(*why);
  }
  if (is_parallel(id)) {
    sched::WorkerPool pool({.workers = options.workers, .heartbeat = options.heartbeat, .seed = options.seed});
    auto sum = run_on(id, tree, &pool);
    return {sum, pool.counters()};
  }
  if (id == VariantId::V5_SerialIterative) {
    return {run_on(id, tree, nullptr), {}};
  }
  auto sum = run_with_stack(recursive_stack_bytes, [&] { return run_on(id, tree, nullptr); });
  return {sum, {}};
}

auto run_variant(VariantId id, const TreeSpec& spec, unsigned workers, std::uint64_t heartbeat) -> VariantRun {
  auto tree = generate(spec);
  return run_variant(id, tree, {.workers = workers, .heartbeat = heartbeat, .seed = spec.seed});
}

} // namespace hbt
