#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <hbt/contract.hpp>
#include <hbt/tree.hpp>

namespace hbt {

namespace sched {
class Task;
}

/*---------------------------------------------------------------------*/
/* Frames */

enum class FrameKind : std::uint8_t {
  KTerm,     // final answer goes to a caller-owned cell
  KPBranch,  // branch i of a forked node: write result slot, then join
  KSBranch0, // waiting on the first branch of n (latent parallelism)
  KSBranch1, // waiting on the second branch of n, first branch summed to s0
};

/// One defunctionalized continuation record. Fixed size, trivially copyable;
/// the tail link of a linked continuation is implicit in stack adjacency.
class Frame {
public:
  // Uninitialized; only for storage that is written before it is read.
  Frame() = default;

  static auto term(std::int64_t* ans) -> Frame {
    return Frame(FrameKind::KTerm, 0, word(ans), 0);
  }
  static auto pbranch(int i, std::int64_t* s, sched::Task* tj) -> Frame {
    expects(i == 0 || i == 1, "KPBranch index must be 0 or 1");
    return Frame(FrameKind::KPBranch, static_cast<std::uint8_t>(i), word(s), word(tj));
  }
  static auto sbranch0(const Node* n) -> Frame {
    expects(n != nullptr, "KSBranch0 needs a node");
    return Frame(FrameKind::KSBranch0, 0, 0, word(n));
  }
  static auto sbranch1(std::int64_t s0, const Node* n) -> Frame {
    expects(n != nullptr, "KSBranch1 needs a node");
    return Frame(FrameKind::KSBranch1, 0, static_cast<std::uint64_t>(s0), word(n));
  }

  auto kind() const -> FrameKind { return kind_; }
  auto is_base() const -> bool { return kind_ == FrameKind::KTerm || kind_ == FrameKind::KPBranch; }

  auto ans() const -> std::int64_t* { return reinterpret_cast<std::int64_t*>(a_); }
  auto branch() const -> int { return branch_; }
  auto results() const -> std::int64_t* { return reinterpret_cast<std::int64_t*>(a_); }
  auto join_task() const -> sched::Task* { return reinterpret_cast<sched::Task*>(b_); }
  auto node() const -> const Node* { return reinterpret_cast<const Node*>(b_); }
  auto s0() const -> std::int64_t { return static_cast<std::int64_t>(a_); }

  friend auto operator==(const Frame& a, const Frame& b) -> bool;

private:
  Frame(FrameKind kind, std::uint8_t branch, std::uint64_t a, std::uint64_t b)
    : kind_(kind), branch_(branch), a_(a), b_(b) { }

  template <typename T>
  static auto word(T* p) -> std::uint64_t { return reinterpret_cast<std::uintptr_t>(p); }

  // Payload as plain words rather than a union, so frames are built and
  // copied in registers. KTerm: a = answer cell. KPBranch: a = result slots,
  // b = join task. KSBranch0: b = node. KSBranch1: a = s0, b = node.
  FrameKind kind_;
  std::uint8_t branch_;
  std::uint64_t a_;
  std::uint64_t b_;
};

static_assert(sizeof(Frame) == 24);
static_assert(std::is_trivial_v<Frame>);

// Index into continuation storage. Narrower than every payload type stored
// in frames, so the compiler can keep indices in registers across frame
// writes.
using slot = std::uint32_t;

inline constexpr slot max_slots = slot(1) << 31;

/// Growable storage whose slots are not initialized, so growing a stack does
/// not pay for zeroing memory it is about to overwrite. Capacities are powers
/// of two, and released allocations are cached by capacity: small ones per
/// thread (up to thread_cache_bytes), large ones process-wide (one per
/// capacity). Tasks come and go with their own stacks, and a deep stack may
/// be rebuilt on any worker; reusing warm memory avoids faulting in fresh
/// pages each time.
template <typename T>
class raw_buffer {
  static_assert(std::is_trivial_v<T>);

public:
  raw_buffer() = default;
  raw_buffer(raw_buffer&& other) noexcept
    : data_(std::exchange(other.data_, nullptr)), capacity_(std::exchange(other.capacity_, 0)) { }
  auto operator=(raw_buffer&& other) noexcept -> raw_buffer& {
    std::swap(data_, other.data_);
    std::swap(capacity_, other.capacity_);
    return *this;
  }
  ~raw_buffer() { release(data_, capacity_); }

  auto capacity() const -> slot { return capacity_; }
  auto data() -> T* { return data_; }
  auto data() const -> const T* { return data_; }
  auto operator[](std::size_t i) -> T& { return data_[i]; }
  auto operator[](std::size_t i) const -> const T& { return data_[i]; }

  // Reallocates to at least `capacity`, keeping the slots [first, last) at
  // [0, last - first).
  auto reallocate(slot capacity, slot first, slot last) -> void {
    auto [fresh, n] = acquire(capacity);
    std::copy(data_ + first, data_ + last, fresh);
    release(std::exchange(data_, fresh), std::exchange(capacity_, n));
  }

  auto assign(const T* first, const T* last) -> void {
    auto n = static_cast<slot>(last - first);
    if (n > capacity_) {
      auto [fresh, c] = acquire(n);
      release(std::exchange(data_, fresh), std::exchange(capacity_, c));
    }
    std::copy(first, last, data_);
  }

  static constexpr std::size_t thread_cache_bytes = std::size_t(64) << 20;
  static constexpr std::size_t large_bytes = std::size_t(1) << 20;

private:
  static constexpr int classes = 32;

  // Released allocations of capacity 2^c in lists[c].
  struct thread_cache {
    std::array<std::vector<T*>, classes> lists;
    std::size_t bytes = 0;
    ~thread_cache() {
      for (auto& l : lists) {
        for (auto* p : l) {
          delete[] p;
        }
      }
      closed = true;
    }
  };
  static thread_local thread_cache cache_;
  // Set once the thread's cache is gone; trivially destructible, so it is
  // readable until the thread ends.
  static thread_local bool closed;

  struct shared_cache {
    std::mutex mutex;
    std::array<T*, classes> slots{};
    ~shared_cache() {
      for (auto* p : slots) {
        delete[] p;
      }
    }
  };
  static auto shared() -> shared_cache& {
    static shared_cache c;
    return c;
  }

  static auto size_class(slot capacity) -> int {
    return std::bit_width(std::max<slot>(capacity, 32) - 1);
  }

  static auto acquire(slot capacity) -> std::pair<T*, slot> {
    auto c = size_class(capacity);
    auto n = slot(1) << c;
    if (n * sizeof(T) < large_bytes && ! closed && ! cache_.lists[c].empty()) {
      auto* p = cache_.lists[c].back();
      cache_.lists[c].pop_back();
      cache_.bytes -= n * sizeof(T);
      return {p, n};
    }
    // The largest shared buffer that fits: a stack that grew deep once is
    // likely to again, and starting there skips the copies of regrowing.
    auto& g = shared();
    std::lock_guard<std::mutex> guard(g.mutex);
    for (int k = classes - 1; k >= c; k--) {
      if (auto* p = std::exchange(g.slots[k], nullptr)) {
        return {p, slot(1) << k};
      }
    }
    return {new T[n], n};
  }

  static auto release(T* data, slot capacity) -> void {
    if (data == nullptr) {
      return;
    }
    auto c = size_class(capacity);
    auto bytes = capacity * sizeof(T);
    if (bytes >= large_bytes) {
      auto& g = shared();
      std::lock_guard<std::mutex> guard(g.mutex);
      std::swap(data, g.slots[c]);
    } else if (! closed && cache_.bytes + bytes <= thread_cache_bytes) {
      cache_.lists[c].push_back(data);
      cache_.bytes += bytes;
      return;
    }
    delete[] data;
  }

  T* data_ = nullptr;
  slot capacity_ = 0;
};

template <typename T>
thread_local typename raw_buffer<T>::thread_cache raw_buffer<T>::cache_;
template <typename T>
thread_local bool raw_buffer<T>::closed = false;

/*---------------------------------------------------------------------*/
/* Continuation stack */

// Logical position of a frame. Positions are assigned at push time and never
// change while the frame stays in its stack, even when frames are removed
// from the outer end.
using Position = std::uint64_t;

/// Linear continuation, outermost frame at the front. With TrackPotentials,
/// the positions of all KSBranch0 frames are kept in a second sorted
/// sequence so the outermost one is found without scanning.
template <bool TrackPotentials>
class BasicContinuationStack {
public:
  BasicContinuationStack() = default;
  explicit BasicContinuationStack(Frame base) { push(base); }

  auto empty() const -> bool { return top_ == head_; }
  auto size() const -> std::size_t { return top_ - head_; }

  auto front_position() const -> Position { return base_ + head_; }
  auto front() const -> const Frame& { return frames_[head_]; }
  auto back() const -> const Frame& { return frames_[top_ - 1]; }
  auto at(Position p) const -> const Frame& { return frames_[p - base_]; }
  auto contains(Position p) const -> bool { return p >= base_ + head_ && p < base_ + top_; }

  // Frames from outermost to innermost.
  auto frames() const -> std::span<const Frame> {
    return std::span<const Frame>(frames_.data() + head_, size());
  }

  auto push(Frame f) -> void {
    if (f.is_base()) {
      expects(empty(), "KTerm/KPBranch may only be the base of a continuation");
    }
    if (top_ == frames_.capacity()) [[unlikely]] {
      grow();
    }
    if constexpr (TrackPotentials) {
      if (f.kind() == FrameKind::KSBranch0) {
        if (ptop_ == potentials_.capacity()) [[unlikely]] {
          grow_potentials();
        }
        potentials_[ptop_++] = base_ + top_;
      }
    }
    frames_[top_++] = f;
  }

  // Rewrites the top KSBranch0 as KSBranch1 carrying `s0`, which is pop then
  // push without touching capacity. Returns the frame's node.
  auto resolve_back(std::int64_t s0) -> const Node* {
    expects(! empty() && back().kind() == FrameKind::KSBranch0, "resolve_back needs a KSBranch0 on top");
    const Node* n = frames_[top_ - 1].node();
    frames_[top_ - 1] = Frame::sbranch1(s0, n);
    if constexpr (TrackPotentials) {
      ptop_--;
    }
    return n;
  }

  auto pop() -> Frame {
    expects(! empty(), "pop on an empty continuation");
    Frame f = frames_[--top_];
    if constexpr (TrackPotentials) {
      if (f.kind() == FrameKind::KSBranch0) {
        ptop_--;
      }
    }
    if (top_ == head_) [[unlikely]] {
      base_ += head_;
      head_ = top_ = 0;
      phead_ = ptop_ = 0;
    }
    return f;
  }

  // Outermost KSBranch0, or nothing. Looks at exactly one entry.
  auto find_outermost_potential() -> std::optional<Position>
    requires TrackPotentials
  {
    if (ptop_ == phead_) {
      return std::nullopt;
    }
    lookup_steps_++;
    return potentials_[phead_];
  }

  auto potentials() const -> std::span<const Position>
    requires TrackPotentials
  {
    return std::span<const Position>(potentials_.data() + phead_, ptop_ - phead_);
  }

  // Number of potential entries inspected by find_outermost_potential so far.
  auto lookup_steps() const -> std::uint64_t
    requires TrackPotentials
  {
    return lookup_steps_;
  }

  /// Cuts the stack at the KSBranch0 frame at `at`. Frames outer than `at`
  /// are returned as a stack of their own (keeping their positions); the
  /// frame at `at` is overwritten by `replacement`, which becomes this
  /// stack's base. Cost is linear in the smaller of the two parts.
  auto split_and_replace(Position at, Frame replacement) -> BasicContinuationStack
    requires TrackPotentials
  {
    expects(contains(at), "split position out of range");
    expects(this->at(at).kind() == FrameKind::KSBranch0, "split position is not a KSBranch0 frame");
    expects(replacement.kind() == FrameKind::KPBranch, "split replacement must be a KPBranch frame");

    auto split = static_cast<slot>(at - base_);
    auto pbegin = potentials_.data() + phead_;
    auto pend = potentials_.data() + ptop_;
    auto psplit = static_cast<slot>(std::lower_bound(pbegin, pend, at) - potentials_.data());

    BasicContinuationStack other;
    if (split - head_ <= top_ - split) {
      // Copy the outer part out, then drop it from our front.
      other.assign(base_ + head_, frames_.data() + head_, frames_.data() + split,
                   potentials_.data() + phead_, potentials_.data() + psplit);
      head_ = split;
      phead_ = psplit + 1;
      frames_[head_] = replacement;
      return other;
    }
    // Copy the inner part out and keep the outer part in place.
    other.assign(at, frames_.data() + split, frames_.data() + top_,
                 potentials_.data() + psplit + 1, potentials_.data() + ptop_);
    other.frames_[0] = replacement;
    top_ = split;
    ptop_ = psplit;
    std::swap(lookup_steps_, other.lookup_steps_);
    std::swap(*this, other);
    return other;
  }

  /// The push/pop fast path with the stack's hot fields held in locals, so
  /// a loop that also hands the stack to other code can keep them in
  /// registers. The stack must not be touched except through the cursor
  /// between load() and store().
  class cursor {
  public:
    explicit cursor(BasicContinuationStack& s) : s_(s) { load(); }

    auto load() -> void {
      frames_ = s_.frames_.data();
      head_ = s_.head_;
      top_ = s_.top_;
      cap_ = s_.frames_.capacity();
      base_ = s_.base_;
      if constexpr (TrackPotentials) {
        potentials_ = s_.potentials_.data();
        ptop_ = s_.ptop_;
        pcap_ = s_.potentials_.capacity();
      }
    }

    auto store() -> void {
      s_.top_ = top_;
      if constexpr (TrackPotentials) {
        s_.ptop_ = ptop_;
      }
      if (top_ == head_) {
        s_.base_ += s_.head_;
        s_.head_ = s_.top_ = 0;
        s_.phead_ = s_.ptop_ = 0;
      }
    }

    auto push_sbranch0(const Node* n) -> void {
      if (top_ == cap_ || (TrackPotentials && ptop_ == pcap_)) [[unlikely]] {
        store();
        if (s_.top_ == s_.frames_.capacity()) {
          s_.grow();
        }
        if constexpr (TrackPotentials) {
          if (s_.ptop_ == s_.potentials_.capacity()) {
            s_.grow_potentials();
          }
        }
        load();
      }
      if constexpr (TrackPotentials) {
        potentials_[ptop_++] = base_ + top_;
      }
      frames_[top_++] = Frame::sbranch0(n);
    }

    auto back() const -> const Frame& { return frames_[top_ - 1]; }

    auto resolve_back(std::int64_t s0) -> const Node* {
      const Node* n = frames_[top_ - 1].node();
      frames_[top_ - 1] = Frame::sbranch1(s0, n);
      if constexpr (TrackPotentials) {
        ptop_--;
      }
      return n;
    }

    // Leaves the stack as pop() would, once store() runs.
    auto pop() -> Frame {
      expects(top_ != head_, "pop on an empty continuation");
      Frame f = frames_[--top_];
      if constexpr (TrackPotentials) {
        ptop_ -= f.kind() == FrameKind::KSBranch0;
      }
      return f;
    }

  private:
    BasicContinuationStack& s_;
    Frame* frames_ = nullptr;
    slot head_ = 0;
    slot top_ = 0;
    slot cap_ = 0;
    Position base_ = 0;
    Position* potentials_ = nullptr;
    slot ptop_ = 0;
    slot pcap_ = 0;
  };

private:
  auto assign(Position base, const Frame* first, const Frame* last, const Position* pfirst, const Position* plast) -> void {
    frames_.assign(first, last);
    potentials_.assign(pfirst, plast);
    base_ = base;
    head_ = 0;
    top_ = static_cast<slot>(last - first);
    phead_ = 0;
    ptop_ = static_cast<slot>(plast - pfirst);
  }

  // Reuses dead space at the front when it is at least half the buffer,
  // otherwise doubles.
  auto grow() -> void {
    if (head_ > 0 && head_ * 2 >= frames_.capacity()) {
      std::copy(frames_.data() + head_, frames_.data() + top_, frames_.data());
    } else {
      expects(frames_.capacity() < max_slots, "continuation too deep");
      frames_.reallocate(std::max<slot>(32, frames_.capacity() * 2), head_, top_);
    }
    base_ += head_;
    top_ -= head_;
    head_ = 0;
  }

  auto grow_potentials() -> void {
    if (phead_ > 0 && phead_ * 2 >= potentials_.capacity()) {
      std::copy(potentials_.data() + phead_, potentials_.data() + ptop_, potentials_.data());
    } else {
      potentials_.reallocate(std::max<slot>(32, potentials_.capacity() * 2), phead_, ptop_);
    }
    ptop_ -= phead_;
    phead_ = 0;
  }

  // Live frames are frames_[head_, top_); frames_[i] has position base_ + i.
  raw_buffer<Frame> frames_;
  slot head_ = 0;
  slot top_ = 0;
  Position base_ = 0;
  // Live potentials are potentials_[phead_, ptop_), sorted.
  raw_buffer<Position> potentials_;
  slot phead_ = 0;
  slot ptop_ = 0;
  std::uint64_t lookup_steps_ = 0;
};

using ContinuationStack = BasicContinuationStack<true>;

// Same layout without potential tracking; the serial traversal uses it.
using SerialStack = BasicContinuationStack<false>;

/*---------------------------------------------------------------------*/
/* Debug rendering */

using NodeNamer = std::function<std::string(const Node*)>;

// One-line form such as `KTerm|KSB0(n12)|KSB1(7,n12)|KPB(0)`. Nodes are named
// by `name`, or by their value when no namer is given.
auto describe(std::span<const Frame> frames, const NodeNamer& name = {}) -> std::string;

// Names nodes by arena index in `tree`.
auto arena_namer(const Tree& tree) -> NodeNamer;

} // namespace hbt
