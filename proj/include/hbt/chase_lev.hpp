#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <type_traits>
#include <vector>

namespace hbt::sched {

/// Chase-Lev work-stealing deque of pointers, with the memory orderings of
/// Le, Pop, Cohen and Zappa Nardelli (PPoPP'13). The owner pushes and takes
/// at the bottom; any thread may steal from the top. Retired buffers are
/// kept until the deque dies since a thief may still be reading one.
template <typename T>
class ChaseLevDeque {
  static_assert(std::is_pointer_v<T>);

  struct Buffer {
    explicit Buffer(std::int64_t capacity)
      : mask(capacity - 1), slots(new std::atomic<T>[static_cast<std::size_t>(capacity)]) { }

    auto capacity() const -> std::int64_t { return mask + 1; }
    auto get(std::int64_t i) const -> T { return slots[i & mask].load(std::memory_order_relaxed); }
    auto put(std::int64_t i, T x) -> void { slots[i & mask].store(x, std::memory_order_relaxed); }

    std::int64_t mask;
    std::unique_ptr<std::atomic<T>[]> slots;
  };

public:
  explicit ChaseLevDeque(std::int64_t capacity = 256) {
    retired_.push_back(std::make_unique<Buffer>(capacity));
    buffer_.store(retired_.back().get(), std::memory_order_relaxed);
  }

  ChaseLevDeque(const ChaseLevDeque&) = delete;

  // Owner only.
  auto push(T x) -> void {
    auto b = bottom_.load(std::memory_order_relaxed);
    auto t = top_.load(std::memory_order_acquire);
    Buffer* a = buffer_.load(std::memory_order_relaxed);
    if (b - t > a->capacity() - 1) {
      a = grow(a, b, t);
    }
    a->put(b, x);
    std::atomic_thread_fence(std::memory_order_release);
    bottom_.store(b + 1, std::memory_order_relaxed);
  }

  // Owner only. Returns nullptr when empty.
  auto take() -> T {
    auto b = bottom_.load(std::memory_order_relaxed) - 1;
    Buffer* a = buffer_.load(std::memory_order_relaxed);
    bottom_.store(b, std::memory_order_relaxed);
    std::atomic_thread_fence(std::memory_order_seq_cst);
    auto t = top_.load(std::memory_order_relaxed);
    T x = nullptr;
    if (t <= b) {
      x = a->get(b);
      if (t == b) {
        // Last element: race against thieves for it.
        if (! top_.compare_exchange_strong(t, t + 1, std::memory_order_seq_cst, std::memory_order_relaxed)) {
          x = nullptr;
        }
        bottom_.store(b + 1, std::memory_order_relaxed);
      }
    } else {
      bottom_.store(b + 1, std::memory_order_relaxed);
    }
    return x;
  }

  // Any thread. Returns nullptr when empty or when it lost a race.
  auto steal() -> T {
    auto t = top_.load(std::memory_order_acquire);
    std::atomic_thread_fence(std::memory_order_seq_cst);
    auto b = bottom_.load(std::memory_order_acquire);
    if (t >= b) {
      return nullptr;
    }
    Buffer* a = buffer_.load(std::memory_order_acquire);
    T x = a->get(t);
    if (! top_.compare_exchange_strong(t, t + 1, std::memory_order_seq_cst, std::memory_order_relaxed)) {
      return nullptr;
    }
    return x;
  }

  // Racy size estimate for idle checks.
  auto size_hint() const -> std::int64_t {
    auto b = bottom_.load(std::memory_order_relaxed);
    auto t = top_.load(std::memory_order_relaxed);
    return b - t;
  }

private:
  auto grow(Buffer* old, std::int64_t b, std::int64_t t) -> Buffer* {
    retired_.push_back(std::make_unique<Buffer>(old->capacity() * 2));
    Buffer* a = retired_.back().get();
    for (auto i = t; i < b; i++) {
      a->put(i, old->get(i));
    }
    buffer_.store(a, std::memory_order_release);
    return a;
  }

  alignas(64) std::atomic<std::int64_t> top_{0};
  alignas(64) std::atomic<std::int64_t> bottom_{0};
  alignas(64) std::atomic<Buffer*> buffer_{nullptr};
  std::vector<std::unique_ptr<Buffer>> retired_;
};

} // namespace hbt::sched
