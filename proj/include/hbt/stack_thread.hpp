#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <type_traits>
#include <utility>

#include <pthread.h>

namespace hbt {

/// A joinable thread with an explicit call-stack size. std::thread offers no
/// way to choose one, and the constant-stack claims of the iterative
/// traversals are only observable when the budget is small.
class StackThread {
public:
  StackThread(std::size_t stack_bytes, std::function<void()> body);
  StackThread(StackThread&&) = delete;
  ~StackThread();

  auto join() -> void;

private:
  static auto entry(void* self) -> void*;

  std::function<void()> body_;
  pthread_t handle_{};
  bool joined_ = false;
};

/// Runs `f` to completion on a fresh thread with `stack_bytes` of stack and
/// returns its result; exceptions are rethrown on the caller.
template <typename F>
auto run_with_stack(std::size_t stack_bytes, F&& f) -> std::invoke_result_t<F&> {
  using R = std::invoke_result_t<F&>;
  std::exception_ptr error;
  if constexpr (std::is_void_v<R>) {
    StackThread t(stack_bytes, [&] {
      try { f(); } catch (...) { error = std::current_exception(); }
    });
    t.join();
    if (error) {
      std::rethrow_exception(error);
    }
  } else {
    std::optional<R> result;
    StackThread t(stack_bytes, [&] {
      try { result.emplace(f()); } catch (...) { error = std::current_exception(); }
    });
    t.join();
    if (error) {
      std::rethrow_exception(error);
    }
    return std::move(*result);
  }
}

} // namespace hbt
