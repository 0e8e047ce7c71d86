#include <hbt/stack_thread.hpp>

#include <algorithm>
#include <cstring>
#include <limits.h>
#include <stdexcept>
#include <string>

namespace hbt {

StackThread::StackThread(std::size_t stack_bytes, std::function<void()> body)
  : body_(std::move(body)) {
  pthread_attr_t attr;
  pthread_attr_init(&attr);
  stack_bytes = std::max<std::size_t>(stack_bytes, PTHREAD_STACK_MIN);
  if (int rc = pthread_attr_setstacksize(&attr, stack_bytes); rc != 0) {
    pthread_attr_destroy(&attr);
    throw std::runtime_error(std::string("pthread_attr_setstacksize: ") + std::strerror(rc));
  }
  int rc = pthread_create(&handle_, &attr, &StackThread::entry, this);
  pthread_attr_destroy(&attr);
  if (rc != 0) {
    throw std::runtime_error(std::string("pthread_create: ") + std::strerror(rc));
  }
}

StackThread::~StackThread() {
  join();
}

auto StackThread::join() -> void {
  if (! joined_) {
    pthread_join(handle_, nullptr);
    joined_ = true;
  }
}

auto StackThread::entry(void* self) -> void* {
  static_cast<StackThread*>(self)->body_();
  return nullptr;
}

} // namespace hbt
