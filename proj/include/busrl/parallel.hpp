#ifndef BUSRL_PARALLEL_HPP_
#define BUSRL_PARALLEL_HPP_

#include <exception>
#include <mutex>

namespace busrl {

// Exceptions must not escape an OpenMP region; the first one is parked here
// and rethrown once the loop has joined.
class ExceptionSlot {
 public:
  template <typename F>
  void run(F&& f) {
    try {
      f();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }

  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mutex_;
  std::exception_ptr error_;
};

int max_threads();

}  // namespace busrl

#endif  // BUSRL_PARALLEL_HPP_
