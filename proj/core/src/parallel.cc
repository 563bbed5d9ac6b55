#include "wavernn/parallel.h"

#include "wavernn/errors.h"

namespace wavernn {

LaneTeam::LaneTeam(std::size_t workers)
    : errors_(workers == 0 ? throw InputError("LaneTeam needs a worker") : workers),
      start_(static_cast<std::ptrdiff_t>(workers)),
      done_(static_cast<std::ptrdiff_t>(workers)) {
  threads_.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    threads_.emplace_back([this, w] { work(w); });
  }
}

LaneTeam::~LaneTeam() {
  stop_ = true;
  start_.arrive_and_wait();
}

void LaneTeam::work(std::size_t worker) {
  for (;;) {
    start_.arrive_and_wait();
    if (stop_) return;
    try {
      (*task_)(worker);
    } catch (...) {
      errors_[worker] = std::current_exception();
    }
    done_.arrive_and_wait();
  }
}

void LaneTeam::run(const std::function<void(std::size_t)>& task) {
  task_ = &task;
  for (auto& e : errors_) e = nullptr;
  start_.arrive_and_wait();
  try {
    task(0);
  } catch (...) {
    errors_[0] = std::current_exception();
  }
  done_.arrive_and_wait();
  task_ = nullptr;
  for (const auto& e : errors_) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace wavernn
