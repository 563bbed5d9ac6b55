#pragma once

#include <barrier>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace wavernn {

// A fixed group of workers that execute one task in lock step. The calling
// thread participates as worker 0; run() returns when every worker is done.
class LaneTeam {
 public:
  explicit LaneTeam(std::size_t workers);
  ~LaneTeam();

  LaneTeam(const LaneTeam&) = delete;
  LaneTeam& operator=(const LaneTeam&) = delete;

  std::size_t size() const noexcept { return errors_.size(); }

  // Rethrows the first exception raised by any worker.
  void run(const std::function<void(std::size_t worker)>& task);

 private:
  void work(std::size_t worker);

  std::vector<std::exception_ptr> errors_;
  std::barrier<> start_;
  std::barrier<> done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  bool stop_ = false;
  std::vector<std::jthread> threads_;
};

}  // namespace wavernn
