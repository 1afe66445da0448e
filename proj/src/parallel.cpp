#include "pushgrad/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace pushgrad::parallel {

int max_threads() {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap < 1) {
    cap = 1;
  }
  const char* env = std::getenv("PUSHGRAD_THREADS");
  if (env != nullptr) {
    try {
      cap = std::min(cap, std::stoi(std::string(env)));
    } catch (const std::exception&) {
      // Unparseable values leave the hardware default in place.
    }
    if (cap < 1) {
      cap = 1;
    }
  }
  return cap;
}

void parallel_for(int count, const std::function<void(int)>& fn) {
  if (count <= 0) {
    return;
  }
  const int workers = std::min(max_threads(), count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }

  std::mutex error_mutex;
  std::exception_ptr first_error;
  // A shared cursor keeps workers busy even when iteration costs are uneven;
  // result placement is index-addressed, so claim order does not matter.
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= count) {
        return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
        }
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    threads.emplace_back(worker);
  }
  for (std::thread& t : threads) {
    t.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

}  // namespace pushgrad::parallel
