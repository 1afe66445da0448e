#pragma once

#include <functional>

namespace pushgrad::parallel {

// Worker cap: hardware concurrency, reduced by the PUSHGRAD_THREADS
// environment variable when set (values below 1 mean 1).
int max_threads();

// Runs fn(i) for every i in [0, count), distributing indices over at most
// max_threads() workers. Callers must write results to disjoint,
// index-addressed slots; ordering of any shared output is theirs to impose
// afterwards. The first exception thrown by fn is rethrown once all workers
// have stopped.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace pushgrad::parallel
