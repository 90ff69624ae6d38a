#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace sckls {

/// Worker cap: min(hardware_concurrency, SCKLS_THREADS). At least 1.
int max_threads();

/// Runs f(i) for i in [0, count). Work items must write only to their own
/// output slots; results are then independent of scheduling order.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& f);

}  // namespace sckls
