#pragma once

#include <Eigen/Core>

#include <functional>

namespace evolflow {

/// Worker count used by parallel_for; results never depend on it.
void set_thread_count(int threads);
int thread_count();

/// Calls body(i) for i in [0, count) over contiguous chunks. Each index must
/// write only its own output slot so the result is independent of scheduling.
void parallel_for(Eigen::Index count, const std::function<void(Eigen::Index)>& body);

}  // namespace evolflow
