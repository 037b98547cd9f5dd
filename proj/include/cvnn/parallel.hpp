#pragma once

#include <cstddef>
#include <functional>

namespace cvnn {

/// 0 means "one per hardware thread".
std::size_t resolve_workers(std::size_t requested);

/// Runs body(task) for every task in [0, count). Tasks are claimed dynamically,
/// so callers must make each task's output a function of its index alone.
/// The first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& body);

}  // namespace cvnn
