#pragma once

namespace nestiv {

// Execution policy for embarrassingly parallel loops. Every parallel loop in
// the library has a serial twin reachable through this switch, and results
// must not depend on which one runs: tasks draw from their own RNG substreams
// and write only to their own preallocated slots.
enum class Exec { Serial, OpenMP };

template <typename Body>
void parallel_for(int begin, int end, Exec mode, Body&& body) {
  if (mode == Exec::OpenMP) {
#pragma omp parallel for schedule(dynamic)
    for (int i = begin; i < end; ++i) body(i);
  } else {
    for (int i = begin; i < end; ++i) body(i);
  }
}

}  // namespace nestiv
