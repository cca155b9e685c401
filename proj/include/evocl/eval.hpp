#pragma once

#include "evocl/cl.hpp"

namespace evocl {

// Accuracies measured after finishing `stage` tasks (stage is 1-based).
struct StageRecord {
  int stage = 0;
  double cumulative_accuracy = 0.0;       // example-weighted over all seen test sets
  std::vector<double> per_task_accuracy;  // one entry per task 1..stage
};

using AccuracyMatrix = std::vector<StageRecord>;

// Task-agnostic evaluation of `state` on the test slices of every task seen
// so far (tasks_seen[k] is task k+1's test set).
StageRecord evaluate_stage(const ClState& state, const std::vector<TaskSlice>& tasks_seen);

// Cumulative accuracy after the final task.
double a_last(const AccuracyMatrix& matrix);

// Mean cumulative accuracy over all stages.
double a_inc(const AccuracyMatrix& matrix);

}  // namespace evocl
