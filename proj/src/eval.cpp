#include "evocl/eval.hpp"

namespace evocl {

StageRecord evaluate_stage(const ClState& state, const std::vector<TaskSlice>& tasks_seen) {
  if (tasks_seen.empty()) throw std::invalid_argument("evaluate_stage: no tasks to evaluate");
  StageRecord rec;
  rec.stage = static_cast<int>(tasks_seen.size());
  long total = 0, total_correct = 0;
  for (const TaskSlice& slice : tasks_seen) {
    if (slice.size() == 0) throw std::invalid_argument("evaluate_stage: empty test slice");
    const Batch batch = slice.all();
    const std::vector<int> pred = predict(state, batch.inputs);
    long correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == batch.labels[i]) ++correct;
    rec.per_task_accuracy.push_back(static_cast<double>(correct) / slice.size());
    total += slice.size();
    total_correct += correct;
  }
  rec.cumulative_accuracy = static_cast<double>(total_correct) / total;
  return rec;
}

double a_last(const AccuracyMatrix& matrix) {
  if (matrix.empty()) throw std::invalid_argument("a_last of an empty matrix");
  return matrix.back().cumulative_accuracy;
}

double a_inc(const AccuracyMatrix& matrix) {
  if (matrix.empty()) throw std::invalid_argument("a_inc of an empty matrix");
  double sum = 0.0;
  for (const StageRecord& rec : matrix) sum += rec.cumulative_accuracy;
  return sum / matrix.size();
}

}  // namespace evocl
