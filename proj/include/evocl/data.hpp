#ifndef EVOCL_DATA_HPP
#define EVOCL_DATA_HPP

#include <memory>
#include <string>
#include <vector>

#include "evocl/common.hpp"
#include "evocl/net.hpp"

namespace evocl {

struct Dataset {
  Matrix inputs;  // examples x input_dim, values in [0,1]
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;

  Eigen::Index size() const { return inputs.rows(); }
};

// A view into a dataset: no copies until a batch is gathered.
struct TaskSlice {
  std::shared_ptr<const Dataset> data;
  std::vector<int> indices;

  int size() const { return static_cast<int>(indices.size()); }
  Batch gather(const std::vector<int>& rows) const;  // rows index into indices
  Batch all() const;
};

struct Task {
  TaskSlice train;
  TaskSlice test;
  std::vector<int> class_set;  // global class ids, ordered
};

struct TaskStream {
  std::vector<Task> tasks;
  std::vector<int> class_order;
  int num_classes = 0;

  int size() const { return static_cast<int>(tasks.size()); }
};

struct RawImages {
  ByteMatrix pixels;  // examples x (rows*cols), raw byte values
  int rows = 0;
  int cols = 0;
};

// Big-endian IDX readers. Accept raw files and gzip-compressed files
// (zlib sniffs the 0x1f 0x8b magic). Throw DataError on bad magic numbers
// or truncated payloads.
RawImages load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

// value / 255 into [0,1]
Matrix normalize(const ByteMatrix& raw);

// Assembles and validates a Dataset; labels outside [0, num_classes) fail here.
Dataset assemble_dataset(Matrix inputs, std::vector<int> labels, int num_classes,
                         std::string name);

// Loads <dir>/{train,t10k}-{images,labels}-idx?-ubyte[.gz].
Dataset load_idx_dataset(const std::string& dir, const std::string& name, bool train,
                         int num_classes = 10);

// Chunks class_order into T contiguous groups (earlier tasks take the
// remainder when the classes do not divide evenly) and routes examples by
// label. Within-task example order is shuffled deterministically by seed.
TaskStream split_tasks(std::shared_ptr<const Dataset> train, std::shared_ptr<const Dataset> test,
                       int T, const std::vector<int>& class_order, std::uint64_t seed);

// Gaussian blobs around per-class centers spaced ~1.1 apart inside [0,1]^dim;
// linearly separable when spread is small. num_classes must be <= input_dim.
Dataset make_synthetic(int num_classes, int per_class, int input_dim, double blob_spread,
                       std::uint64_t seed, std::string name = "synthetic");

std::vector<int> identity_class_order(int num_classes);
std::vector<int> shuffled_class_order(int num_classes, std::uint64_t seed);

}  // namespace evocl

#endif
