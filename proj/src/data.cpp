#include "evocl/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace evocl {

Batch TaskSlice::gather(const std::vector<int>& rows) const {
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(rows.size()), data->inputs.cols());
  b.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int src = indices[rows[i]];
    b.inputs.row(static_cast<Eigen::Index>(i)) = data->inputs.row(src);
    b.labels[i] = data->labels[src];
  }
  return b;
}

Batch TaskSlice::all() const {
  std::vector<int> rows(indices.size());
  std::iota(rows.begin(), rows.end(), 0);
  return gather(rows);
}

namespace {

// Reads the whole file through zlib, which transparently passes raw bytes
// when the gzip magic is absent.
std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open " + path);
  std::vector<std::uint8_t> bytes;
  std::uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + n);
  const bool read_error = n < 0;
  gzclose(f);
  if (read_error) throw DataError("read error (corrupt gzip stream?) in " + path);
  return bytes;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

std::string hex(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

}  // namespace

RawImages load_idx_images(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 16) throw DataError("IDX image file too short: " + path);
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != 0x00000803u)
    throw DataError("bad IDX image magic " + hex(magic) + " (want 0x803) in " + path);
  const std::uint32_t n = be32(bytes, 4), r = be32(bytes, 8), c = be32(bytes, 12);
  const std::size_t want = 16 + std::size_t(n) * r * c;
  if (bytes.size() != want)
    throw DataError("IDX image payload length " + std::to_string(bytes.size() - 16) +
                    " does not match header n*r*c = " + std::to_string(want - 16) + " in " + path);
  RawImages out;
  out.rows = static_cast<int>(r);
  out.cols = static_cast<int>(c);
  out.pixels.resize(n, std::size_t(r) * c);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < r * c; ++j)
      out.pixels(i, j) = bytes[16 + std::size_t(i) * r * c + j];
  return out;
}

std::vector<int> load_idx_labels(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 8) throw DataError("IDX label file too short: " + path);
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != 0x00000801u)
    throw DataError("bad IDX label magic " + hex(magic) + " (want 0x801) in " + path);
  const std::uint32_t n = be32(bytes, 4);
  if (bytes.size() != 8 + std::size_t(n))
    throw DataError("IDX label payload length " + std::to_string(bytes.size() - 8) +
                    " does not match header count " + std::to_string(n) + " in " + path);
  std::vector<int> labels(n);
  for (std::uint32_t i = 0; i < n; ++i) labels[i] = bytes[8 + i];
  return labels;
}

Matrix normalize(const ByteMatrix& raw) { return raw.cast<double>() / 255.0; }

Dataset assemble_dataset(Matrix inputs, std::vector<int> labels, int num_classes,
                         std::string name) {
  if (inputs.rows() != static_cast<Eigen::Index>(labels.size()))
    throw DataError(name + ": " + std::to_string(inputs.rows()) + " examples but " +
                    std::to_string(labels.size()) + " labels");
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw DataError(name + ": label " + std::to_string(y) + " outside [0, " +
                      std::to_string(num_classes) + ")");
  return Dataset{std::move(inputs), std::move(labels), num_classes, std::move(name)};
}

namespace {

std::string find_idx_file(const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  for (const char* suffix : {"", ".gz"}) {
    const std::string p = dir + "/" + stem + suffix;
    if (fs::exists(p)) return p;
  }
  throw DataError("missing dataset file " + dir + "/" + stem + "[.gz]");
}

}  // namespace

Dataset load_idx_dataset(const std::string& dir, const std::string& name, bool train,
                         int num_classes) {
  const std::string img_stem = train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
  const std::string lab_stem = train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
  RawImages raw = load_idx_images(find_idx_file(dir, img_stem));
  std::vector<int> labels = load_idx_labels(find_idx_file(dir, lab_stem));
  return assemble_dataset(normalize(raw.pixels), std::move(labels), num_classes,
                          name + (train ? "/train" : "/test"));
}

namespace {

std::vector<int> route_and_shuffle(const Dataset& d, const std::vector<bool>& in_task,
                                   std::uint64_t seed) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(d.size()); ++i)
    if (in_task[d.labels[i]]) idx.push_back(i);
  auto rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

TaskStream split_tasks(std::shared_ptr<const Dataset> train, std::shared_ptr<const Dataset> test,
                       int T, const std::vector<int>& class_order, std::uint64_t seed) {
  const int K = train->num_classes;
  if (T < 1) throw std::invalid_argument("task count must be >= 1");
  if (T > K)
    throw std::invalid_argument("cannot split " + std::to_string(K) + " classes into " +
                                std::to_string(T) + " tasks");
  if (static_cast<int>(class_order.size()) != K)
    throw std::invalid_argument("class order must be a permutation of all classes");
  {
    std::vector<bool> seen(K, false);
    for (int c : class_order) {
      if (c < 0 || c >= K || seen[c])
        throw std::invalid_argument("class order is not a permutation");
      seen[c] = true;
    }
  }

  TaskStream stream;
  stream.class_order = class_order;
  stream.num_classes = K;
  const int base = K / T, rem = K % T;
  int pos = 0;
  for (int t = 0; t < T; ++t) {
    const int len = base + (t < rem ? 1 : 0);  // remainder classes go to the earliest tasks
    Task task;
    task.class_set.assign(class_order.begin() + pos, class_order.begin() + pos + len);
    pos += len;
    std::vector<bool> in_task(K, false);
    for (int c : task.class_set) in_task[c] = true;
    task.train = {train, route_and_shuffle(*train, in_task,
                                           mix_seed(seed, Stream::task_shuffle, t, 0))};
    task.test = {test, route_and_shuffle(*test, in_task,
                                         mix_seed(seed, Stream::task_shuffle, t, 1))};
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

Dataset make_synthetic(int num_classes, int per_class, int input_dim, double blob_spread,
                       std::uint64_t seed, std::string name) {
  if (num_classes < 1 || per_class < 1 || input_dim < 1)
    throw std::invalid_argument("synthetic dataset sizes must be positive");
  if (num_classes > input_dim)
    throw std::invalid_argument("synthetic dataset needs num_classes <= input_dim");
  const int n = num_classes * per_class;
  Matrix x(n, input_dim);
  std::vector<int> y(n);
  auto rng = make_rng(seed, Stream::synthetic);
  std::normal_distribution<double> noise(0.0, blob_spread);
  // class c's center sits at 0.9 on axis c and 0.1 elsewhere
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const int row = c * per_class + i;
      y[row] = c;
      for (int j = 0; j < input_dim; ++j) {
        const double center = (j == c) ? 0.9 : 0.1;
        x(row, j) = std::clamp(center + noise(rng), 0.0, 1.0);
      }
    }
  }
  return assemble_dataset(std::move(x), std::move(y), num_classes, std::move(name));
}

std::vector<int> identity_class_order(int num_classes) {
  std::vector<int> order(num_classes);
  std::iota(order.begin(), order.end(), 0);
  return order;
}

std::vector<int> shuffled_class_order(int num_classes, std::uint64_t seed) {
  auto order = identity_class_order(num_classes);
  auto rng = make_rng(seed, Stream::class_order);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace evocl
