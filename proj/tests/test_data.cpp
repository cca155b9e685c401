#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include <zlib.h>

#include "evocl/data.hpp"

using namespace evocl;

namespace {

std::string data_root() {
  if (const char* env = std::getenv("EVOCL_DATA_DIR")) return env;
  return "/root/data";
}

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

std::string image_idx_bytes(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                            const std::vector<std::uint8_t>& payload) {
  std::string out;
  put_be32(out, 0x00000803);
  put_be32(out, n);
  put_be32(out, rows);
  put_be32(out, cols);
  out.append(payload.begin(), payload.end());
  return out;
}

std::string label_idx_bytes(std::uint32_t n, const std::vector<std::uint8_t>& payload) {
  std::string out;
  put_be32(out, 0x00000801);
  put_be32(out, n);
  out.append(payload.begin(), payload.end());
  return out;
}

std::string temp_file(const std::string& name) { return "/tmp/evocl_test_" + name; }

void write_raw(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_gz(const std::string& path, const std::string& bytes) {
  gzFile f = gzopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
}

Dataset tiny_dataset(int num_classes, int per_class, std::uint64_t seed) {
  return make_synthetic(num_classes, per_class, std::max(num_classes, 4), 0.05, seed);
}

}  // namespace

TEST_CASE("idx image round trip, raw and gzip") {
  const std::vector<std::uint8_t> payload = {0, 1, 2, 3, 4, 5, 6, 7};
  const std::string bytes = image_idx_bytes(2, 2, 2, payload);

  const std::string raw = temp_file("imgs.idx");
  write_raw(raw, bytes);
  const RawImages a = load_idx_images(raw);
  CHECK(a.rows == 2);
  CHECK(a.cols == 2);
  REQUIRE(a.pixels.rows() == 2);
  REQUIRE(a.pixels.cols() == 4);
  for (int i = 0; i < 8; ++i) CHECK(a.pixels(i / 4, i % 4) == payload[i]);

  const std::string gz = temp_file("imgs.idx.gz");
  write_gz(gz, bytes);
  const RawImages b = load_idx_images(gz);
  CHECK(b.pixels == a.pixels);
  std::remove(raw.c_str());
  std::remove(gz.c_str());
}

TEST_CASE("idx label round trip and validation") {
  const std::string path = temp_file("labels.idx");
  write_raw(path, label_idx_bytes(3, {2, 0, 1}));
  CHECK(load_idx_labels(path) == std::vector<int>{2, 0, 1});
  std::remove(path.c_str());
}

TEST_CASE("idx loaders reject wrong magic numbers") {
  const std::string img_in_lbl = temp_file("magic1.idx");
  write_raw(img_in_lbl, image_idx_bytes(1, 1, 1, {0}));
  CHECK_THROWS_AS(load_idx_labels(img_in_lbl), DataError);

  const std::string lbl_in_img = temp_file("magic2.idx");
  write_raw(lbl_in_img, label_idx_bytes(1, {0}));
  CHECK_THROWS_AS(load_idx_images(lbl_in_img), DataError);
  std::remove(img_in_lbl.c_str());
  std::remove(lbl_in_img.c_str());
}

TEST_CASE("idx loaders reject truncated payloads") {
  const std::string path = temp_file("trunc.idx");
  write_raw(path, label_idx_bytes(10, {1, 2, 3, 4, 5}));  // header says 10, body has 5
  CHECK_THROWS_AS(load_idx_labels(path), DataError);

  write_raw(path, image_idx_bytes(3, 2, 2, std::vector<std::uint8_t>(8, 0)));
  CHECK_THROWS_AS(load_idx_images(path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("missing file is a data error") {
  CHECK_THROWS_AS(load_idx_images("/nonexistent/file.idx"), DataError);
}

TEST_CASE("normalize maps bytes into [0,1]") {
  ByteMatrix raw(1, 3);
  raw << 0, 255, 128;
  const Matrix m = normalize(raw);
  CHECK(m(0, 0) == 0.0);
  CHECK(m(0, 1) == 1.0);
  CHECK(m(0, 2) == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
}

TEST_CASE("assemble_dataset validates label range") {
  Matrix x = Matrix::Zero(2, 3);
  CHECK_THROWS_AS(assemble_dataset(x, {0, 5}, 3, "bad"), DataError);
  CHECK_THROWS_AS(assemble_dataset(x, {0, -1}, 3, "bad"), DataError);
  CHECK_THROWS_AS(assemble_dataset(x, {0}, 3, "bad"), DataError);  // count mismatch
  const Dataset d = assemble_dataset(x, {0, 2}, 3, "ok");
  CHECK(d.size() == 2);
  CHECK(d.num_classes == 3);
}

TEST_CASE("mnist files load with the documented shapes") {
  const std::string dir = data_root() + "/mnist";
  const RawImages imgs = load_idx_images(dir + "/train-images-idx3-ubyte");
  CHECK(imgs.pixels.rows() == 60000);
  CHECK(imgs.rows == 28);
  CHECK(imgs.cols == 28);
  const auto labels = load_idx_labels(dir + "/train-labels-idx1-ubyte");
  CHECK(labels.size() == 60000);
  for (int v : labels) {
    CHECK(v >= 0);
    CHECK(v <= 9);
  }
  const Dataset train = load_idx_dataset(dir, "mnist", true);
  CHECK(train.size() == 60000);
  CHECK(train.inputs.minCoeff() >= 0.0);
  CHECK(train.inputs.maxCoeff() <= 1.0);
  const Dataset test = load_idx_dataset(dir, "mnist", false);
  CHECK(test.size() == 10000);
}

TEST_CASE("split_tasks: contiguous chunks and remainder-to-front") {
  auto train = std::make_shared<Dataset>(tiny_dataset(10, 12, 5));
  auto test = std::make_shared<Dataset>(tiny_dataset(10, 4, 6));

  const TaskStream t5 = split_tasks(train, test, 5, identity_class_order(10), 1);
  REQUIRE(t5.size() == 5);
  CHECK(t5.tasks[0].class_set == std::vector<int>{0, 1});
  CHECK(t5.tasks[2].class_set == std::vector<int>{4, 5});
  CHECK(t5.tasks[4].class_set == std::vector<int>{8, 9});

  const TaskStream t3 = split_tasks(train, test, 3, identity_class_order(10), 1);
  REQUIRE(t3.size() == 3);
  CHECK(t3.tasks[0].class_set.size() == 4);
  CHECK(t3.tasks[1].class_set.size() == 3);
  CHECK(t3.tasks[2].class_set.size() == 3);
}

TEST_CASE("split_tasks: partition, conservation, routing, determinism") {
  auto train = std::make_shared<Dataset>(tiny_dataset(6, 30, 7));
  auto test = std::make_shared<Dataset>(tiny_dataset(6, 10, 8));
  const std::vector<int> order = shuffled_class_order(6, 99);

  const TaskStream s = split_tasks(train, test, 4, order, 3);
  std::set<int> covered;
  int train_total = 0, test_total = 0;
  for (const Task& task : s.tasks) {
    for (int c : task.class_set) {
      CHECK(covered.count(c) == 0);  // disjoint
      covered.insert(c);
    }
    train_total += task.train.size();
    test_total += task.test.size();
    const Batch b = task.train.all();
    for (int label : b.labels)
      CHECK(std::find(task.class_set.begin(), task.class_set.end(), label) !=
            task.class_set.end());
  }
  CHECK(static_cast<int>(covered.size()) == 6);  // coverage
  CHECK(train_total == train->size());           // conservation
  CHECK(test_total == test->size());

  const TaskStream again = split_tasks(train, test, 4, order, 3);
  for (int t = 0; t < 4; ++t) {
    CHECK(s.tasks[t].train.indices == again.tasks[t].train.indices);
    CHECK(s.tasks[t].test.indices == again.tasks[t].test.indices);
  }
  const TaskStream other_seed = split_tasks(train, test, 4, order, 4);
  CHECK(s.tasks[0].train.indices != other_seed.tasks[0].train.indices);
}

TEST_CASE("split_tasks conserves mnist example counts") {
  const std::string dir = data_root() + "/mnist";
  auto train = std::make_shared<Dataset>(load_idx_dataset(dir, "mnist", true));
  auto test = std::make_shared<Dataset>(load_idx_dataset(dir, "mnist", false));
  for (int T : {2, 5, 7}) {
    const TaskStream s = split_tasks(train, test, T, identity_class_order(10), 1);
    long total = 0;
    for (const Task& task : s.tasks) total += task.train.size();
    CHECK(total == 60000);
  }
}

TEST_CASE("split_tasks input validation") {
  auto train = std::make_shared<Dataset>(tiny_dataset(4, 5, 1));
  auto test = std::make_shared<Dataset>(tiny_dataset(4, 5, 2));
  CHECK_THROWS_AS(split_tasks(train, test, 5, identity_class_order(4), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(split_tasks(train, test, 0, identity_class_order(4), 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(split_tasks(train, test, 2, {0, 1, 2}, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_tasks(train, test, 2, {0, 1, 2, 2}, 1), std::invalid_argument);
}

TEST_CASE("make_synthetic: counts, determinism, separability") {
  const Dataset d = make_synthetic(4, 50, 8, 0.01, 123);
  CHECK(d.size() == 200);
  CHECK(d.num_classes == 4);
  CHECK(d.inputs.minCoeff() >= 0.0);
  CHECK(d.inputs.maxCoeff() <= 1.0);

  const Dataset same = make_synthetic(4, 50, 8, 0.01, 123);
  CHECK(d.inputs == same.inputs);
  CHECK(d.labels == same.labels);
  const Dataset other = make_synthetic(4, 50, 8, 0.01, 124);
  CHECK(d.inputs != other.inputs);

  // nearest-center classifier, centers estimated from the data itself
  Matrix centers = Matrix::Zero(4, 8);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(4);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    centers.row(d.labels[i]) += d.inputs.row(i);
    counts(d.labels[i]) += 1;
  }
  for (int c = 0; c < 4; ++c) centers.row(c) /= counts(c);
  int correct = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    int best = 0;
    for (int c = 1; c < 4; ++c)
      if ((d.inputs.row(i) - centers.row(c)).squaredNorm() <
          (d.inputs.row(i) - centers.row(best)).squaredNorm())
        best = c;
    if (best == d.labels[i]) ++correct;
  }
  CHECK(correct == 200);

  CHECK_THROWS_AS(make_synthetic(10, 5, 4, 0.01, 1), std::invalid_argument);
}

TEST_CASE("task slices gather the right rows") {
  auto ds = std::make_shared<Dataset>(tiny_dataset(3, 4, 11));
  TaskSlice slice{ds, {0, 5, 7}};
  const Batch b = slice.gather({2, 0});
  CHECK(b.inputs.rows() == 2);
  CHECK(b.inputs.row(0) == ds->inputs.row(7));
  CHECK(b.inputs.row(1) == ds->inputs.row(0));
  CHECK(b.labels[0] == ds->labels[7]);
  const Batch all = slice.all();
  CHECK(all.inputs.rows() == 3);
}
