#include "ostr/datasets.hpp"

#include "ostr/json_util.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace ostr {

namespace {

using Json = nlohmann::json;

constexpr std::size_t kBarLength = 5;
// Checker contrast is drawn per image from [kMinContrast, 1] so noise can mask it.
constexpr double kMinContrast = 0.25;

enum SplitStream : std::uint64_t { kTrain = 0x7261696eULL, kVal = 0x76616cULL, kTest = 0x74657374ULL };

// Balanced labels (counts differ by at most one) in random order.
std::vector<int> balanced_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

struct Direction {
  int dy, dx;
};

Direction bar_direction(std::size_t classes, int label) {
  static constexpr Direction four[] = {{0, 1}, {-1, 1}, {1, 0}, {-1, -1}};
  static constexpr Direction two[] = {{0, 1}, {1, 0}};
  return classes == 2 ? two[label] : four[label];
}

Split make_bars_split(const BarsOptions& o, std::size_t n, std::uint64_t stream) {
  Rng rng = make_rng(o.seed, stream);
  Split s;
  s.labels = balanced_labels(n, o.classes, rng);
  s.images = ad::Tensor({n, 1, o.height, o.width}, 0.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int half = static_cast<int>(kBarLength / 2);
  const int H = static_cast<int>(o.height), W = static_cast<int>(o.width);
  for (std::size_t i = 0; i < n; ++i) {
    const Direction d = bar_direction(o.classes, s.labels[i]);
    // Centre range keeping every bar pixel inside the image.
    const int ylo = half * std::abs(d.dy), yhi = H - 1 - half * std::abs(d.dy);
    const int xlo = half * std::abs(d.dx), xhi = W - 1 - half * std::abs(d.dx);
    int cy = H / 2, cx = W / 2;
    if (o.random_position) {
      cy = std::uniform_int_distribution<int>(ylo, yhi)(rng);
      cx = std::uniform_int_distribution<int>(xlo, xhi)(rng);
    }
    double* img = s.images.values().data() + i * o.height * o.width;
    for (int t = -half; t <= half; ++t) img[(cy + t * d.dy) * W + (cx + t * d.dx)] = 1.0;
    if (o.noise > 0.0) {
      for (std::size_t p = 0; p < o.height * o.width; ++p) img[p] += o.noise * noise(rng);
    }
  }
  return s;
}

Split make_checker_split(const CheckerOptions& o, std::size_t n, std::uint64_t stream) {
  static constexpr int side[] = {1, 3};
  Rng rng = make_rng(o.seed, stream);
  Split s;
  s.labels = balanced_labels(n, o.classes, rng);
  s.images = ad::Tensor({n, 1, o.height, o.width}, 0.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int q = side[s.labels[i]];
    std::uniform_int_distribution<int> phase(0, 2 * q - 1);
    const int py = phase(rng), px = phase(rng);
    const double contrast = std::uniform_real_distribution<double>(kMinContrast, 1.0)(rng);
    double* img = s.images.values().data() + i * o.height * o.width;
    for (std::size_t y = 0; y < o.height; ++y) {
      for (std::size_t x = 0; x < o.width; ++x) {
        const int parity = ((static_cast<int>(y) + py) / q + (static_cast<int>(x) + px) / q) % 2;
        double v = parity == 0 ? contrast : -contrast;
        if (o.noise > 0.0) v += o.noise * noise(rng);
        img[y * o.width + x] = v;
      }
    }
  }
  return s;
}


} // namespace

Dataset gen_oriented_bars(const BarsOptions& o) {
  if (o.classes != 2 && o.classes != 4) throw std::invalid_argument("gen_oriented_bars: classes must be 2 or 4");
  if (o.height < kBarLength || o.width < kBarLength) throw std::invalid_argument("gen_oriented_bars: H and W must be >= 5");
  Dataset d;
  d.generator_id = "oriented_bars";
  d.seed = o.seed;
  d.classes = o.classes;
  d.noise_sigma = o.noise;
  d.image_shape = {1, o.height, o.width};
  d.train = make_bars_split(o, o.sizes.train, kTrain);
  d.val = make_bars_split(o, o.sizes.val, kVal);
  d.test = make_bars_split(o, o.sizes.test, kTest);
  return d;
}

Dataset gen_checker_texture(const CheckerOptions& o) {
  if (o.classes != 2) throw std::invalid_argument("gen_checker_texture: classes must be 2");
  if (o.height < 3 || o.width < 3) throw std::invalid_argument("gen_checker_texture: H and W must be >= 3");
  Dataset d;
  d.generator_id = "checker_texture";
  d.seed = o.seed;
  d.classes = o.classes;
  d.noise_sigma = o.noise;
  d.image_shape = {1, o.height, o.width};
  d.train = make_checker_split(o, o.sizes.train, kTrain);
  d.val = make_checker_split(o, o.sizes.val, kVal);
  d.test = make_checker_split(o, o.sizes.test, kTest);
  return d;
}

Json to_json(const DatasetConfig& c) {
  return Json{{"generator", c.generator},
              {"seed", c.seed},
              {"train", c.sizes.train},
              {"val", c.sizes.val},
              {"test", c.sizes.test},
              {"classes", c.classes},
              {"height", c.height},
              {"width", c.width},
              {"noise", c.noise},
              {"random_position", c.random_position}};
}

DatasetConfig dataset_config_from_json(const Json& j) {
  check_fields(j, "dataset",
               {"generator", "seed", "train", "val", "test", "classes", "height", "width", "noise", "random_position"});
  DatasetConfig c;
  try {
    c.generator = j.at("generator").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.sizes.train = j.at("train").get<std::size_t>();
    c.sizes.val = j.at("val").get<std::size_t>();
    c.sizes.test = j.at("test").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.height = j.at("height").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.noise = j.at("noise").get<double>();
    c.random_position = j.at("random_position").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("dataset: ") + e.what());
  }
  if (c.generator != "oriented_bars" && c.generator != "checker_texture") {
    throw std::invalid_argument("dataset: unknown generator '" + c.generator + "'");
  }
  return c;
}

Dataset make_dataset(const DatasetConfig& c) {
  if (c.generator == "oriented_bars") {
    return gen_oriented_bars({c.seed, c.sizes, c.classes, c.height, c.width, c.noise, c.random_position});
  }
  if (c.generator == "checker_texture") {
    return gen_checker_texture({c.seed, c.sizes, c.classes, c.height, c.width, c.noise});
  }
  throw std::invalid_argument("dataset: unknown generator '" + c.generator + "'");
}

Batch gather(const Split& split, std::span<const std::size_t> indices) {
  const auto& s = split.images.shape();
  const std::size_t per = s[1] * s[2] * s[3];
  Batch b;
  b.images = ad::Tensor({indices.size(), s[1], s[2], s[3]});
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= split.size()) throw std::out_of_range("gather: index out of range");
    std::copy_n(split.images.values().data() + src * per, per, b.images.values().data() + i * per);
    b.labels.push_back(split.labels[src]);
  }
  return b;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, Rng* rng) {
  if (batch_size < 2) throw std::invalid_argument("batch_indices: batch size must be >= 2");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (rng) std::shuffle(order.begin(), order.end(), *rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Batch> make_batches(const Split& split, std::size_t batch_size, Rng* rng) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(split.size(), batch_size, rng)) out.push_back(gather(split, idx));
  return out;
}

void save_dataset(const Dataset& d, const std::string& prefix) {
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("save_dataset: cannot open " + prefix + ".bin");
  std::size_t doubles = 0;
  auto write_split = [&](const Split& s) {
    bin.write(reinterpret_cast<const char*>(s.images.values().data()),
              static_cast<std::streamsize>(s.images.size() * sizeof(double)));
    for (int l : s.labels) {
      const double v = l;
      bin.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    doubles += s.images.size() + s.labels.size();
  };
  write_split(d.train);
  write_split(d.val);
  write_split(d.test);
  if (!bin) throw std::runtime_error("save_dataset: write failed for " + prefix + ".bin");

  Json side{{"generator_id", d.generator_id},
            {"seed", d.seed},
            {"classes", d.classes},
            {"noise_sigma", d.noise_sigma},
            {"image_shape", d.image_shape},
            {"splits", {{"train", d.train.size()}, {"val", d.val.size()}, {"test", d.test.size()}}},
            {"layout", "train.images train.labels val.images val.labels test.images test.labels; float64 little-endian"},
            {"doubles", doubles}};
  std::ofstream js(prefix + ".json");
  if (!js) throw std::runtime_error("save_dataset: cannot open " + prefix + ".json");
  js << side.dump(2) << '\n';
}

Dataset load_dataset(const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw std::runtime_error("load_dataset: cannot open " + prefix + ".json");
  Json side = Json::parse(js);
  Dataset d;
  d.generator_id = side.at("generator_id").get<std::string>();
  d.seed = side.at("seed").get<std::uint64_t>();
  d.classes = side.at("classes").get<std::size_t>();
  d.noise_sigma = side.at("noise_sigma").get<double>();
  d.image_shape = side.at("image_shape").get<std::array<std::size_t, 3>>();
  const std::size_t per = d.image_shape[0] * d.image_shape[1] * d.image_shape[2];

  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_dataset: cannot open " + prefix + ".bin");
  auto read_split = [&](Split& s, std::size_t n) {
    s.images = ad::Tensor({n, d.image_shape[0], d.image_shape[1], d.image_shape[2]});
    bin.read(reinterpret_cast<char*>(s.images.values().data()), static_cast<std::streamsize>(n * per * sizeof(double)));
    s.labels.resize(n);
    for (auto& l : s.labels) {
      double v = 0;
      bin.read(reinterpret_cast<char*>(&v), sizeof v);
      l = static_cast<int>(v);
    }
    if (!bin) throw std::runtime_error("load_dataset: truncated " + prefix + ".bin");
  };
  const auto& sp = side.at("splits");
  read_split(d.train, sp.at("train").get<std::size_t>());
  read_split(d.val, sp.at("val").get<std::size_t>());
  read_split(d.test, sp.at("test").get<std::size_t>());
  if (bin.peek() != std::char_traits<char>::eof()) throw std::runtime_error("load_dataset: trailing bytes in " + prefix + ".bin");
  return d;
}

} // namespace ostr
