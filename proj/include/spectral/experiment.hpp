#pragma once

// Experiment files: a JSON document validated in full before anything runs.
//
//   {
//     "dataset":   {"kind": "synthetic" | "idx" | "patches" | "shape", ...},
//     "split":     {"train": 0.8, "val": 0.1, "test": 0.1, "seed": 1},
//     "models":    [{"arch": "Multi", "init": "DCT", ...}, ...],
//     "train":     {"epochs": 10, "batch_size": 32, "momentum": 0.9, "eval_every": 1},
//     "seeds":     [1, 2],
//     "grid":      {"lr": [0.01], "l2": [0.0]},
//     "theta":     0.9,
//     "output_dir": "runs/quickstart",
//     "checkpoints": false
//   }
//
// Unknown keys anywhere are rejected. Relative data paths resolve against
// the directory holding the experiment file.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectral/data.hpp"
#include "spectral/model.hpp"
#include "spectral/rng.hpp"
#include "spectral/training.hpp"

namespace spectral {

/// Schema violation; `path` is a JSON pointer to the offending key.
class SchemaError : public std::runtime_error {
public:
  SchemaError(const std::string &path, const std::string &what)
      : std::runtime_error("schema error at " + (path.empty() ? std::string("/") : path) + ": " +
                           what),
        path_(path) {}

  [[nodiscard]] const std::string &path() const noexcept { return path_; }

private:
  std::string path_;
};

struct DatasetSpec {
  std::string kind = "synthetic";
  // synthetic
  std::size_t n = 2000;
  std::size_t classes = 4;
  std::size_t size = 16;
  double sigma = 0.3;
  std::uint64_t seed = 1;
  bool random_phase = true;
  // idx
  std::string images;
  std::string labels;
  // patches (also uses `seed` and `n`)
  std::string image;
  std::string label_map;
  std::size_t patch = 5;
  // shape: parameter audits only
  std::array<std::size_t, 3> shape{3, 32, 32};
};

struct Experiment {
  DatasetSpec dataset;
  SplitSpec split{0.8, 0.1, 0.1, 1};
  std::vector<ModelConfig> models;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1};
  Grid grid;
  double theta = 0.9;
  std::string output_dir = "runs";
  bool checkpoints = false;
  std::string hash; ///< of the file bytes
};

namespace detail {

/// Walks one JSON object, remembering which keys were read.
class ObjectReader {
public:
  ObjectReader(const nlohmann::json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object())
      throw SchemaError(path_, "expected an object");
  }

  [[nodiscard]] bool has(const std::string &key) const { return j_.contains(key); }

  [[nodiscard]] std::string child(const std::string &key) const { return path_ + "/" + key; }

  const nlohmann::json &raw(const std::string &key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T> void get(const std::string &key, T &out) {
    if (!has(key))
      return;
    out = convert<T>(raw(key), child(key));
  }

  template <class T> void require(const std::string &key, T &out) {
    if (!has(key))
      throw SchemaError(child(key), "required key missing");
    get(key, out);
  }

  void finish() const {
    for (const auto &item : j_.items())
      if (!seen_.count(item.key()))
        throw SchemaError(child(item.key()), "unknown key");
  }

  template <class T> static T convert(const nlohmann::json &v, const std::string &path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean())
        throw SchemaError(path, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string())
        throw SchemaError(path, "expected a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number())
        throw SchemaError(path, "expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned())
        throw SchemaError(path, "expected a non-negative integer");
    }
    return v.get<T>();
  }

private:
  const nlohmann::json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class T>
std::vector<T> read_list(const nlohmann::json &v, const std::string &path, bool nonempty = true) {
  if (!v.is_array())
    throw SchemaError(path, "expected an array");
  if (nonempty && v.empty())
    throw SchemaError(path, "must not be empty");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(ObjectReader::convert<T>(v[i], path + "/" + std::to_string(i)));
  return out;
}

template <class T, std::size_t N>
std::array<T, N> read_array(const nlohmann::json &v, const std::string &path) {
  const auto list = read_list<T>(v, path);
  if (list.size() != N)
    throw SchemaError(path, "expected " + std::to_string(N) + " entries");
  std::array<T, N> out{};
  std::copy(list.begin(), list.end(), out.begin());
  return out;
}

inline DatasetSpec read_dataset(const nlohmann::json &j, const std::string &path) {
  ObjectReader r(j, path);
  DatasetSpec d;
  r.require("kind", d.kind);
  if (d.kind == "synthetic") {
    r.get("n", d.n);
    r.get("classes", d.classes);
    r.get("size", d.size);
    r.get("sigma", d.sigma);
    r.get("seed", d.seed);
    r.get("random_phase", d.random_phase);
    if (d.size == 0 || d.size % 2)
      throw SchemaError(r.child("size"), "must be a positive even number");
    if (d.classes == 0 || d.classes > d.size / 2)
      throw SchemaError(r.child("classes"), "must lie in [1, size/2]");
    if (d.sigma < 0.0)
      throw SchemaError(r.child("sigma"), "must be non-negative");
  } else if (d.kind == "idx") {
    r.require("images", d.images);
    r.require("labels", d.labels);
  } else if (d.kind == "patches") {
    r.require("image", d.image);
    r.require("label_map", d.label_map);
    r.get("patch", d.patch);
    r.get("n", d.n);
    r.get("seed", d.seed);
    if (d.patch % 2 == 0)
      throw SchemaError(r.child("patch"), "must be odd");
  } else if (d.kind == "shape") {
    if (r.has("shape"))
      d.shape = read_array<std::size_t, 3>(r.raw("shape"), r.child("shape"));
    r.get("classes", d.classes);
  } else {
    throw SchemaError(r.child("kind"), "unknown dataset kind '" + d.kind + "'");
  }
  r.finish();
  return d;
}

inline ModelConfig read_model(const nlohmann::json &j, const std::string &path) {
  ObjectReader r(j, path);
  ModelConfig c;
  std::string arch, init = "DCT", dft_output = "concat";
  r.require("arch", arch);
  r.get("init", init);
  try {
    c.arch = arch_from_string(arch);
  } catch (const std::invalid_argument &e) {
    throw SchemaError(r.child("arch"), e.what());
  }
  try {
    c.init = init_from_string(init);
  } catch (const std::invalid_argument &e) {
    throw SchemaError(r.child("init"), e.what());
  }
  r.get("name", c.name);
  if (r.has("channels"))
    c.stage_channels = read_array<std::size_t, 3>(r.raw("channels"), r.child("channels"));
  if (r.has("kernels")) {
    const auto &k = r.raw("kernels");
    const std::string kp = r.child("kernels");
    if (!k.is_array() || k.size() != 3)
      throw SchemaError(kp, "expected three [kernel, stride, padding] triples");
    for (std::size_t i = 0; i < 3; ++i) {
      const auto t = read_array<std::size_t, 3>(k[i], kp + "/" + std::to_string(i));
      c.stage_kernels[i] = {t[0], t[1], t[2]};
    }
  }
  r.get("extra_channels", c.extra_channels);
  r.get("budget", c.budget);
  r.get("budget_tol", c.budget_tol);
  r.get("fit_budget", c.fit_budget);
  r.get("leaky_slope", c.leaky_slope);
  r.get("dft_output", dft_output);
  if (dft_output == "concat")
    c.dft_output_mode = ComplexOutput::Concat;
  else if (dft_output == "amplitude")
    c.dft_output_mode = ComplexOutput::Amplitude;
  else
    throw SchemaError(r.child("dft_output"), "expected 'concat' or 'amplitude'");
  r.get("conv_bias", c.conv_bias);
  r.get("dense_bias", c.dense_bias);
  r.get("freeze_transforms", c.freeze_transforms);
  if (c.budget == 0)
    throw SchemaError(r.child("budget"), "must be positive");
  if (!(c.budget_tol > 0.0 && c.budget_tol < 1.0))
    throw SchemaError(r.child("budget_tol"), "must lie in (0, 1)");
  r.finish();
  return c;
}

inline TrainConfig read_train(const nlohmann::json &j, const std::string &path) {
  ObjectReader r(j, path);
  TrainConfig t;
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("momentum", t.momentum);
  r.get("eval_every", t.eval_every);
  r.finish();
  // The learning rate comes from the grid; validate the rest now.
  try {
    t.validate();
  } catch (const std::invalid_argument &e) {
    throw SchemaError(path, e.what());
  }
  return t;
}

} // namespace detail

/// Validate and decode an experiment document. `base_dir` anchors relative data paths.
[[nodiscard]] inline Experiment parse_experiment(const std::string &text,
                                                 const std::filesystem::path &base_dir = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
  detail::ObjectReader r(j, "");
  Experiment x;
  x.hash = hex64(fnv1a(text));

  if (!r.has("dataset"))
    throw SchemaError("/dataset", "required key missing");
  x.dataset = detail::read_dataset(r.raw("dataset"), "/dataset");
  auto anchor = [&](std::string &p) {
    if (!p.empty() && std::filesystem::path(p).is_relative())
      p = (base_dir / p).lexically_normal().string();
  };
  anchor(x.dataset.images);
  anchor(x.dataset.labels);
  anchor(x.dataset.image);
  anchor(x.dataset.label_map);

  if (r.has("split")) {
    detail::ObjectReader s(r.raw("split"), "/split");
    s.get("train", x.split.train);
    s.get("val", x.split.val);
    s.get("test", x.split.test);
    s.get("seed", x.split.seed);
    s.finish();
    const double sum = x.split.train + x.split.val + x.split.test;
    if (!(x.split.train > 0 && x.split.val > 0 && x.split.test > 0) || std::abs(sum - 1.0) > 1e-9)
      throw SchemaError("/split", "fractions must be positive and sum to 1");
  }

  if (!r.has("models"))
    throw SchemaError("/models", "required key missing");
  const auto &models = r.raw("models");
  if (!models.is_array() || models.empty())
    throw SchemaError("/models", "expected a nonempty array");
  for (std::size_t i = 0; i < models.size(); ++i)
    x.models.push_back(detail::read_model(models[i], "/models/" + std::to_string(i)));

  if (r.has("train"))
    x.train = detail::read_train(r.raw("train"), "/train");
  if (r.has("seeds"))
    x.seeds = detail::read_list<std::uint64_t>(r.raw("seeds"), "/seeds");
  if (r.has("grid")) {
    detail::ObjectReader g(r.raw("grid"), "/grid");
    if (g.has("lr"))
      x.grid.lr = detail::read_list<double>(g.raw("lr"), "/grid/lr");
    if (g.has("l2"))
      x.grid.l2 = detail::read_list<double>(g.raw("l2"), "/grid/l2");
    g.finish();
    for (std::size_t i = 0; i < x.grid.lr.size(); ++i)
      if (!(x.grid.lr[i] > 0.0))
        throw SchemaError("/grid/lr/" + std::to_string(i), "learning rate must be positive");
    for (std::size_t i = 0; i < x.grid.l2.size(); ++i)
      if (x.grid.l2[i] < 0.0)
        throw SchemaError("/grid/l2/" + std::to_string(i), "must be non-negative");
  }
  r.get("theta", x.theta);
  if (!(x.theta > 0.0 && x.theta <= 1.0))
    throw SchemaError("/theta", "must lie in (0, 1]");
  r.get("output_dir", x.output_dir);
  r.get("checkpoints", x.checkpoints);
  r.finish();

  // Models take input shape and class count from the dataset.
  std::array<std::size_t, 3> shape{};
  std::size_t classes = 0;
  const auto &d = x.dataset;
  if (d.kind == "synthetic") {
    shape = {1, d.size, d.size};
    classes = d.classes;
  } else if (d.kind == "shape") {
    shape = d.shape;
    classes = d.classes;
  }
  if (classes)
    for (auto &m : x.models) {
      m.input_shape = shape;
      m.num_classes = classes;
    }
  return x;
}

[[nodiscard]] inline Experiment load_experiment(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str(), std::filesystem::path(path).parent_path());
}

/// Materialize the dataset. File-backed kinds also fix every model's input shape.
[[nodiscard]] inline Dataset load_experiment_dataset(Experiment &x) {
  const auto &d = x.dataset;
  Dataset data;
  if (d.kind == "synthetic") {
    data = make_spectral_dataset(d.n, d.classes, d.size, d.sigma, d.seed, {d.random_phase});
  } else if (d.kind == "idx") {
    data = load_idx(d.images, d.labels);
  } else if (d.kind == "patches") {
    data = make_patch_dataset(load_pnm(d.image), load_label_map(d.label_map), d.patch, d.n, d.seed)
               .data;
  } else {
    throw SchemaError("/dataset/kind", "dataset kind 'shape' carries no samples");
  }
  if (data.empty())
    throw ConfigError("dataset has no samples");
  const auto &s = data.sample_shape();
  for (auto &m : x.models) {
    m.input_shape = {s[0], s[1], s[2]};
    m.num_classes = data.num_classes();
  }
  return data;
}

/// Fill in input shape for file-backed kinds without keeping the samples.
inline void resolve_model_shapes(Experiment &x) {
  if (x.dataset.kind == "idx" || x.dataset.kind == "patches")
    (void)load_experiment_dataset(x);
}

} // namespace spectral
