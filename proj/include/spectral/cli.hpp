#pragma once

// Command implementations behind the spectral_cli executable. Each command
// writes human-readable output to `out`, diagnostics to `err`, and returns
// a process exit code.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "spectral/checkpoint.hpp"
#include "spectral/data.hpp"
#include "spectral/experiment.hpp"
#include "spectral/layers.hpp"
#include "spectral/model.hpp"
#include "spectral/training.hpp"
#include "spectral/transforms.hpp"

namespace spectral {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1, ///< I/O and other runtime errors
  kExitUsage = 2,
  kExitBudget = 3,
  kExitGradcheck = 4,
  kExitDiverged = 5,
};

/// Bad command-line input.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Weight analysis

[[nodiscard]] inline double population_stddev(const RealMatrix &m) {
  if (m.size() == 0)
    throw std::invalid_argument("population_stddev: empty matrix");
  double mean = 0.0;
  for (double v : m.data())
    mean += v;
  mean /= static_cast<double>(m.size());
  double s = 0.0;
  for (double v : m.data())
    s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(m.size()));
}

/// (after - before) / sigma(before), sigma the population std of all entries of `before`.
[[nodiscard]] inline RealMatrix normalized_difference(const RealMatrix &before, const RealMatrix &after) {
  if (before.rows() != after.rows() || before.cols() != after.cols())
    throw std::invalid_argument("normalized_difference: shapes differ");
  const double sigma = population_stddev(before);
  if (!(sigma > 0.0))
    throw std::invalid_argument("normalized_difference: reference matrix is constant");
  RealMatrix d(before.rows(), before.cols());
  for (std::size_t i = 0; i < d.size(); ++i)
    d.data()[i] = (after.data()[i] - before.data()[i]) / sigma;
  return d;
}

/// Min-max scale to 0..255; a constant matrix maps to all zeros.
[[nodiscard]] inline std::vector<unsigned char> minmax_bytes(const RealMatrix &m) {
  const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
  const double range = m.size() ? *hi - *lo : 0.0;
  std::vector<unsigned char> px(m.size(), 0);
  if (range > 0.0)
    for (std::size_t i = 0; i < m.size(); ++i)
      px[i] = static_cast<unsigned char>(std::lround(255.0 * (m.data()[i] - *lo) / range));
  return px;
}

inline void write_minmax_pgm(const std::string &path, const RealMatrix &m) {
  write_pnm(path, m.rows(), m.cols(), 1, minmax_bytes(m));
}

// ---------------------------------------------------------------------------
// Helpers

namespace cli_detail {

inline std::vector<std::size_t> parse_shape(const std::string &s) {
  std::vector<std::size_t> dims;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t x = s.find('x', pos);
    const std::string part = s.substr(pos, x == std::string::npos ? std::string::npos : x - pos);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw UsageError("bad shape '" + s + "', expected e.g. 2x3x8x8");
    const auto v = std::stoull(part);
    if (v == 0)
      throw UsageError("bad shape '" + s + "': dimensions must be positive");
    dims.push_back(static_cast<std::size_t>(v));
    if (x == std::string::npos)
      break;
    pos = x + 1;
  }
  if (dims.empty() || dims.size() > 4)
    throw UsageError("bad shape '" + s + "': expected 1 to 4 dimensions");
  return dims;
}

/// Spatial shapes HxW and CxHxW gain a batch of 2; NxCxHxW is taken as is.
inline Tensor::Shape batch_shape(const std::vector<std::size_t> &d, std::size_t default_channels) {
  switch (d.size()) {
  case 2: return {2, default_channels, d[0], d[1]};
  case 3: return {2, d[0], d[1], d[2]};
  case 4: return {d[0], d[1], d[2], d[3]};
  default: throw UsageError("this layer needs an HxW, CxHxW or NxCxHxW shape");
  }
}

inline std::size_t thread_count() {
  if (const char *env = std::getenv("SPECTRAL_THREADS")) {
    char *end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0)
      return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::string file_stem(const std::string &name) {
  std::string s;
  for (char c : name)
    s += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return s;
}

inline void write_text(const std::filesystem::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open " + p.string() + " for writing");
  out << text;
  if (!out)
    throw std::runtime_error("write failed: " + p.string());
}

inline void write_binary(const std::filesystem::path &p, const std::vector<unsigned char> &b) {
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open " + p.string() + " for writing");
  out.write(reinterpret_cast<const char *>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out)
    throw std::runtime_error("write failed: " + p.string());
}

/// Map exceptions to exit codes; everything a command throws ends up here.
template <class F> int guarded(std::ostream &err, F &&body) {
  try {
    return body();
  } catch (const SchemaError &e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError &e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InfeasibleBudget &e) {
    err << "budget error: " << e.what() << '\n';
    return kExitBudget;
  } catch (const std::invalid_argument &e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

} // namespace cli_detail

// ---------------------------------------------------------------------------
// init-matrix

struct InitMatrixArgs {
  std::string kind = "dct2";
  std::size_t rows = 0; ///< K for forward kinds, N for inverse kinds
  std::size_t cols = 0;
  std::optional<std::size_t> rows2{}; ///< second matrix for the horizontal axis
  std::optional<std::size_t> cols2{};
  std::string out_dir = ".";
  std::uint64_t seed = 0; ///< rnd only
};

/// Writes <kind>.csv (or <kind>_re.csv / <kind>_im.csv); with a second pair
/// of dimensions, <kind>_W1*.csv and <kind>_W2*.csv.
inline int cmd_init_matrix(const InitMatrixArgs &a, std::ostream &out, std::ostream &err) {
  return cli_detail::guarded(err, [&] {
    TransformKind kind;
    try {
      kind = transform_kind_from_string(a.kind);
    } catch (const std::invalid_argument &e) {
      throw UsageError(e.what());
    }
    if (a.rows == 0 || a.cols == 0 || a.rows2.value_or(1) == 0 || a.cols2.value_or(1) == 0)
      throw UsageError("init-matrix: dimensions must be positive");
    if (a.rows2.has_value() != a.cols2.has_value())
      throw UsageError("init-matrix: the second matrix needs both L and M");
    std::filesystem::create_directories(a.out_dir);
    const std::string base = (std::filesystem::path(a.out_dir) / a.kind).string();

    auto emit = [&](const std::string &stem, std::size_t r, std::size_t c, std::uint64_t salt) {
      std::vector<std::pair<std::string, RealMatrix>> files;
      switch (kind) {
      case TransformKind::DctII: files.push_back({stem, build_dct2(r, c)}); break;
      case TransformKind::DctIIIInverse: files.push_back({stem, build_dct3_inverse(r, c)}); break;
      case TransformKind::RandomNormalized:
        files.push_back({stem, init_random_normalized(r, c, derive_key(a.seed, salt))});
        break;
      case TransformKind::DftForward:
      case TransformKind::DftInverse: {
        const ComplexPair p = kind == TransformKind::DftForward ? build_dft(r, c) : build_idft(r, c);
        files.push_back({stem + "_re", p.re});
        files.push_back({stem + "_im", p.im});
        break;
      }
      }
      for (const auto &[name, m] : files) {
        write_csv(name + ".csv", m);
        out << name << ".csv (" << m.rows() << "x" << m.cols() << ")\n";
      }
    };
    if (a.rows2) {
      emit(base + "_W1", a.rows, a.cols, 1);
      emit(base + "_W2", *a.rows2, *a.cols2, 2);
    } else {
      emit(base, a.rows, a.cols, 1);
    }
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------
// params

struct ParamsRow {
  std::string model;
  std::size_t total = 0;
  bool within = false;
  std::string note;
};

/// Fit (when enabled) and count every model in the file.
[[nodiscard]] inline std::vector<ParamsRow> audit_params(Experiment &x, std::ostream *tables) {
  resolve_model_shapes(x);
  std::vector<ParamsRow> rows;
  for (const auto &m : x.models) {
    ParamsRow row;
    row.model = m.display_name();
    try {
      ModelConfig c = m;
      if (c.fit_budget)
        c = fit_budget(c).config;
      const ModelDescription d = describe_model(c);
      row.total = d.total_params;
      row.within = within_budget(row.total, c.budget, c.budget_tol);
      std::ostringstream ch;
      ch << "channels " << c.stage_channels[0] << "," << c.stage_channels[1] << ","
         << c.stage_channels[2];
      if (c.arch == Arch::BaselineDeep)
        ch << " extra " << c.extra_channels;
      row.note = ch.str();
      if (tables)
        *tables << d.to_text() << ch.str() << "\n\n";
    } catch (const ConfigError &e) {
      row.note = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

inline int cmd_params(const std::string &experiment_path, std::ostream &out, std::ostream &err) {
  return cli_detail::guarded(err, [&] {
    Experiment x = load_experiment(experiment_path);
    const auto rows = audit_params(x, &out);
    bool all = true;
    out << std::left << std::setw(22) << "model" << std::right << std::setw(10) << "params"
        << "  status\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto &r = rows[i];
      const auto &m = x.models[i];
      all = all && r.within;
      out << std::left << std::setw(22) << r.model << std::right << std::setw(10) << r.total
          << "  " << (r.within ? "ok" : "OUTSIDE") << " (budget " << m.budget << " +/- "
          << m.budget_tol * 100.0 << "%)";
      if (!r.within)
        out << "  " << r.note;
      out << '\n';
    }
    return static_cast<int>(all ? kExitOk : kExitBudget);
  });
}

// ---------------------------------------------------------------------------
// gradcheck

constexpr double kGradcheckTolerance = 1e-5;
constexpr double kGradcheckEpsilon = 1e-6;

inline const std::vector<std::string> &gradcheck_kinds() {
  static const std::vector<std::string> kinds{
      "conv",
      "leaky-relu",
      "matrix-transform-dct",
      "matrix-transform-idct",
      "matrix-transform-rnd",
      "matrix-transform-dft",
      "matrix-transform-dft-amplitude",
      "matrix-transform-idft",
      "gap",
      "dense",
  };
  return kinds;
}

inline int cmd_gradcheck(const std::string &kind, const std::string &shape, std::uint64_t seed,
                         std::ostream &out, std::ostream &err) {
  return cli_detail::guarded(err, [&] {
    const auto &kinds = gradcheck_kinds();
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
      std::string list;
      for (const auto &k : kinds)
        list += (list.empty() ? "" : ", ") + k;
      throw UsageError("unknown layer kind '" + kind + "' (known: " + list + ")");
    }
    const auto dims = cli_detail::parse_shape(shape);
    CounterRng rng(derive_key(seed, 0x6C));
    std::unique_ptr<Layer> layer;
    Tensor::Shape in_shape;
    bool away_from_zero = false;

    const std::string prefix = "matrix-transform-";
    if (kind == "conv") {
      in_shape = cli_detail::batch_shape(dims, 1);
      ConvSpec s;
      s.in_channels = in_shape[1];
      s.out_channels = 3;
      s.padding = 1;
      s.bias = true;
      layer = std::make_unique<Conv2d>(s, seed);
    } else if (kind == "leaky-relu") {
      in_shape = Tensor::Shape(dims.begin(), dims.end());
      layer = std::make_unique<LeakyRelu>(0.01);
      away_from_zero = true;
    } else if (kind.starts_with(prefix)) {
      const std::string t = kind.substr(prefix.size());
      TransformSpec s;
      s.seed = seed;
      std::size_t channels = 1;
      if (t == "dct") {
        s.kind = TransformKind::DctII;
      } else if (t == "idct") {
        s.kind = TransformKind::DctIIIInverse;
      } else if (t == "rnd") {
        s.kind = TransformKind::RandomNormalized;
      } else if (t == "dft" || t == "dft-amplitude") {
        s.kind = TransformKind::DftForward;
        s.output = t == "dft" ? ComplexOutput::Concat : ComplexOutput::Amplitude;
        // The modulus has a kink at zero.
        away_from_zero = t == "dft-amplitude";
      } else {
        s.kind = TransformKind::DftInverse;
        channels = 2;
      }
      in_shape = cli_detail::batch_shape(dims, channels);
      s.height = in_shape[2];
      s.width = in_shape[3];
      layer = std::make_unique<MatrixTransformLayer>(s);
    } else if (kind == "gap") {
      in_shape = cli_detail::batch_shape(dims, 3);
      layer = std::make_unique<GlobalAvgPool>();
    } else {
      if (dims.size() < 2)
        throw UsageError("dense needs an NxD (or NxCxHxW) shape");
      std::size_t features = 1;
      for (std::size_t i = 1; i < dims.size(); ++i)
        features *= dims[i];
      in_shape = {dims[0], features};
      layer = std::make_unique<Dense>(features, 3, true, seed);
    }

    Tensor input(in_shape);
    for (double &v : input.data()) {
      if (away_from_zero) {
        const double mag = rng.uniform(0.1, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
      } else {
        v = rng.uniform(-1.0, 1.0);
      }
    }
    const double worst = finite_difference_check(*layer, input, kGradcheckEpsilon);
    const bool ok = worst < kGradcheckTolerance;
    out << kind << " input " << Tensor::shape_string(in_shape) << " seed " << seed
        << ": max relative error " << worst << (ok ? " (ok)" : " (FAIL)") << '\n';
    return static_cast<int>(ok ? kExitOk : kExitGradcheck);
  });
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string experiment;
  std::optional<std::string> output_dir{}; ///< overrides the file's output_dir
  std::optional<std::size_t> threads{};  ///< overrides SPECTRAL_THREADS
};

[[nodiscard]] inline std::string run_stem(const ModelConfig &m, std::size_t grid_index,
                                          std::uint64_t seed) {
  return cli_detail::file_stem(m.display_name()) + "_g" + std::to_string(grid_index) + "_s" +
         std::to_string(seed);
}

/// Runs the experiment matrix. Outputs under output_dir:
///   curves/<model>_g<grid>_s<seed>.csv  one per run
///   summary.csv                          one row per model at its best grid point
///   checkpoints/<run>.init.spck, <run>.final.spck   when "checkpoints" is set
///   manifest.csv                         every file above plus itself
inline int cmd_train(const TrainArgs &a, std::ostream &out, std::ostream &err) {
  namespace fs = std::filesystem;
  return cli_detail::guarded(err, [&] {
    Experiment x = load_experiment(a.experiment);
    Dataset data = load_experiment_dataset(x);
    Splits s = split(data, x.split);
    normalize_splits(s);

    std::vector<ModelConfig> models;
    for (auto m : x.models) {
      if (m.fit_budget)
        m = fit_budget(m).config;
      models.push_back(m);
    }

    const auto points = x.grid.points();
    const std::size_t threads = a.threads.value_or(cli_detail::thread_count());
    out << "training " << models.size() << " model(s) x " << points.size() << " grid point(s) x "
        << x.seeds.size() << " seed(s) on " << threads << " thread(s)\n";

    std::vector<std::vector<unsigned char>> finals;
    RunHook hook;
    if (x.checkpoints) {
      finals.resize(models.size() * points.size() * x.seeds.size());
      hook = [&finals](std::size_t i, const RunResult &, Model &m) {
        finals[i] = encode_checkpoint(model_arrays(m));
      };
    }
    const MatrixResult res =
        run_matrix(models, x.train, x.seeds, x.grid, s.train, s.val, x.theta, threads, hook);

    const fs::path dir = a.output_dir.value_or(x.output_dir);
    fs::create_directories(dir / "curves");
    if (x.checkpoints)
      fs::create_directories(dir / "checkpoints");
    std::ostringstream manifest;
    manifest << "file,kind,model,grid_index,seed,config_hash\n";
    auto record = [&](const fs::path &rel, const std::string &kind, const std::string &model,
                      const std::string &grid, const std::string &seed, const std::string &hash) {
      manifest << rel.generic_string() << ',' << kind << ',' << model << ',' << grid << ',' << seed
               << ',' << hash << '\n';
    };

    std::size_t diverged = 0;
    for (std::size_t i = 0; i < res.runs.size(); ++i) {
      const RunResult &r = res.runs[i];
      const ModelConfig &m = models[r.model_index];
      const std::string stem = run_stem(m, r.grid_index, r.seed);
      const std::string g = std::to_string(r.grid_index), sd = std::to_string(r.seed);
      std::string csv = r.record.to_csv();
      if (r.diverged) {
        ++diverged;
        csv += "# diverged: " + r.error + '\n';
        err << "warning: " << m.display_name() << " lr=" << r.point.lr << " l2=" << r.point.l2
            << " seed=" << r.seed << ": " << r.error << '\n';
      }
      const fs::path curve = fs::path("curves") / (stem + ".csv");
      cli_detail::write_text(dir / curve, csv);
      record(curve, "curve", m.display_name(), g, sd, r.record.config_hash);
      if (x.checkpoints && !r.diverged) {
        Model init = build_model(m, model_seed(r.seed));
        const fs::path p0 = fs::path("checkpoints") / (stem + ".init.spck");
        const fs::path p1 = fs::path("checkpoints") / (stem + ".final.spck");
        cli_detail::write_binary(dir / p0, encode_checkpoint(model_arrays(init)));
        cli_detail::write_binary(dir / p1, finals[i]);
        record(p0, "checkpoint", m.display_name(), g, sd, r.record.config_hash);
        record(p1, "checkpoint", m.display_name(), g, sd, r.record.config_hash);
      }
    }
    cli_detail::write_text(dir / "summary.csv", res.summary_csv());
    record("summary.csv", "summary", "", "", "", x.hash);
    record("manifest.csv", "manifest", "", "", "", x.hash);
    cli_detail::write_text(dir / "manifest.csv", manifest.str());

    out << "theta " << x.theta << "\n" << res.summary_csv();
    out << "wrote " << dir.string() << '\n';
    if (diverged == res.runs.size()) {
      err << "error: every run diverged\n";
      return static_cast<int>(kExitDiverged);
    }
    if (diverged)
      err << "warning: " << diverged << " of " << res.runs.size() << " runs diverged\n";
    return static_cast<int>(kExitOk);
  });
}

// ---------------------------------------------------------------------------
// export-weights

struct ExportArgs {
  std::string checkpoint;
  std::size_t layer = 0;
  std::string out_dir = ".";
  std::optional<std::string> before{}; ///< checkpoint of the same model before training
};

/// Arrays of one transform layer: name suffix ("W1" or "W1.re"/"W1.im") to matrix.
[[nodiscard]] inline std::vector<std::pair<std::string, RealMatrix>>
transform_w1(const std::vector<NamedArray> &arrays, std::size_t layer) {
  const std::string prefix = "layer" + std::to_string(layer) + "/";
  std::vector<std::pair<std::string, RealMatrix>> out;
  std::string kind;
  for (const auto &a : arrays) {
    if (!a.name.starts_with(prefix))
      continue;
    const std::string rest = a.name.substr(prefix.size());
    const auto slash = rest.rfind('/');
    kind = rest.substr(0, slash);
    const std::string param = rest.substr(slash + 1);
    if (param.starts_with("W1"))
      out.push_back({param, a.value.to_matrix()});
  }
  if (kind.empty())
    throw UsageError("layer " + std::to_string(layer) + " has no parameters in the checkpoint");
  if (!kind.starts_with("transform:"))
    throw UsageError("layer " + std::to_string(layer) + " is a " + kind +
                     " layer, not a matrix transform");
  return out;
}

inline int cmd_export_weights(const ExportArgs &a, std::ostream &out, std::ostream &err) {
  namespace fs = std::filesystem;
  return cli_detail::guarded(err, [&] {
    const auto after = transform_w1(load_checkpoint(a.checkpoint), a.layer);
    std::vector<std::pair<std::string, RealMatrix>> before;
    if (a.before)
      before = transform_w1(load_checkpoint(*a.before), a.layer);
    fs::create_directories(a.out_dir);
    const std::string stem = "layer" + std::to_string(a.layer) + "_";
    for (std::size_t i = 0; i < after.size(); ++i) {
      std::string name = after[i].first;
      std::replace(name.begin(), name.end(), '.', '_');
      const fs::path base = fs::path(a.out_dir) / (stem + name);
      write_csv(base.string() + ".csv", after[i].second);
      write_minmax_pgm(base.string() + ".pgm", after[i].second);
      out << base.string() << ".csv\n" << base.string() << ".pgm\n";
      if (a.before) {
        const RealMatrix d = normalized_difference(before.at(i).second, after[i].second);
        const std::string dp = base.string() + "_normdiff";
        write_csv(dp + ".csv", d);
        write_minmax_pgm(dp + ".pgm", d);
        double mean = 0.0;
        for (double v : d.data())
          mean += v;
        mean /= static_cast<double>(d.size());
        out << dp << ".csv\n" << dp << ".pgm\n" << "mean normalized difference " << mean << '\n';
      }
    }
    return static_cast<int>(kExitOk);
  });
}

} // namespace spectral
