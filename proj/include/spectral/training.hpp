#pragma once

// Loss, optimizer, the seeded training loop and the multi-seed experiment
// runner that produces convergence curves and per-model summaries.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "spectral/data.hpp"
#include "spectral/errors.hpp"
#include "spectral/model.hpp"
#include "spectral/rng.hpp"
#include "spectral/tensor.hpp"

namespace spectral {

struct LossResult {
  double loss = 0.0;
  Tensor grad; ///< d loss / d logits
};

/// Mean cross entropy of softmax(logits) over the batch, max-subtracted.
[[nodiscard]] inline LossResult softmax_cross_entropy(const Tensor &logits,
                                                      std::span<const std::size_t> labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("softmax_cross_entropy: logits must be B x C");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch)
    throw std::invalid_argument("softmax_cross_entropy: label count differs from batch size");
  LossResult r{0.0, Tensor(logits.shape())};
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(labels[b]) +
                                  " out of range for " + std::to_string(classes) + " classes");
    const double *z = logits.data().data() + b * classes;
    const double zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c)
      denom += std::exp(z[c] - zmax);
    const double log_denom = std::log(denom);
    r.loss += -(z[labels[b]] - zmax - log_denom) * inv_b;
    double *g = r.grad.data().data() + b * classes;
    for (std::size_t c = 0; c < classes; ++c)
      g[c] = (std::exp(z[c] - zmax - log_denom) - (c == labels[b] ? 1.0 : 0.0)) * inv_b;
  }
  return r;
}

/// Fraction of rows whose argmax (first maximum) equals the label.
[[nodiscard]] inline double argmax_accuracy(const Tensor &logits, std::span<const std::size_t> labels) {
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (batch == 0)
    return 0.0;
  std::size_t hits = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double *z = logits.data().data() + b * classes;
    const auto best = static_cast<std::size_t>(std::max_element(z, z + classes) - z);
    hits += best == labels[b] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(batch);
}

/// g = grad + l2 * w; v = momentum * v + g; w -= lr * v; then grad = 0.
/// Frozen params are skipped but still have their gradient cleared.
inline void sgd_momentum_step(std::span<Param *const> params, std::vector<Tensor> &velocities,
                              double lr, double momentum, double l2_lambda) {
  if (velocities.size() != params.size()) {
    velocities.clear();
    for (const Param *p : params)
      velocities.emplace_back(p->value.shape());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param &p = *params[i];
    if (!p.frozen) {
      Tensor &v = velocities[i];
      if (v.shape() != p.value.shape())
        throw std::invalid_argument("sgd_momentum_step: velocity shape differs for " + p.name);
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k] + l2_lambda * p.value[k];
        v[k] = momentum * v[k] + g;
        p.value[k] -= lr * v[k];
      }
    }
    p.zero_grad();
  }
}

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double l2_lambda = 0.0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;

  void validate() const {
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
    if (batch_size == 0)
      throw std::invalid_argument("TrainConfig: batch_size must be at least 1");
    if (eval_every == 0)
      throw std::invalid_argument("TrainConfig: eval_every must be at least 1");
  }

  [[nodiscard]] std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "epochs=" << epochs << ";batch=" << batch_size << ";lr=" << learning_rate
       << ";momentum=" << momentum << ";l2=" << l2_lambda << ";seed=" << seed
       << ";eval_every=" << eval_every;
    return os.str();
  }
};

struct EpochStats {
  std::size_t epoch = 0; ///< 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0; ///< last evaluated value when this epoch was not evaluated
  bool val_evaluated = true;
  double seconds = 0.0;
};

struct RunRecord {
  std::vector<EpochStats> epochs;
  std::uint64_t seed = 0;
  std::string config_hash;

  [[nodiscard]] double final_val_acc() const { return epochs.empty() ? 0.0 : epochs.back().val_acc; }

  /// `# config-hash=...` line, then epoch,train_loss,train_acc,val_acc,seconds.
  [[nodiscard]] std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "# config-hash=" << config_hash << '\n';
    os << "epoch,train_loss,train_acc,val_acc,seconds\n";
    for (const auto &e : epochs)
      os << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_acc << ','
         << e.seconds << '\n';
    return os.str();
  }
};

[[nodiscard]] inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

[[nodiscard]] inline std::string run_config_hash(const ModelConfig &m, const TrainConfig &t) {
  return hex64(fnv1a(m.canonical() + "|" + t.canonical()));
}

/// Accuracy of the model over a dataset, evaluated in chunks of `batch_size`.
[[nodiscard]] inline double evaluate_accuracy(Model &model, const Dataset &d, std::size_t batch_size) {
  if (d.empty())
    return 0.0;
  std::size_t hits = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < d.size(); start += batch_size) {
    const std::size_t end = std::min(d.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = model.forward(d.batch(idx));
    std::vector<std::size_t> labels;
    for (std::size_t i : idx)
      labels.push_back(d.label(i));
    hits += static_cast<std::size_t>(
        std::llround(argmax_accuracy(logits, labels) * static_cast<double>(idx.size())));
  }
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

/// First 1-based epoch whose evaluated validation accuracy reaches theta, or
/// epochs + 1 when none does.
[[nodiscard]] inline std::size_t epochs_to_theta(const RunRecord &r, double theta) {
  for (const auto &e : r.epochs)
    if (e.val_evaluated && e.val_acc >= theta)
      return e.epoch;
  return r.epochs.size() + 1;
}

/// Mini-batch SGD with momentum. The per-epoch order is a permutation keyed
/// by (seed, epoch). Throws DivergedRun on a non-finite batch loss.
inline RunRecord train(Model &model, const Dataset &train_set, const Dataset &val_set,
                       const TrainConfig &cfg, const std::string &config_hash = {}) {
  cfg.validate();
  RunRecord rec;
  rec.seed = cfg.seed;
  rec.config_hash = config_hash;
  if (cfg.epochs == 0)
    return rec;
  if (train_set.empty())
    throw std::invalid_argument("train: empty training split");
  if (train_set.sample_shape() != val_set.sample_shape() && !val_set.empty())
    throw std::invalid_argument("train: train and validation sample shapes differ");

  const auto params = model.params();
  std::vector<Tensor> velocities;
  for (Param *p : params)
    p->zero_grad();
  double last_val = 0.0;
  std::vector<std::size_t> batch_idx, batch_labels;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = keyed_permutation(train_set.size(), derive_key(cfg.seed, epoch));
    double loss_sum = 0.0, hit_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(end));
      batch_labels.clear();
      for (std::size_t i : batch_idx)
        batch_labels.push_back(train_set.label(i));
      const Tensor logits = model.forward(train_set.batch(batch_idx));
      const LossResult lr = softmax_cross_entropy(logits, batch_labels);
      if (!std::isfinite(lr.loss))
        throw DivergedRun(epoch);
      const auto n = static_cast<double>(batch_idx.size());
      loss_sum += lr.loss * n;
      hit_sum += argmax_accuracy(logits, batch_labels) * n;
      model.backward(lr.grad);
      sgd_momentum_step(params, velocities, cfg.learning_rate, cfg.momentum, cfg.l2_lambda);
    }
    EpochStats e;
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(train_set.size());
    e.train_acc = hit_sum / static_cast<double>(train_set.size());
    e.val_evaluated = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
    if (e.val_evaluated)
      last_val = evaluate_accuracy(model, val_set, std::max<std::size_t>(cfg.batch_size, 64));
    e.val_acc = last_val;
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back(e);
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Experiment matrix

struct GridPoint {
  double lr = 0.01;
  double l2 = 0.0;
};

struct Grid {
  std::vector<double> lr{0.1, 0.03, 0.01, 0.003};
  std::vector<double> l2{0.0, 1e-4, 1e-3};

  [[nodiscard]] std::vector<GridPoint> points() const {
    std::vector<GridPoint> out;
    for (double a : lr)
      for (double b : l2)
        out.push_back({a, b});
    return out;
  }
};

struct RunResult {
  std::size_t model_index = 0;
  std::size_t grid_index = 0;
  GridPoint point;
  std::uint64_t seed = 0;
  RunRecord record;
  bool diverged = false;
  std::string error;
};

struct ModelSummary {
  std::string model;
  std::string init;
  std::string arch;
  GridPoint best;
  double mean_acc = std::numeric_limits<double>::quiet_NaN();
  double std_acc = std::numeric_limits<double>::quiet_NaN();
  double epochs_to_theta_median = std::numeric_limits<double>::quiet_NaN();
  std::size_t diverged_runs = 0; ///< at the selected grid point
};

struct MatrixResult {
  std::vector<RunResult> runs;
  std::vector<ModelSummary> summaries;

  [[nodiscard]] std::string summary_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "model,init,arch,lr,l2,mean_acc,std_acc,epochs_to_theta_median,diverged_runs\n";
    for (const auto &s : summaries)
      os << s.model << ',' << s.init << ',' << s.arch << ',' << s.best.lr << ',' << s.best.l2 << ','
         << s.mean_acc << ',' << s.std_acc << ',' << s.epochs_to_theta_median << ','
         << s.diverged_runs << '\n';
    return os.str();
  }
};

[[nodiscard]] inline double median(std::vector<double> v) {
  if (v.empty())
    return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Sample standard deviation (n - 1); zero for a single value.
[[nodiscard]] inline double sample_stddev(const std::vector<double> &v) {
  if (v.size() < 2)
    return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v)
    s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Model initialization key for a run seed.
[[nodiscard]] constexpr std::uint64_t model_seed(std::uint64_t run_seed) noexcept {
  return derive_key(run_seed, 0x1A17);
}

/// Every (model, grid point, seed) combination, trained independently on up
/// to `threads` workers. For each model the grid point with the fewest
/// diverged seeds is selected, then the best mean final validation accuracy
/// (first in grid order on ties). It is summarized over its non-diverged seeds.
/// Called from the worker thread that finished run `index` (not for diverged runs).
using RunHook = std::function<void(std::size_t index, const RunResult &, Model &)>;

[[nodiscard]] inline MatrixResult run_matrix(const std::vector<ModelConfig> &models,
                                             const TrainConfig &base,
                                             const std::vector<std::uint64_t> &seeds,
                                             const Grid &grid, const Dataset &train_set,
                                             const Dataset &val_set, double theta,
                                             std::size_t threads = 1,
                                             const RunHook &on_trained = {}) {
  const auto points = grid.points();
  if (models.empty() || seeds.empty() || points.empty())
    throw std::invalid_argument("run_matrix: models, seeds and grid must be nonempty");
  MatrixResult result;
  for (std::size_t m = 0; m < models.size(); ++m)
    for (std::size_t g = 0; g < points.size(); ++g)
      for (std::uint64_t s : seeds) {
        RunResult r;
        r.model_index = m;
        r.grid_index = g;
        r.point = points[g];
        r.seed = s;
        result.runs.push_back(std::move(r));
      }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= result.runs.size())
        return;
      RunResult &r = result.runs[job];
      TrainConfig cfg = base;
      cfg.learning_rate = r.point.lr;
      cfg.l2_lambda = r.point.l2;
      cfg.seed = r.seed;
      const ModelConfig &mc = models[r.model_index];
      const std::string hash = run_config_hash(mc, cfg);
      try {
        Model model = build_model(mc, model_seed(r.seed));
        r.record = train(model, train_set, val_set, cfg, hash);
        if (on_trained)
          on_trained(job, r, model);
      } catch (const DivergedRun &e) {
        r.diverged = true;
        r.error = e.what();
        r.record.seed = r.seed;
        r.record.config_hash = hash;
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, result.runs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back(worker);
    for (auto &t : pool)
      t.join();
  }

  for (std::size_t m = 0; m < models.size(); ++m) {
    ModelSummary best;
    best.model = models[m].display_name();
    best.init = models[m].has_transforms() ? std::string(to_string(models[m].init)) : "none";
    best.arch = std::string(to_string(models[m].arch));
    bool have = false;
    for (std::size_t g = 0; g < points.size(); ++g) {
      std::vector<double> acc, ett;
      std::size_t diverged = 0;
      for (const auto &r : result.runs) {
        if (r.model_index != m || r.grid_index != g)
          continue;
        if (r.diverged) {
          ++diverged;
          continue;
        }
        acc.push_back(r.record.final_val_acc());
        ett.push_back(static_cast<double>(epochs_to_theta(r.record, theta)));
      }
      if (acc.empty())
        continue;
      const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
      const bool better = diverged != best.diverged_runs ? diverged < best.diverged_runs
                                                         : mean > best.mean_acc;
      if (!have || better) {
        have = true;
        best.best = points[g];
        best.mean_acc = mean;
        best.std_acc = sample_stddev(acc);
        best.epochs_to_theta_median = median(ett);
        best.diverged_runs = diverged;
      }
    }
    if (!have) {
      best.best = points.front();
      best.diverged_runs = seeds.size();
    }
    result.summaries.push_back(best);
  }
  return result;
}

} // namespace spectral
