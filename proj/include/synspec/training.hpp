#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "synspec/adam.hpp"
#include "synspec/dataset.hpp"
#include "synspec/error.hpp"
#include "synspec/model.hpp"
#include "synspec/random.hpp"

namespace synspec {

struct TrainingConfig {
  double learning_rate = 3e-4;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 500;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 10;
  std::size_t early_stop_patience = 25;
  // Validation loss must drop by at least this much to count as improvement.
  double min_delta = 1e-6;
  bool shuffle_each_epoch = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    if (plateau_patience < 1 || early_stop_patience < 1) throw ParameterError("patience values must be positive");
    if (early_stop_patience <= plateau_patience)
      throw ParameterError("early_stop_patience must exceed plateau_patience");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ParameterError("plateau_factor must lie in (0, 1)");
    if (!(learning_rate >= 0.0)) throw ParameterError("learning_rate must be >= 0");
  }
};

enum class StopReason { early_stop, max_epochs };

inline const char* to_string(StopReason r) { return r == StopReason::early_stop ? "early_stop" : "max_epochs"; }

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;  // rate used during this epoch
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  StopReason stop_reason = StopReason::max_epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_val_loss = std::numeric_limits<double>::infinity();
  double wall_time_s = 0.0;
  double cpu_time_s = 0.0;

  std::size_t trained_epochs() const noexcept { return epochs.size(); }
};

/// Reduce-on-plateau plus early stopping, driven by validation loss.
///
/// observe() is called once per epoch. An epoch improves when its loss is
/// below best - min_delta; otherwise both waiting counters grow. When the
/// plateau counter reaches plateau_patience the rate is multiplied by
/// plateau_factor and that counter restarts; when the early-stop counter
/// reaches early_stop_patience training stops.
class PlateauScheduler {
 public:
  struct Decision {
    bool improved = false;
    bool reduced = false;
    bool stop = false;
  };

  explicit PlateauScheduler(const TrainingConfig& cfg)
      : lr_(cfg.learning_rate), factor_(cfg.plateau_factor), plateau_patience_(cfg.plateau_patience),
        stop_patience_(cfg.early_stop_patience), min_delta_(cfg.min_delta) {}

  Decision observe(double val_loss) {
    ++epoch_;
    Decision d;
    if (val_loss < best_ - min_delta_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      plateau_wait_ = 0;
      stop_wait_ = 0;
      d.improved = true;
      return d;
    }
    ++plateau_wait_;
    ++stop_wait_;
    if (plateau_wait_ >= plateau_patience_) {
      lr_ *= factor_;
      plateau_wait_ = 0;
      d.reduced = true;
    }
    if (stop_wait_ >= stop_patience_) d.stop = true;
    return d;
  }

  double learning_rate() const noexcept { return lr_; }
  double best() const noexcept { return best_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }

 private:
  double lr_;
  double factor_;
  std::size_t plateau_patience_;
  std::size_t stop_patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t plateau_wait_ = 0;
  std::size_t stop_wait_ = 0;
};

namespace detail {

inline double process_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

inline nn::Tensor<float> gather_rows(const LabeledDataset& d, std::span<const std::size_t> rows) {
  nn::Tensor<float> x({rows.size(), 1, d.n_datapoints});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = d.row(rows[i]);
    std::copy(src.begin(), src.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * d.n_datapoints));
  }
  return x;
}

inline void check_dataset(const LabeledDataset& d, std::size_t n_classes, std::size_t n_datapoints, const char* what) {
  if (d.rows() == 0) throw ParameterError(std::string(what) + " set is empty");
  if (d.n_datapoints != n_datapoints)
    throw ShapeError(std::string(what) + " spectra have " + std::to_string(d.n_datapoints) + " datapoints, model expects " +
                     std::to_string(n_datapoints));
  for (auto y : d.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
      throw DomainError(std::string(what) + " label " + std::to_string(y) + " outside [0, " + std::to_string(n_classes) + ")");
}

}  // namespace detail

struct EvaluationResult {
  std::size_t misclassifications = 0;
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::map<std::int64_t, std::size_t> per_class_errors;
  std::vector<std::int64_t> predictions;
};

/// Argmax predictions in eval mode (ties go to the lower class id).
inline EvaluationResult evaluate(nn::Model<float>& model, const LabeledDataset& data, std::size_t batch_size = 256) {
  if (data.rows() == 0) throw ParameterError("cannot evaluate on an empty dataset");
  EvaluationResult r;
  r.predictions.resize(data.rows());
  double loss_sum = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.rows(); start += batch_size) {
    const std::size_t n = std::min(batch_size, data.rows() - start);
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), start);
    const auto z = model.logits(detail::gather_rows(data, rows), nn::Mode::eval);
    const std::size_t C = z.dim(1);
    const std::span<const std::int64_t> labels(data.labels.data() + start, n);
    loss_sum += nn::softmax_cross_entropy(z, labels).loss * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const float* row = z.row(i);
      std::size_t best = 0;
      for (std::size_t c = 1; c < C; ++c)
        if (row[c] > row[best]) best = c;
      r.predictions[start + i] = static_cast<std::int64_t>(best);
      if (static_cast<std::int64_t>(best) != labels[i]) {
        ++r.misclassifications;
        ++r.per_class_errors[labels[i]];
      }
    }
  }
  r.accuracy = 1.0 - static_cast<double>(r.misclassifications) / static_cast<double>(data.rows());
  r.mean_loss = loss_sum / static_cast<double>(data.rows());
  return r;
}

/// Called with (epoch, batch index, row indices) before every training step.
using BatchObserver = std::function<void(std::size_t, std::size_t, std::span<const std::size_t>)>;
/// Called after each epoch with its record.
using EpochObserver = std::function<void(const EpochRecord&)>;

struct TrainingHooks {
  BatchObserver on_batch;
  EpochObserver on_epoch;
};

/// Row order for one epoch: Fisher-Yates over a stream derived from
/// (seed, epoch), so the order depends only on the seed and the row count.
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t rows, bool shuffle) {
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!shuffle) return order;
  RandomStream rng = RandomStream(seed).split("shuffle").split(epoch);
  for (std::size_t i = rows; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

/// Minibatch Adam with reduce-on-plateau and early stopping on validation
/// loss. The parameters of the best epoch are restored before returning.
inline TrainingHistory train(nn::Model<float>& model, const LabeledDataset& train_set, const LabeledDataset& val_set,
                             const TrainingConfig& cfg, const TrainingHooks& hooks = {},
                             nn::AdamState<float>* adam_out = nullptr) {
  cfg.validate();
  const std::size_t n_classes = model.n_outputs();
  const std::size_t n = model.input_shape().at(1);
  TrainingHistory h;
  const auto wall0 = std::chrono::steady_clock::now();
  const double cpu0 = detail::process_cpu_seconds();
  auto finish = [&] {
    h.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    h.cpu_time_s = detail::process_cpu_seconds() - cpu0;
  };
  if (cfg.max_epochs == 0) {
    finish();
    return h;
  }
  detail::check_dataset(train_set, n_classes, n, "training");
  detail::check_dataset(val_set, n_classes, n, "validation");

  auto params = model.parameters();
  nn::AdamState<float> adam;
  adam.learning_rate = cfg.learning_rate;
  {
    std::vector<std::size_t> sizes;
    for (auto& p : params) sizes.push_back(p.value->size());
    adam.reset(sizes);
  }
  std::vector<std::span<float>> values;
  std::vector<std::span<const float>> grads;

  PlateauScheduler scheduler(cfg);
  nn::ModelState<float> best_state = model.state();
  std::vector<std::int64_t> labels;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = epoch_order(cfg.seed, epoch, train_set.rows(), cfg.shuffle_each_epoch);
    const double lr = scheduler.learning_rate();
    adam.learning_rate = lr;
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t bs = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, bs);
      if (hooks.on_batch) hooks.on_batch(epoch, batch_index, rows);
      labels.resize(bs);
      for (std::size_t i = 0; i < bs; ++i) labels[i] = train_set.labels[rows[i]];
      const double loss = model.loss_and_gradients(detail::gather_rows(train_set, rows),
                                                   std::span<const std::int64_t>(labels));
      if (!std::isfinite(loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + " (learning rate " + std::to_string(lr) + ")");
      loss_sum += loss * static_cast<double>(bs);
      grads.clear();
      for (auto& p : params) grads.emplace_back(p.grad->data);
      // Gradient tensors are reassigned by backward, so refresh the value spans too.
      values.clear();
      for (auto& p : params) values.emplace_back(p.value->data);
      nn::adam_step<float>(values, grads, adam);
    }
    const auto val = evaluate(model, val_set);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), val.mean_loss, val.accuracy, lr};
    h.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (!std::isfinite(val.mean_loss))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch) + " (learning rate " +
                          std::to_string(lr) + ")");

    const auto d = scheduler.observe(val.mean_loss);
    if (d.improved) best_state = model.state();
    if (d.stop) {
      h.stop_reason = StopReason::early_stop;
      break;
    }
  }
  h.best_epoch = scheduler.best_epoch();
  h.best_val_loss = scheduler.best();
  if (h.best_epoch > 0) model.load_state(best_state);
  if (adam_out) *adam_out = std::move(adam);
  finish();
  return h;
}

// ---------------------------------------------------------------- CSV ------

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

/// epoch,train_loss,val_loss,val_acc,lr with shortest round-trip decimals.
inline std::string history_csv(const TrainingHistory& h) {
  std::string out = "epoch,train_loss,val_loss,val_acc,lr\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_loss) + "," +
           format_double(e.val_accuracy) + "," + format_double(e.learning_rate) + "\n";
  }
  return out;
}

}  // namespace synspec
