#pragma once

// Mixed-domain mini-batch training with best-model retention, evaluation,
// cross-database evaluation and the representation-size sweep harness.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "cake/datamodel.hpp"
#include "cake/metrics.hpp"
#include "cake/model.hpp"
#include "cake/objective.hpp"
#include "cake/optim.hpp"

namespace cake {

struct TrainConfig {
  ModelConfig model;
  std::size_t batch_size = 64;
  std::uint32_t max_epochs = 200;
  // Evaluations without improvement tolerated before stopping.
  std::uint32_t patience = 20;
  std::uint32_t eval_every = 1;
  // Drives batch shuffling and dropout masks; model.seed drives init.
  std::uint64_t seed = 0;
  AdamHyper adam;
  double log_base = std::numbers::e;
  // Adam refinement of the AV head (AvSource::regressor only).
  std::uint32_t av_epochs = 2000;
  AdamHyper av_adam{1e-4, 0.9, 0.999, 1e-8};
};

inline void validate(const TrainConfig& cfg) {
  validate(cfg.model);
  validate(cfg.adam);
  validate(cfg.av_adam);
  if (cfg.batch_size < 1) throw Error("trainer", "batch size must be >= 1");
  if (cfg.eval_every < 1) throw Error("trainer", "eval cadence must be >= 1");
}

struct EvalReport {
  std::vector<ConfusionMatrix> confusion;  // per domain
  std::vector<DomainScores> scores;
  double weighted_f1 = 0.0;
};

struct HistoryEntry {
  std::uint32_t epoch = 0;
  double train_loss = 0.0;
  bool evaluated = false;
  Vec64 domain_f1;
  Vec64 domain_accuracy;
  double weighted_f1 = 0.0;
};

struct TrainHistory {
  std::vector<HistoryEntry> epochs;
};

struct TrainResult {
  ModelParams params;
  AdamState optimizer;  // state at the retained epoch
  TrainHistory history;
  std::uint32_t best_epoch = 0;
  double best_weighted_f1 = -1.0;
  LossWeightReport weights;
};

// One global shuffle of every domain's samples, then contiguous slices.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n_records, std::size_t batch_size,
                                                          SeededRng& rng) {
  if (batch_size < 1) throw Error("trainer", "batch size must be >= 1");
  std::vector<std::size_t> order(n_records);
  for (std::size_t i = 0; i < n_records; ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n_records; start += batch_size) {
    const std::size_t end = std::min(n_records, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

inline std::vector<std::vector<std::size_t>> make_batches(const DatasetBundle& bundle, std::size_t batch_size,
                                                          SeededRng& rng) {
  return make_batches(bundle.records.size(), batch_size, rng);
}

// Predictions of one head over a set of records.
inline ConfusionMatrix confusion_for_head(const ModelParams& params, const ModelConfig& cfg,
                                          const DatasetBundle& bundle, std::size_t head, std::size_t domain) {
  ConfusionMatrix cm(cfg.n_classes);
  for (const auto& r : bundle.records) {
    if (r.domain_id != domain) continue;
    cm.add(index_of(r.label), index_of(predict(params, cfg, r, head)));
  }
  return cm;
}

inline DomainScores scores_of(const ConfusionMatrix& cm, std::string name) {
  DomainScores s;
  s.domain = std::move(name);
  s.support = cm.total();
  s.macro_f1 = macro_f1(cm);
  // Empty domains score 0 and carry no weight.
  s.accuracy = cm.total() ? accuracy(cm) : 0.0;
  s.mean_recall = cm.total() ? mean_class_recall(cm) : 0.0;
  return s;
}

inline double weighted_multidomain_f1(std::span<const DomainScores> scores) {
  std::uint64_t total = 0;
  for (const auto& s : scores) total += s.support;
  if (total == 0) return 0.0;
  double f1 = 0.0;
  for (const auto& s : scores) f1 += static_cast<double>(s.support) / static_cast<double>(total) * s.macro_f1;
  return f1;
}

// Every domain scored with its own head.
inline EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg, const DatasetBundle& bundle) {
  if (bundle.domains.size() > params.clf_W.size()) {
    throw Error("trainer", "bundle has " + std::to_string(bundle.domains.size()) + " domains, model has " +
                               std::to_string(params.clf_W.size()) + " heads");
  }
  EvalReport rep;
  for (std::size_t j = 0; j < bundle.domains.size(); ++j) {
    rep.confusion.push_back(confusion_for_head(params, cfg, bundle, j, j));
    rep.scores.push_back(scores_of(rep.confusion.back(), bundle.domains[j].name));
  }
  rep.weighted_f1 = weighted_multidomain_f1(rep.scores);
  return rep;
}

// Entry (h, d) is the macro F1 of head h on domain d's records.
inline Mat64 cross_evaluate(const ModelParams& params, const ModelConfig& cfg, const DatasetBundle& bundle) {
  const std::size_t heads = params.clf_W.size();
  const std::size_t domains = bundle.domains.size();
  if (domains > heads) throw Error("trainer", "cross-evaluation needs one head per bundle domain");
  Mat64 f1(heads, domains);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t d = 0; d < domains; ++d) f1(h, d) = macro_f1(confusion_for_head(params, cfg, bundle, h, d));
  }
  return f1;
}

inline std::vector<const FeatureRecord*> gather(const DatasetBundle& bundle, std::span<const std::size_t> idx) {
  std::vector<const FeatureRecord*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&bundle.records[i]);
  return out;
}

// Ridge least-squares solution of the unclipped linear AV head, written
// into av_W / av_b. Used as the starting point of fit_av_regressor.
inline void least_squares_av_init(ModelParams& params, const DatasetBundle& bundle) {
  if (params.av_W.empty()) throw Error("trainer", "model has no arousal-valence head to fit");
  const Eigen::Index d = static_cast<Eigen::Index>(params.av_W.cols());
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d + 1, d + 1);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(d + 1, 2);
  Eigen::VectorXd a(d + 1);
  for (const auto& r : bundle.records) {
    if (!r.av) throw Error("trainer", "av regression: record '" + r.id + "' has no arousal-valence target");
    for (Eigen::Index i = 0; i < d; ++i) a[i] = r.features[static_cast<std::size_t>(i)];
    a[d] = 1.0;
    gram.selfadjointView<Eigen::Lower>().rankUpdate(a);
    rhs.col(0) += r.av->arousal * a;
    rhs.col(1) += r.av->valence * a;
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  gram.diagonal().array() += 1e-10 * gram.trace() / static_cast<double>(d + 1);
  const Eigen::MatrixXd w = gram.ldlt().solve(rhs);
  if (!w.allFinite()) throw Error("trainer", "av regression: least-squares solve failed");
  for (Eigen::Index o = 0; o < 2; ++o) {
    for (Eigen::Index i = 0; i < d; ++i) params.av_W(static_cast<std::size_t>(o), static_cast<std::size_t>(i)) = w(i, o);
    params.av_b[static_cast<std::size_t>(o)] = w(d, o);
  }
}

// Fit of the linear AV head on the bundle's stored AV values: least-squares
// warm start, then `epochs` full-batch Adam steps on the clipped MSE. The
// iterate with the lowest loss is kept. Returns that training MSE.
//
// The warm start matters: an output pushed past the clip has zero gradient
// and never returns, so Adam from a random start strands whole classes.
inline double fit_av_regressor(ModelParams& params, const DatasetBundle& bundle, std::uint32_t epochs,
                               const AdamHyper& hyper) {
  if (params.av_W.empty()) throw Error("trainer", "model has no arousal-valence head to fit");
  std::vector<const FeatureRecord*> all;
  for (const auto& r : bundle.records) all.push_back(&r);
  if (all.empty()) throw Error("trainer", "cannot fit the AV regressor on an empty bundle");
  least_squares_av_init(params, bundle);
  const std::size_t nw = params.av_W.size();
  Vec64 theta(nw + 2);
  FlatAdam opt(theta.size(), hyper);
  std::copy(params.av_W.flat().begin(), params.av_W.flat().end(), theta.begin());
  std::copy(params.av_b.begin(), params.av_b.end(), theta.begin() + static_cast<std::ptrdiff_t>(nw));
  auto unpack = [&](std::span<const double> t) {
    std::copy_n(t.begin(), nw, params.av_W.flat().begin());
    std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(nw), 2, params.av_b.begin());
  };
  Vec64 best = theta;
  double best_loss = std::numeric_limits<double>::infinity();
  Vec64 grad(theta.size());
  for (std::uint32_t e = 0; e <= epochs; ++e) {
    const auto res = av_regression_backprop(params, all);
    if (res.loss < best_loss) {
      best_loss = res.loss;
      best = theta;
    }
    if (e == epochs) break;
    std::copy(res.grad_W.flat().begin(), res.grad_W.flat().end(), grad.begin());
    std::copy(res.grad_b.begin(), res.grad_b.end(), grad.begin() + static_cast<std::ptrdiff_t>(nw));
    opt.step(theta, grad);
    unpack(theta);
  }
  unpack(best);
  return best_loss;
}

inline void check_compatible(const TrainConfig& cfg, const DatasetBundle& train, const DatasetBundle* test) {
  const auto& m = cfg.model;
  auto check = [&](const DatasetBundle& b, const char* which) {
    if (b.dim != m.dim) {
      throw Error("trainer", std::string(which) + " bundle has D=" + std::to_string(b.dim) + ", model expects " +
                                 std::to_string(m.dim));
    }
    if (b.domains.size() != m.n_domains) {
      throw Error("trainer", std::string(which) + " bundle has " + std::to_string(b.domains.size()) +
                                 " domains, model expects " + std::to_string(m.n_domains));
    }
    for (const auto& r : b.records) {
      if (index_of(r.label) >= m.n_classes) {
        throw Error("trainer", std::string(which) + " record '" + r.id + "' has a label outside the model's classes");
      }
    }
  };
  check(train, "train");
  if (test) check(*test, "test");
  if (m.uses_av()) {
    std::size_t missing = 0;
    for (const auto& r : train.records) missing += r.av ? 0 : 1;
    if (missing) {
      throw Error("trainer", "variant " + std::string(variant_name(m.variant)) + " needs arousal-valence values but " +
                                 std::to_string(missing) + " training records lack them (AV missing)");
    }
    if (test && m.av_source == AvSource::record && !test->has_all_av()) {
      throw Error("trainer", "av source 'record' needs arousal-valence values on every test record (AV missing)");
    }
  }
}

inline TrainResult train(const DatasetBundle& train_set, const DatasetBundle& test_set, const TrainConfig& cfg) {
  validate(cfg);
  if (train_set.records.empty()) throw Error("trainer", "training bundle is empty");
  check_compatible(cfg, train_set, &test_set);
  const ModelConfig& mcfg = cfg.model;

  TrainResult res;
  res.params = init_params(mcfg);
  res.weights = compute_loss_weights(train_set.domains, mcfg.n_classes, cfg.log_base);
  if (mcfg.has_av_head()) fit_av_regressor(res.params, train_set, cfg.av_epochs, cfg.av_adam);

  ModelParams params = res.params;
  AdamState adam = adam_init(params, cfg.adam);
  res.optimizer = adam;
  SeededRng rng(cfg.seed);
  std::uint32_t stale = 0;

  for (std::uint32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = make_batches(train_set, cfg.batch_size, rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto batch = gather(train_set, batches[b]);
      auto step = backprop(params, mcfg, batch, res.weights.weights, rng);
      if (!std::isfinite(step.loss)) {
        throw Error("trainer", "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      loss_sum += step.loss * static_cast<double>(batch.size());
      adam_step(adam, params, step.grads);
    }
    HistoryEntry entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train_set.records.size());
    const bool last = epoch == cfg.max_epochs;
    if (epoch % cfg.eval_every == 0 || last) {
      const EvalReport rep = evaluate(params, mcfg, test_set);
      entry.evaluated = true;
      for (const auto& s : rep.scores) {
        entry.domain_f1.push_back(s.macro_f1);
        entry.domain_accuracy.push_back(s.accuracy);
      }
      entry.weighted_f1 = rep.weighted_f1;
      if (rep.weighted_f1 > res.best_weighted_f1) {
        res.best_weighted_f1 = rep.weighted_f1;
        res.best_epoch = epoch;
        res.params = params;
        res.optimizer = adam;
        stale = 0;
      } else {
        ++stale;
      }
    }
    res.history.epochs.push_back(std::move(entry));
    if (stale > cfg.patience) break;
  }
  return res;
}

inline void write_history_csv(std::ostream& os, const TrainHistory& h, std::size_t n_domains) {
  os << "epoch,loss";
  for (std::size_t j = 0; j < n_domains; ++j) os << ",f1_dom" << j;
  os << ",f1_weighted\n";
  for (const auto& e : h.epochs) {
    os << e.epoch << ',' << format_double(e.train_loss);
    for (std::size_t j = 0; j < n_domains; ++j) {
      os << ',';
      if (e.evaluated) os << format_double(e.domain_f1[j]);
    }
    os << ',';
    if (e.evaluated) os << format_double(e.weighted_f1);
    os << '\n';
  }
}

inline void write_matrix_csv(std::ostream& os, const Mat64& m, std::span<const DomainMeta> domains) {
  os << "head";
  for (std::size_t d = 0; d < m.cols(); ++d) os << ',' << domains[d].name;
  os << '\n';
  for (std::size_t h = 0; h < m.rows(); ++h) {
    os << (h < domains.size() ? domains[h].name : "head" + std::to_string(h));
    for (std::size_t d = 0; d < m.cols(); ++d) os << ',' << format_double(m(h, d));
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Representation-size sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  Variant variant = Variant::cake;
  std::uint32_t k = 0;
  Vec64 f1_runs;  // best weighted multi-domain F1 of each run
  double f1_mean = 0.0;
  double f1_std = 0.0;
};

// Trains one model per (k, run). Run r uses seed cfg.seed + r for both the
// initialization and the batch stream, so every k sees the same seeds.
// Jobs are independent and their results land in fixed slots.
inline std::vector<SweepRow> sweep_representation_size(std::span<const std::uint32_t> ks, Variant variant,
                                                        const DatasetBundle& train_set, const DatasetBundle& test_set,
                                                        const TrainConfig& base, std::uint32_t runs = 1,
                                                        std::uint32_t jobs = 1) {
  if (ks.empty()) throw Error("trainer", "sweep needs at least one k");
  if (runs < 1) throw Error("trainer", "sweep needs at least one run");
  std::vector<SweepRow> rows(ks.size());
  std::vector<TrainConfig> cfgs;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    rows[i].variant = variant;
    rows[i].k = ks[i];
    rows[i].f1_runs.assign(runs, 0.0);
    for (std::uint32_t r = 0; r < runs; ++r) {
      TrainConfig c = base;
      c.model.variant = variant;
      c.model.k = ks[i];
      c.model.seed = base.seed + r;
      c.seed = base.seed + r;
      validate(c);
      cfgs.push_back(c);
    }
  }
  auto run_job = [&](std::size_t job) {
    const std::size_t i = job / runs;
    const std::size_t r = job % runs;
    rows[i].f1_runs[r] = train(train_set, test_set, cfgs[job]).best_weighted_f1;
  };
  const std::size_t n_jobs = cfgs.size();
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(jobs, n_jobs));
  if (workers == 1) {
    for (std::size_t job = 0; job < n_jobs; ++job) run_job(job);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t job = w; job < n_jobs; job += workers) run_job(job);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (auto& row : rows) {
    double s = 0;
    for (double f : row.f1_runs) s += f;
    row.f1_mean = s / static_cast<double>(runs);
    double ss = 0;
    for (double f : row.f1_runs) ss += (f - row.f1_mean) * (f - row.f1_mean);
    row.f1_std = runs > 1 ? std::sqrt(ss / static_cast<double>(runs - 1)) : 0.0;
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "variant,k,runs,f1_mean,f1_std\n";
  for (const auto& r : rows) {
    os << variant_name(r.variant) << ',' << r.k << ',' << r.f1_runs.size() << ',' << format_double(r.f1_mean) << ','
       << format_double(r.f1_std) << '\n';
  }
}

}  // namespace cake
