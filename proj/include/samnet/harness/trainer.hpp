#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "samnet/core/checkpoint.hpp"
#include "samnet/core/errors.hpp"
#include "samnet/harness/adam.hpp"
#include "samnet/harness/config.hpp"
#include "samnet/harness/metrics.hpp"
#include "samnet/minicog/corpus.hpp"
#include "samnet/minicog/render.hpp"
#include "samnet/model/samnet_model.hpp"

namespace samnet::harness {

using Model = SamNet<float>;

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Symbolic rendering plus tokenization of one episode.
template <class T>
EpisodeInput<T> to_input(const minicog::Episode& ep, const minicog::EpisodeConfig& cfg) {
  const auto& inv = cfg.inventory;
  static thread_local std::unique_ptr<Vocabulary> vocab;
  static thread_local minicog::Inventory vocab_inv{0, 0};
  if (!vocab || !(vocab_inv == inv)) {
    vocab = std::make_unique<Vocabulary>(minicog::vocabulary_tokens(inv));
    vocab_inv = inv;
  }
  minicog::AnswerSpace space(inv);
  EpisodeInput<T> in;
  in.tokens = vocab->encode(ep.question);
  in.height = cfg.height;
  in.width = cfg.width;
  for (const auto& f : ep.frames) in.frames.push_back(minicog::render_symbolic(f, inv).to_tensor<T>());
  for (const auto& a : ep.answers) in.labels.push_back(space.index(a));
  return in;
}

inline std::size_t argmax(std::span<const float> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

struct EvalResult {
  MetricsRow row;
  std::vector<minicog::TaskClass> tasks;
  std::vector<std::vector<std::size_t>> labels;
  std::vector<std::vector<std::size_t>> predictions;
};

/// Frame-answer accuracy and mean loss over a corpus; `slots` sets the memory extent.
inline EvalResult evaluate(const Model& model, const minicog::Corpus& corpus, std::size_t slots,
                           const std::string& split = "val", std::size_t threads = 1) {
  const std::size_t n = corpus.episodes.size();
  if (n == 0) throw InputError("evaluate: empty corpus");
  const auto& mc = model.config();
  const auto inv = corpus.config.inventory;
  if (mc.num_answers != minicog::AnswerSpace(inv).size() || mc.in_channels != 1 + inv.num_colors + inv.num_shapes) {
    throw InputError("evaluate: corpus attribute inventory does not match the model");
  }
  EvalResult res;
  res.tasks.resize(n);
  res.labels.resize(n);
  res.predictions.resize(n);
  std::vector<double> losses(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto& ep = corpus.episodes[i];
    auto in = to_input<float>(ep, corpus.config);
    Tape<float> tape;
    auto logits = model.episode_forward(tape, in, slots);
    double loss = 0;
    std::vector<std::size_t> pred;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      loss += nd::cross_entropy(logits[k], in.labels[k]).item();
      pred.push_back(argmax(logits[k].value()));
    }
    losses[i] = loss / static_cast<double>(logits.size());
    res.tasks[i] = ep.task;
    res.labels[i] = std::move(in.labels);
    res.predictions[i] = std::move(pred);
  });
  std::map<minicog::TaskClass, std::pair<std::size_t, std::size_t>> per;
  std::size_t correct = 0, frames = 0;
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    loss += losses[i];
    auto& [c, t] = per[res.tasks[i]];
    for (std::size_t k = 0; k < res.labels[i].size(); ++k) {
      const bool ok = res.labels[i][k] == res.predictions[i][k];
      correct += ok;
      c += ok;
      ++t;
      ++frames;
    }
  }
  res.row.split = split;
  res.row.loss = loss / static_cast<double>(n);
  res.row.accuracy = static_cast<double>(correct) / static_cast<double>(frames);
  res.row.frames = frames;
  for (const auto& [task, ct] : per) res.row.per_class[task] = static_cast<double>(ct.first) / static_cast<double>(ct.second);
  return res;
}

/// Fraction of frames whose label equals the most common label.
inline double majority_baseline(const minicog::Corpus& corpus) {
  std::map<std::size_t, std::size_t> counts;
  std::size_t total = 0;
  minicog::AnswerSpace space(corpus.config.inventory);
  for (const auto& ep : corpus.episodes)
    for (const auto& a : ep.answers) {
      ++counts[space.index(a)];
      ++total;
    }
  std::size_t best = 0;
  for (const auto& [k, v] : counts) best = std::max(best, v);
  return total ? static_cast<double>(best) / static_cast<double>(total) : 0.0;
}

/// Plateau test on validation accuracy: the best of the last three evaluations
/// improves on everything before by less than 0.2 points.
inline bool plateaued(const std::vector<double>& val_acc) {
  for (std::size_t i = 3; i < val_acc.size(); ++i) {
    double before = 0, recent = 0;
    for (std::size_t j = 0; j + 2 < i; ++j) before = std::max(before, val_acc[j]);
    for (std::size_t j = i - 2; j <= i; ++j) recent = std::max(recent, val_acc[j]);
    if (recent - before < 0.002) return true;
  }
  return false;
}

/// Checkpoint hyperparameters: model config plus the full training config.
inline std::vector<std::pair<std::string, std::string>> checkpoint_extras(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string labels, vocab;
  for (const auto& l : minicog::AnswerSpace(cfg.data.inventory).labels()) labels += (labels.empty() ? "" : ",") + l;
  for (const auto& t : minicog::vocabulary_tokens(cfg.data.inventory)) vocab += (vocab.empty() ? "" : ",") + t;
  out.push_back({"answers", labels});
  out.push_back({"vocab", vocab});
  // out_dir names where the file lives, not how it was produced
  for (const auto& [k, v] : cfg.items())
    if (k != "out_dir") out.push_back({"cfg." + k, v});
  return out;
}

struct LoadedModel {
  TrainConfig config;
  nd::Checkpoint checkpoint;
  std::unique_ptr<Model> model;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
  LoadedModel lm;
  lm.checkpoint = nd::load_checkpoint(path);
  std::vector<std::pair<std::string, std::string>> kv;
  for (const auto& [k, v] : lm.checkpoint.hyper)
    if (k.rfind("cfg.", 0) == 0) kv.push_back({k.substr(4), v});
  if (kv.empty()) throw VersionError("checkpoint " + path.string() + " carries no training configuration");
  lm.config = config_from_pairs(kv);
  lm.model = std::make_unique<Model>(ModelConfig::from_checkpoint(lm.checkpoint));
  lm.model->load(lm.checkpoint);
  return lm;
}

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path metrics;
  std::vector<MetricsRow> rows;
  std::vector<double> val_history;
  double best_val_accuracy = 0;
  std::size_t steps_done = 0;
  std::size_t episodes_seen = 0;
  bool underfit = true;
};

/// Episode `i` of a batch drawn from `batch_seed`.
using EpisodeSource = std::function<minicog::Episode(std::uint64_t batch_seed, std::size_t step, std::size_t i)>;

/// Fresh episodes from `family` under `data`.
inline EpisodeSource generated_source(const minicog::TaskFamily& family, const minicog::EpisodeConfig& data) {
  return [family, data](std::uint64_t batch_seed, std::size_t, std::size_t i) {
    return minicog::gen_episode(data, family, derive_seed(batch_seed, i));
  };
}

inline EpisodeSource generated_source(const TrainConfig& cfg) { return generated_source(cfg.family(), cfg.data); }

/// Walks a fixed corpus in order, wrapping around; one epoch = corpus.size() episodes.
inline EpisodeSource corpus_source(std::shared_ptr<const minicog::Corpus> corpus, std::size_t batch) {
  return [corpus, batch](std::uint64_t, std::size_t step, std::size_t i) {
    return corpus->episodes[((step - 1) * batch + i) % corpus->episodes.size()];
  };
}

/// Gradient-descent loop over `steps` optimizer updates. Writes final/best
/// checkpoints and the metrics CSV under `out_dir` when it is non-empty.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    model_ = std::make_unique<Model>(cfg_.model_config());
  }

  Model& model() { return *model_; }
  const TrainConfig& config() const { return cfg_; }

  TrainResult run(std::size_t steps, const EpisodeSource& source, const minicog::Corpus* val,
                  const std::filesystem::path& out_dir, const std::string& stream = "train") {
    TrainResult res;
    const bool write = !out_dir.empty();
    MetricsWriter metrics;
    if (write) {
      std::filesystem::create_directories(out_dir);
      res.final_checkpoint = out_dir / "final.ckpt";
      res.best_checkpoint = out_dir / "best.ckpt";
      res.metrics = out_dir / "metrics.csv";
      metrics = MetricsWriter(res.metrics);
      save(res.final_checkpoint);
      save(res.best_checkpoint);
    }
    const std::size_t threads = cfg_.deterministic ? 1 : cfg_.threads;
    const auto t0 = std::chrono::steady_clock::now();
    auto seconds = [&] {
      if (cfg_.deterministic) return 0.0;
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    Adam<float> opt(model_->params(), cfg_.lr);
    const std::uint64_t stream_seed = derive_seed(cfg_.data_seed, hash_string(stream));
    double interval_loss = 0;
    std::size_t interval_correct = 0, interval_frames = 0, interval_episodes = 0;
    std::map<minicog::TaskClass, std::pair<std::size_t, std::size_t>> interval_per;
    bool has_best = false;

    for (std::size_t step = 1; step <= steps; ++step) {
      const std::uint64_t batch_seed = derive_seed(stream_seed, step);
      std::vector<nd::GradientSet<float>> grads(cfg_.batch);
      std::vector<double> losses(cfg_.batch);
      std::vector<std::vector<std::size_t>> preds(cfg_.batch), labels(cfg_.batch);
      std::vector<minicog::TaskClass> tasks(cfg_.batch);
      parallel_for(cfg_.batch, threads, [&](std::size_t i) {
        auto ep = source(batch_seed, step, i);
        auto in = to_input<float>(ep, cfg_.data);
        Tape<float> tape;
        Var<float> loss;
        try {
          auto logits = model_->episode_forward(tape, in, cfg_.mem_slots);
          std::vector<Var<float>> ce;
          for (std::size_t k = 0; k < logits.size(); ++k) {
            ce.push_back(nd::cross_entropy(logits[k], in.labels[k]));
            preds[i].push_back(argmax(logits[k].value()));
          }
          loss = nd::scale(nd::add_scalars(std::span<const Var<float>>(ce)), 1.0f / static_cast<float>(ce.size()));
          losses[i] = loss.item();
        } catch (const NumericError&) {
          losses[i] = std::numeric_limits<double>::quiet_NaN();  // overflow inside the forward pass
        }
        if (!std::isfinite(losses[i])) return;
        tape.backward(loss);
        grads[i] = nd::GradientSet<float>(model_->params());
        tape.accumulate_param_grads(grads[i]);
        labels[i] = std::move(in.labels);
        tasks[i] = ep.task;
      });
      for (std::size_t i = 0; i < cfg_.batch; ++i) {
        if (!std::isfinite(losses[i])) {
          if (write) save(res.final_checkpoint);
          throw NumericError("non-finite loss at step " + std::to_string(step) + " (batch seed " +
                             std::to_string(batch_seed) + ", episode " + std::to_string(i) +
                             "); last good parameters kept in " +
                             (write ? res.final_checkpoint.string() : std::string("memory")));
        }
      }
      nd::GradientSet<float> total(model_->params());
      for (auto& g : grads) total.add(g);
      total.scale(1.0f / static_cast<float>(cfg_.batch));
      clip_global_norm(total, cfg_.clip_norm);
      opt.step(model_->params(), total);
      res.steps_done = step;
      res.episodes_seen += cfg_.batch;

      for (std::size_t i = 0; i < cfg_.batch; ++i) {
        interval_loss += losses[i];
        ++interval_episodes;
        auto& [c, t] = interval_per[tasks[i]];
        for (std::size_t k = 0; k < labels[i].size(); ++k) {
          const bool ok = labels[i][k] == preds[i][k];
          interval_correct += ok;
          c += ok;
          ++t;
          ++interval_frames;
        }
      }

      if (step % cfg_.eval_every == 0 || step == steps) {
        MetricsRow tr;
        tr.step = step;
        tr.split = stream;
        tr.loss = interval_loss / static_cast<double>(interval_episodes);
        tr.accuracy = static_cast<double>(interval_correct) / static_cast<double>(interval_frames);
        tr.frames = interval_frames;
        for (const auto& [task, ct] : interval_per)
          tr.per_class[task] = static_cast<double>(ct.first) / static_cast<double>(ct.second);
        tr.seconds = seconds();
        metrics.append(tr);
        res.rows.push_back(tr);
        interval_loss = 0;
        interval_correct = interval_frames = interval_episodes = 0;
        interval_per.clear();
        if (val) {
          auto ev = evaluate(*model_, *val, cfg_.mem_slots, "val", threads);
          ev.row.step = step;
          ev.row.seconds = seconds();
          metrics.append(ev.row);
          res.rows.push_back(ev.row);
          res.val_history.push_back(ev.row.accuracy);
          if (!has_best || ev.row.accuracy > res.best_val_accuracy) {
            has_best = true;
            res.best_val_accuracy = ev.row.accuracy;
            if (write) save(res.best_checkpoint);
          }
        }
      }
    }
    if (write) save(res.final_checkpoint);
    res.underfit = !plateaued(res.val_history);
    return res;
  }

  void save(const std::filesystem::path& path) const {
    nd::save_checkpoint(model_->checkpoint(checkpoint_extras(cfg_)), path);
  }

 private:
  TrainConfig cfg_;
  std::unique_ptr<Model> model_;
};

/// Validation corpus of a config: `eval_size` episodes from `val_seed`.
inline minicog::Corpus validation_corpus(const TrainConfig& cfg) {
  return minicog::generate_corpus(cfg.data, cfg.family(), cfg.eval_size, cfg.val_seed);
}

/// Full `train` subcommand: on-the-fly episodes, fixed validation corpus.
inline TrainResult train(const TrainConfig& cfg) {
  Trainer trainer(cfg);
  auto val = validation_corpus(cfg);
  return trainer.run(cfg.max_steps, generated_source(cfg), &val, cfg.out_dir);
}

}  // namespace samnet::harness
