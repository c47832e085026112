#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "samnet/core/checkpoint.hpp"
#include "samnet/core/ops.hpp"
#include "samnet/model/encoders.hpp"
#include "samnet/model/samcell.hpp"

namespace samnet {

inline constexpr const char* kModelVersion = "samnet-1";

struct ModelConfig {
  std::size_t d = 64;
  std::size_t steps = 4;      // T reasoning steps per frame
  std::size_t mem_slots = 4;  // default N; can be overridden per forward pass
  std::size_t vocab_size = 1;
  std::size_t num_answers = 2;
  std::size_t in_channels = 15;
  std::size_t conv_hidden = 0;  // 0 means d
  GateMode gate_mode = GateMode::softmax;
  bool memory_writes = true;
  bool image_mode = false;
  EmbeddingMode embedding = EmbeddingMode::learned;
  bool frame_skip = true;
  std::uint64_t init_seed = 1;

  std::size_t hidden_channels() const { return conv_hidden ? conv_hidden : d; }

  std::vector<std::pair<std::string, std::string>> hyper() const {
    return {{"model_version", kModelVersion},
            {"d", std::to_string(d)},
            {"steps", std::to_string(steps)},
            {"mem_slots", std::to_string(mem_slots)},
            {"vocab_size", std::to_string(vocab_size)},
            {"num_answers", std::to_string(num_answers)},
            {"in_channels", std::to_string(in_channels)},
            {"conv_hidden", std::to_string(hidden_channels())},
            {"gate_mode", gate_mode == GateMode::softmax ? "softmax" : "sigmoid"},
            {"memory_writes", memory_writes ? "on" : "off"},
            {"image_mode", image_mode ? "on" : "off"},
            {"embedding", embedding == EmbeddingMode::learned ? "learned" : "onehot"},
            {"frame_skip", frame_skip ? "on" : "off"},
            {"init_seed", std::to_string(init_seed)}};
  }

  static ModelConfig from_checkpoint(const nd::Checkpoint& ck) {
    if (ck.hyper_value("model_version") != kModelVersion) {
      throw VersionError("checkpoint model version '" + ck.hyper_value("model_version") + "' is not " + kModelVersion);
    }
    auto num = [&](const char* k) { return static_cast<std::size_t>(std::stoull(ck.hyper_value(k))); };
    ModelConfig c;
    c.d = num("d");
    c.steps = num("steps");
    c.mem_slots = num("mem_slots");
    c.vocab_size = num("vocab_size");
    c.num_answers = num("num_answers");
    c.in_channels = num("in_channels");
    c.conv_hidden = num("conv_hidden");
    c.gate_mode = ck.hyper_value("gate_mode") == "sigmoid" ? GateMode::sigmoid : GateMode::softmax;
    c.memory_writes = ck.hyper_value("memory_writes") == "on";
    c.image_mode = ck.hyper_value("image_mode") == "on";
    c.embedding = ck.hyper_value("embedding") == "onehot" ? EmbeddingMode::onehot : EmbeddingMode::learned;
    c.frame_skip = ck.hyper_value("frame_skip") == "on";
    c.init_seed = std::stoull(ck.hyper_value("init_seed"));
    return c;
  }
};

/// Model-ready episode: tokens, per-frame inputs {H*W, C}, per-frame labels.
template <class T>
struct EpisodeInput {
  TokenSequence tokens;
  std::vector<Tensor<T>> frames;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::size_t> labels;
};

/// Question encoder + frame encoder + SAM cell + answer head.
template <class T>
class SamNet {
 public:
  explicit SamNet(const ModelConfig& cfg)
      : cfg_(cfg),
        rng_(cfg.init_seed),
        question_(store_, encoder_config(cfg), rng_),
        frame_(store_, encoder_config(cfg), rng_),
        cell_(store_, CellConfig{cfg.d, cfg.steps, cfg.gate_mode, cfg.memory_writes, cfg.image_mode}, rng_) {
    answer_w1_ = store_.add("answer/l1/w", {cfg.d, 2 * cfg.d}, 2 * cfg.d, rng_);
    answer_b1_ = store_.add("answer/l1/b", {cfg.d}, 2 * cfg.d, rng_);
    answer_w2_ = store_.add("answer/l2/w", {cfg.num_answers, cfg.d}, cfg.d, rng_);
    answer_b2_ = store_.add("answer/l2/b", {cfg.num_answers}, cfg.d, rng_);
  }

  SamNet(const SamNet&) = delete;
  SamNet& operator=(const SamNet&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const QuestionEncoder<T>& question_encoder() const { return question_; }
  const FrameEncoder<T>& frame_encoder() const { return frame_; }
  const SamCell<T>& cell() const { return cell_; }

  /// Per-frame answer logits, each {num_answers}. Memory starts empty with the
  /// write head on slot 0 and carries across frames; the cell state resets per frame.
  std::vector<Var<T>> episode_forward(Tape<T>& tape, const EpisodeInput<T>& ep, std::size_t slots,
                                      std::vector<StepTrace<T>>* traces = nullptr,
                                      const GateOverride& force = {}) const {
    if (ep.frames.empty()) throw InputError("episode_forward: episode has no frames");
    if (slots == 0) throw InputError("episode_forward: memory needs at least one slot");
    auto enc = question_.encode(tape, store_, ep.tokens);
    Tensor<T> wh0({slots});
    wh0[0] = T(1);
    MemoryState<T> mem{tape.constant(Tensor<T>({slots, cfg_.d})), tape.constant(std::move(wh0))};
    std::vector<Var<T>> logits;
    logits.reserve(ep.frames.size());
    for (const auto& pixels : ep.frames) {
      auto fm = frame_.encode(tape, store_, pixels, ep.height, ep.width);
      auto projected = cell_.project_frame(tape, store_, fm);
      CellState<T> state = cell_.initial_state(tape, store_);
      for (std::size_t t = 1; t <= cfg_.steps; ++t) {
        StepTrace<T> tr;
        std::tie(state, mem) =
            cell_.cell_step(tape, store_, enc.q, enc.cw, projected, state, mem, t, force, traces ? &tr : nullptr);
        if (traces) traces->push_back(tr);
      }
      logits.push_back(answer_head(tape, state.so, enc.q));
    }
    return logits;
  }

  /// {K, num_answers} stacked logits.
  Var<T> episode_logits(Tape<T>& tape, const EpisodeInput<T>& ep, std::size_t slots) const {
    auto rows = episode_forward(tape, ep, slots);
    return nd::stack_rows(std::span<const Var<T>>(rows));
  }

  /// Mean softmax cross-entropy over frames.
  Var<T> episode_loss(Tape<T>& tape, const EpisodeInput<T>& ep, std::size_t slots,
                      const GateOverride& force = {}) const {
    if (ep.labels.size() != ep.frames.size()) throw InputError("episode_loss: one label per frame required");
    auto logits = episode_forward(tape, ep, slots, nullptr, force);
    std::vector<Var<T>> losses;
    for (std::size_t k = 0; k < logits.size(); ++k) losses.push_back(nd::cross_entropy(logits[k], ep.labels[k]));
    return nd::scale(nd::add_scalars(std::span<const Var<T>>(losses)), T(1) / static_cast<T>(losses.size()));
  }

  Var<T> answer_head(Tape<T>& tape, Var<T> so, Var<T> q) const {
    auto h = nd::elu(nd::linear(nd::concat({so, q}), P(tape, store_, answer_w1_), P(tape, store_, answer_b1_)));
    return nd::linear(h, P(tape, store_, answer_w2_), P(tape, store_, answer_b2_));
  }

  nd::Checkpoint checkpoint(std::vector<std::pair<std::string, std::string>> extra = {}) const {
    auto hyper = cfg_.hyper();
    for (auto& kv : extra) hyper.push_back(std::move(kv));
    return nd::make_checkpoint(store_, std::move(hyper));
  }

  void load(const nd::Checkpoint& ck) { nd::load_into(ck, store_); }

 private:
  static EncoderConfig encoder_config(const ModelConfig& cfg) {
    return EncoderConfig{cfg.d, cfg.vocab_size, cfg.embedding, cfg.in_channels, cfg.hidden_channels(),
                         cfg.frame_skip};
  }

  ModelConfig cfg_;
  Rng rng_;
  ParamStore<T> store_;
  QuestionEncoder<T> question_;
  FrameEncoder<T> frame_;
  SamCell<T> cell_;
  std::size_t answer_w1_ = 0, answer_b1_ = 0, answer_w2_ = 0, answer_b2_ = 0;
};

}  // namespace samnet
