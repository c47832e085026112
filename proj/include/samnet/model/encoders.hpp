#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "samnet/core/errors.hpp"
#include "samnet/core/ops.hpp"
#include "samnet/core/params.hpp"
#include "samnet/core/rng.hpp"

namespace samnet {

using nd::ParamStore;
using nd::Tape;
using nd::Tensor;
using nd::Var;

struct TokenSequence {
  std::vector<std::size_t> ids;
  std::size_t vocab_size = 0;

  void validate() const {
    if (ids.empty()) throw InputError("token sequence must contain at least one token");
    for (auto id : ids) {
      if (id >= vocab_size) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(vocab_size));
      }
    }
  }
};

/// Token list where the line number of each token is its id.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!ids_.emplace(tokens_[i], i).second) throw VocabularyError("duplicate token '" + tokens_[i] + "'");
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::size_t id(const std::string& word) const {
    auto it = ids_.find(word);
    if (it == ids_.end()) throw VocabularyError("unknown token '" + word + "'");
    return it->second;
  }

  TokenSequence encode(const std::vector<std::string>& words) const {
    TokenSequence seq{{}, size()};
    for (const auto& w : words) seq.ids.push_back(id(w));
    return seq;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write vocabulary " + path.string());
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read vocabulary " + path.string());
    std::vector<std::string> tokens;
    for (std::string line; std::getline(is, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> ids_;
};

/// Symbolic visual input: per cell, an occupancy bit followed by one-hot
/// color and one-hot shape channels. Invalid grids cannot be constructed.
class FrameGrid {
 public:
  FrameGrid(std::size_t height, std::size_t width, std::size_t num_colors, std::size_t num_shapes,
            std::vector<std::uint8_t> cells)
      : height_(height), width_(width), colors_(num_colors), shapes_(num_shapes), cells_(std::move(cells)) {
    if (height_ * width_ == 0) throw ShapeError("frame grid must have at least one cell");
    if (cells_.size() != height_ * width_ * channels()) throw ShapeError("frame grid data has wrong length");
    for (std::size_t p = 0; p < height_ * width_; ++p) {
      const auto* c = &cells_[p * channels()];
      std::size_t nc = 0, ns = 0;
      for (std::size_t k = 0; k < channels(); ++k)
        if (c[k] > 1) throw InputError("frame grid values must be 0 or 1");
      for (std::size_t k = 0; k < colors_; ++k) nc += c[1 + k];
      for (std::size_t k = 0; k < shapes_; ++k) ns += c[1 + colors_ + k];
      if (c[0] == 0 && (nc || ns)) throw InputError("empty cell carries attribute channels");
      if (c[0] == 1 && (nc != 1 || ns != 1)) throw InputError("occupied cell needs exactly one color and one shape");
    }
  }

  /// All-empty grid.
  static FrameGrid empty(std::size_t height, std::size_t width, std::size_t num_colors, std::size_t num_shapes) {
    return FrameGrid(height, width, num_colors, num_shapes,
                     std::vector<std::uint8_t>(height * width * (1 + num_colors + num_shapes), 0));
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t num_colors() const { return colors_; }
  std::size_t num_shapes() const { return shapes_; }
  std::size_t channels() const { return 1 + colors_ + shapes_; }
  const std::vector<std::uint8_t>& cells() const { return cells_; }

  bool occupied(std::size_t r, std::size_t c) const { return at(r, c, 0) == 1; }

  std::optional<std::size_t> color(std::size_t r, std::size_t c) const {
    for (std::size_t k = 0; k < colors_; ++k)
      if (at(r, c, 1 + k)) return k;
    return std::nullopt;
  }

  std::optional<std::size_t> shape(std::size_t r, std::size_t c) const {
    for (std::size_t k = 0; k < shapes_; ++k)
      if (at(r, c, 1 + colors_ + k)) return k;
    return std::nullopt;
  }

  /// {height*width, channels} in row-major cell order.
  template <class T>
  Tensor<T> to_tensor() const {
    nd::Buffer<T> data(cells_.size());
    for (std::size_t i = 0; i < cells_.size(); ++i) data[i] = static_cast<T>(cells_[i]);
    return Tensor<T>({height_ * width_, channels()}, std::move(data));
  }

 private:
  std::uint8_t at(std::size_t r, std::size_t c, std::size_t k) const {
    return cells_.at((r * width_ + c) * channels() + k);
  }

  std::size_t height_, width_, colors_, shapes_;
  std::vector<std::uint8_t> cells_;
};

enum class EmbeddingMode { learned, onehot };

struct EncoderConfig {
  std::size_t d = 64;
  std::size_t vocab_size = 1;
  EmbeddingMode embedding = EmbeddingMode::learned;
  std::size_t in_channels = 15;
  std::size_t conv_hidden = 64;
  bool frame_skip = true;  // add a per-cell linear map of the raw input to the conv features
};

template <class T>
struct QuestionEncoding {
  Var<T> cw;  // {L, d} contextual words
  Var<T> q;   // {d} question embedding
};

template <class T>
struct FeatureMap {
  Var<T> F;  // {height*width, d}
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Bidirectional LSTM question encoder, hidden size d/2 per direction.
template <class T>
class QuestionEncoder {
 public:
  QuestionEncoder(ParamStore<T>& store, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.d == 0 || cfg.d % 2) throw InputError("model width d must be a positive even number");
    const std::size_t h = cfg.d / 2;
    const std::size_t in = cfg.embedding == EmbeddingMode::learned ? cfg.d : cfg.vocab_size;
    if (cfg.embedding == EmbeddingMode::learned) {
      embedding_ = store.add("question/embedding", {cfg.vocab_size, cfg.d}, 1, rng);
    }
    for (int dir = 0; dir < 2; ++dir) {
      const std::string prefix = dir == 0 ? "question/lstm_fwd/" : "question/lstm_bwd/";
      lstm_w_[dir] = store.add(prefix + "w", {4 * h, in + h}, h, rng);
      lstm_b_[dir] = store.add(prefix + "b", {4 * h}, h, rng);
    }
    context_w_ = store.add("question/context/w", {cfg.d, cfg.d}, cfg.d, rng);
    context_b_ = store.add("question/context/b", {cfg.d}, cfg.d, rng);
    summary_w_ = store.add("question/summary/w", {cfg.d, cfg.d}, cfg.d, rng);
    summary_b_ = store.add("question/summary/b", {cfg.d}, cfg.d, rng);
  }

  QuestionEncoding<T> encode(Tape<T>& tape, const ParamStore<T>& store, const TokenSequence& tokens) const {
    tokens.validate();
    if (tokens.vocab_size != cfg_.vocab_size) throw VocabularyError("token sequence uses a different vocabulary size");
    const std::size_t L = tokens.ids.size();
    std::vector<Var<T>> inputs;
    inputs.reserve(L);
    if (cfg_.embedding == EmbeddingMode::learned) {
      auto rows = nd::gather_rows(tape.param(store[embedding_]), std::span<const std::size_t>(tokens.ids));
      for (std::size_t i = 0; i < L; ++i) inputs.push_back(nd::row(rows, i));
    } else {
      for (auto id : tokens.ids) {
        Tensor<T> onehot({cfg_.vocab_size});
        onehot[id] = T(1);
        inputs.push_back(tape.constant(std::move(onehot)));
      }
    }
    std::vector<Var<T>> fwd(L), bwd(L);
    run_direction(tape, store, 0, inputs, fwd, false);
    run_direction(tape, store, 1, inputs, bwd, true);

    std::vector<Var<T>> joined;
    joined.reserve(L);
    for (std::size_t i = 0; i < L; ++i) joined.push_back(nd::concat({fwd[i], bwd[i]}));
    auto stacked = nd::stack_rows(std::span<const Var<T>>(joined));
    auto cw = nd::linear(stacked, tape.param(store[context_w_]), tape.param(store[context_b_]));
    auto finals = nd::concat({fwd[L - 1], bwd[0]});
    auto q = nd::linear(finals, tape.param(store[summary_w_]), tape.param(store[summary_b_]));
    return {cw, q};
  }

 private:
  void run_direction(Tape<T>& tape, const ParamStore<T>& store, int dir, const std::vector<Var<T>>& inputs,
                     std::vector<Var<T>>& out, bool reverse) const {
    const std::size_t h = cfg_.d / 2;
    auto w = tape.param(store[lstm_w_[dir]]);
    auto b = tape.param(store[lstm_b_[dir]]);
    Var<T> hidden = tape.constant(Tensor<T>({h}));
    Var<T> cell = tape.constant(Tensor<T>({h}));
    const std::size_t L = inputs.size();
    for (std::size_t s = 0; s < L; ++s) {
      const std::size_t i = reverse ? L - 1 - s : s;
      auto z = nd::linear(nd::concat({inputs[i], hidden}), w, b);
      auto in_gate = nd::sigmoid(nd::slice(z, 0, h));
      auto forget = nd::sigmoid(nd::slice(z, h, h));
      auto candidate = nd::tanh(nd::slice(z, 2 * h, h));
      auto out_gate = nd::sigmoid(nd::slice(z, 3 * h, h));
      cell = forget * cell + in_gate * candidate;
      hidden = out_gate * nd::tanh(cell);
      out[i] = hidden;
    }
  }

  EncoderConfig cfg_;
  std::size_t embedding_ = 0;
  std::size_t lstm_w_[2] = {0, 0}, lstm_b_[2] = {0, 0};
  std::size_t context_w_ = 0, context_b_ = 0, summary_w_ = 0, summary_b_ = 0;
};

/// Two 3x3 same-padded convolutions with ELU, producing one d-vector per cell.
template <class T>
class FrameEncoder {
 public:
  FrameEncoder(ParamStore<T>& store, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    conv1_w_ = store.add("frame/conv1/w", {cfg.conv_hidden, 3, 3, cfg.in_channels}, 9 * cfg.in_channels, rng);
    conv1_b_ = store.add("frame/conv1/b", {cfg.conv_hidden}, 9 * cfg.in_channels, rng);
    conv2_w_ = store.add("frame/conv2/w", {cfg.d, 3, 3, cfg.conv_hidden}, 9 * cfg.conv_hidden, rng);
    conv2_b_ = store.add("frame/conv2/b", {cfg.d}, 9 * cfg.conv_hidden, rng);
    if (cfg.frame_skip) {
      skip_w_ = store.add("frame/skip/w", {cfg.d, cfg.in_channels}, cfg.in_channels, rng);
      skip_b_ = store.add("frame/skip/b", {cfg.d}, cfg.in_channels, rng);
    }
  }

  /// `pixels` is {height*width, in_channels}.
  FeatureMap<T> encode(Tape<T>& tape, const ParamStore<T>& store, const Tensor<T>& pixels, std::size_t height,
                       std::size_t width) const {
    if (height * width == 0) throw ShapeError("encode_frame: empty grid");
    if (pixels.rank() != 2 || pixels.dim(0) != height * width || pixels.dim(1) != cfg_.in_channels) {
      throw ShapeError("encode_frame: input " + nd::to_string(pixels.shape) + " does not match channel layout " +
                       std::to_string(cfg_.in_channels));
    }
    auto x = tape.constant(pixels);
    auto h1 = nd::elu(nd::conv3x3(x, height, width, tape.param(store[conv1_w_]), tape.param(store[conv1_b_])));
    auto h2 = nd::elu(nd::conv3x3(h1, height, width, tape.param(store[conv2_w_]), tape.param(store[conv2_b_])));
    // Two 3x3 layers already see a 5x5 neighbourhood, which covers a whole toy
    // grid; the skip keeps each row tied to its own cell.
    if (cfg_.frame_skip) h2 = h2 + nd::linear(x, tape.param(store[skip_w_]), tape.param(store[skip_b_]));
    return {h2, height, width};
  }

  FeatureMap<T> encode(Tape<T>& tape, const ParamStore<T>& store, const FrameGrid& grid) const {
    return encode(tape, store, grid.to_tensor<T>(), grid.height(), grid.width());
  }

 private:
  EncoderConfig cfg_;
  std::size_t conv1_w_ = 0, conv1_b_ = 0, conv2_w_ = 0, conv2_b_ = 0;
  std::size_t skip_w_ = 0, skip_b_ = 0;
};

}  // namespace samnet
