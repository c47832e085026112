#include <filesystem>

#include <gtest/gtest.h>

#include "samnet/model/encoders.hpp"

using namespace samnet;

namespace {

EncoderConfig small_config(EmbeddingMode mode = EmbeddingMode::learned) {
  return EncoderConfig{8, 6, mode, 5, 4, true};
}

std::vector<double> row_of(const Var<double>& m, std::size_t r) {
  const std::size_t cols = m.shape()[1];
  auto v = m.value();
  return {v.begin() + r * cols, v.begin() + (r + 1) * cols};
}

Tensor<double> single_object(std::size_t H, std::size_t W, std::size_t r, std::size_t c) {
  Tensor<double> t({H * W, 5});
  t.at(r * W + c, 0) = 1;
  t.at(r * W + c, 1) = 1;
  t.at(r * W + c, 3) = 1;
  return t;
}

}  // namespace

TEST(Vocabulary, EncodesAndRejects) {
  Vocabulary v({"?", "exist", "red"});
  auto seq = v.encode({"exist", "red", "?"});
  EXPECT_EQ(seq.ids, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(seq.vocab_size, 3u);
  EXPECT_THROW(v.encode({"blue"}), VocabularyError);
  EXPECT_THROW(Vocabulary({"a", "a"}), VocabularyError);
}

TEST(Vocabulary, FileRoundTrip) {
  Vocabulary v({"?", "exist", "red", "cube"});
  auto path = std::filesystem::temp_directory_path() / "encoders_vocab.txt";
  v.save(path);
  auto back = Vocabulary::load(path);
  EXPECT_EQ(back.tokens(), v.tokens());
  std::filesystem::remove(path);
}

TEST(TokenSequence, Validation) {
  EXPECT_THROW((TokenSequence{{}, 4}.validate()), InputError);
  EXPECT_THROW((TokenSequence{{1, 4}, 4}.validate()), VocabularyError);
  EXPECT_NO_THROW((TokenSequence{{1, 3}, 4}.validate()));
}

TEST(FrameGrid, RejectsInvalidCells) {
  // channels: occupancy, 2 colors, 2 shapes
  EXPECT_THROW(FrameGrid(1, 1, 2, 2, {1, 1, 1, 1, 0}), InputError);  // two colors
  EXPECT_THROW(FrameGrid(1, 1, 2, 2, {0, 1, 0, 0, 0}), InputError);  // attributes on empty cell
  EXPECT_THROW(FrameGrid(1, 1, 2, 2, {1, 1, 0, 0, 0}), InputError);  // missing shape
  EXPECT_THROW(FrameGrid(1, 1, 2, 2, {2, 0, 0, 0, 0}), InputError);
  EXPECT_THROW(FrameGrid(1, 1, 2, 2, {1, 0}), ShapeError);
  FrameGrid g(1, 2, 2, 2, {1, 0, 1, 1, 0, 0, 0, 0, 0, 0});
  EXPECT_TRUE(g.occupied(0, 0));
  EXPECT_EQ(g.color(0, 0), 1u);
  EXPECT_EQ(g.shape(0, 0), 0u);
  EXPECT_FALSE(g.occupied(0, 1));
}

TEST(QuestionEncoder, OutputShapes) {
  ParamStore<double> store;
  Rng rng(1);
  QuestionEncoder<double> enc(store, small_config(), rng);
  Tape<double> tape;
  auto e = enc.encode(tape, store, TokenSequence{{0, 3, 5, 2}, 6});
  EXPECT_EQ(e.cw.shape(), (nd::Shape{4, 8}));
  EXPECT_EQ(e.q.shape(), (nd::Shape{8}));
  EXPECT_THROW(enc.encode(tape, store, TokenSequence{{0, 1}, 7}), VocabularyError);
  EXPECT_THROW(QuestionEncoder<double>(store, EncoderConfig{7, 6}, rng), InputError);
}

TEST(QuestionEncoder, ReversedQuestionEncodesDifferently) {
  ParamStore<double> store;
  Rng rng(2);
  QuestionEncoder<double> enc(store, small_config(), rng);
  Tape<double> tape;
  auto a = enc.encode(tape, store, TokenSequence{{1, 2, 3, 4}, 6});
  auto b = enc.encode(tape, store, TokenSequence{{4, 3, 2, 1}, 6});
  double diff = 0;
  for (std::size_t i = 0; i < 8; ++i) diff += std::abs(a.q[i] - b.q[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(QuestionEncoder, ContextSeesBothDirections) {
  // Changing the last token must reach the first contextual word (backward
  // pass) and changing the first token must reach the last one (forward pass).
  ParamStore<double> store;
  Rng rng(3);
  QuestionEncoder<double> enc(store, small_config(), rng);
  Tape<double> tape;
  auto base = enc.encode(tape, store, TokenSequence{{1, 2, 3, 4}, 6});
  auto last = enc.encode(tape, store, TokenSequence{{1, 2, 3, 5}, 6});
  auto first = enc.encode(tape, store, TokenSequence{{0, 2, 3, 4}, 6});
  EXPECT_NE(row_of(base.cw, 0), row_of(last.cw, 0));
  EXPECT_NE(row_of(base.cw, 3), row_of(first.cw, 3));
}

TEST(QuestionEncoder, OneHotModeHasNoEmbeddingTable) {
  ParamStore<double> store;
  Rng rng(4);
  QuestionEncoder<double> enc(store, small_config(EmbeddingMode::onehot), rng);
  EXPECT_EQ(store.find("question/embedding"), nullptr);
  Tape<double> tape;
  EXPECT_EQ(enc.encode(tape, store, TokenSequence{{5, 0}, 6}).cw.shape(), (nd::Shape{2, 8}));
}

TEST(FrameEncoder, RejectsWrongLayout) {
  ParamStore<double> store;
  Rng rng(5);
  FrameEncoder<double> enc(store, small_config(), rng);
  Tape<double> tape;
  EXPECT_THROW(enc.encode(tape, store, Tensor<double>({9, 4}), 3, 3), ShapeError);
  EXPECT_THROW(enc.encode(tape, store, Tensor<double>({8, 5}), 3, 3), ShapeError);
  EXPECT_EQ(enc.encode(tape, store, Tensor<double>({12, 5}), 3, 4).F.shape(), (nd::Shape{12, 8}));
}

TEST(FrameEncoder, TranslationEquivariantAwayFromBorders) {
  for (bool skip : {false, true}) {
    ParamStore<double> store;
    Rng rng(6);
    auto cfg = small_config();
    cfg.frame_skip = skip;
    FrameEncoder<double> enc(store, cfg, rng);
    Tape<double> tape;
    const std::size_t H = 7, W = 7;
    auto a = enc.encode(tape, store, single_object(H, W, 2, 2), H, W);
    auto b = enc.encode(tape, store, single_object(H, W, 2, 3), H, W);
    auto c = enc.encode(tape, store, single_object(H, W, 3, 2), H, W);
    // Output cells whose 5x5 window stays inside the grid in both frames.
    for (std::size_t r = 2; r + 2 < H; ++r) {
      for (std::size_t col = 2; col + 3 < W; ++col) {
        auto x = row_of(a.F, r * W + col), y = row_of(b.F, r * W + col + 1);
        for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], y[k], 1e-12);
      }
    }
    for (std::size_t r = 2; r + 3 < H; ++r) {
      for (std::size_t col = 2; col + 2 < W; ++col) {
        auto x = row_of(a.F, r * W + col), y = row_of(c.F, (r + 1) * W + col);
        for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(x[k], y[k], 1e-12);
      }
    }
  }
}

TEST(FrameEncoder, SkipAddsPerCellProjection) {
  ParamStore<double> store;
  Rng rng(7);
  FrameEncoder<double> enc(store, small_config(), rng);
  EXPECT_NE(store.find("frame/skip/w"), nullptr);
  ParamStore<double> plain;
  Rng rng2(7);
  auto cfg = small_config();
  cfg.frame_skip = false;
  FrameEncoder<double> enc2(plain, cfg, rng2);
  EXPECT_EQ(plain.find("frame/skip/w"), nullptr);
  EXPECT_EQ(store.scalar_count(), plain.scalar_count() + 8 * 5 + 8);
}
