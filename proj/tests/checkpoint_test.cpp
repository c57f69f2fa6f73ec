#include "noiseopt/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace noiseopt {
namespace {

Checkpoint sample_checkpoint() {
  Architecture arch{{1, 4, 4},
                    {LayerSpec::conv(1, 2, Activation::relu, NoiseSpec::trainable(0.7), true),
                     LayerSpec::dense(8, 5, Activation::sigmoid, NoiseSpec::fixed(1.0)),
                     LayerSpec::dense(5, 3, Activation::identity)}};
  Checkpoint ck{"mlp_n", init_network(arch, 42), std::nullopt};
  RngStream rng(1, 1);
  TrainerState t;
  t.epochs_done = 3;
  t.steps = 77;
  for (const LayerParams& p : ck.net.layers) {
    AdamState w(p.weights.shape()), b(p.bias.shape());
    Tensor scratch = p.weights;
    adam_step(w, scratch, sample_standard_normal(rng, p.weights.shape()));
    t.adam.push_back(w);
    t.adam.push_back(b);
    t.sgd.push_back(SgdState{{0.1, 0.9, 0.0}, sample_standard_normal(rng, p.weights.shape())});
    t.sgd.push_back(SgdState{{0.1, 0.9, 0.0}, {}});
    t.sigma.push_back(p.sigma.empty() ? AdamState{} : AdamState(p.sigma.shape()));
  }
  ck.trainer = t;
  return ck;
}

TEST(CheckpointTest, BitExactRoundTrip) {
  const Checkpoint ck = sample_checkpoint();
  EXPECT_EQ(decode_checkpoint(encode_checkpoint(ck)), ck);
  Checkpoint bare = ck;
  bare.trainer.reset();
  EXPECT_EQ(decode_checkpoint(encode_checkpoint(bare)), bare);

  const auto p = std::filesystem::temp_directory_path() / "noiseopt_ckpt_test.bin";
  save_checkpoint(ck, p);
  const Checkpoint back = load_checkpoint(p);
  std::filesystem::remove(p);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
}

TEST(CheckpointTest, CorruptedInputsRejected) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
  for (std::size_t cut : {std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + cut)), FormatError);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt"), FormatError);
}

}  // namespace
}  // namespace noiseopt
