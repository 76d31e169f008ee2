#include <catch2/catch_amalgamated.hpp>

#include "oasflow/network.hpp"
#include "oracles.hpp"

using namespace oasflow;

namespace {

// Closed-form parameter ledger for the default configuration, recomputed
// here from the channel schedule by independent arithmetic.
int64_t closed_form_count() {
  auto conv = [](int64_t in_c, int64_t out_c, int64_t k) { return in_c * out_c * k * k + out_c; };
  // Encoder: two 3x3 convs per level, channels 3 -> 16 -> 32 -> ... -> 160.
  const int enc[7] = {3, 16, 32, 64, 96, 128, 160};
  int64_t total = 0;
  for (int k = 1; k <= 6; ++k) total += conv(enc[k - 1], enc[k], 3) + conv(enc[k], enc[k], 3);
  // 1x1 adapters to 32 channels at levels 3..6.
  for (int k = 3; k <= 6; ++k) total += conv(enc[k], 32, 1);
  // Shared decoder: trunk on 81 + 32 + 2 input channels, two heads, two
  // occlusion filters over the 81-channel volume.
  const int dec[9] = {81 + 32 + 2, 128, 128, 128, 128, 128, 96, 64, 32};
  for (int i = 1; i <= 8; ++i) total += conv(dec[i - 1], dec[i], 3);
  total += conv(32, 2, 3) + conv(32, 1, 3);
  total += 2 * conv(81, 81, 3);
  return total;
}

}  // namespace

TEST_CASE("encoder level-1 parameter example: 432 + 2304 + 32") {
  OasNet model({}, 1);
  const Param* w1 = model.params().find("enc1.conv1.w");
  const Param* b1 = model.params().find("enc1.conv1.b");
  const Param* w2 = model.params().find("enc1.conv2.w");
  const Param* b2 = model.params().find("enc1.conv2.b");
  REQUIRE(w1 != nullptr);
  REQUIRE(w1->value.numel() + w2->value.numel() + b1->value.numel() + b2->value.numel() ==
          2768);
}

TEST_CASE("count_parameters equals the closed-form channel ledger") {
  OasNet model({}, 1);
  REQUIRE(model.count_parameters() == closed_form_count());
  REQUIRE(model.count_parameters() == 1924903);
  // Architecture facts pinned by the ledger.
  REQUIRE(model.spec().channels() == 81);
  const std::vector<int> trunk = {128, 128, 128, 128, 128, 96, 64, 32};
  REQUIRE(model.config().decoder_channels == trunk);
  REQUIRE(model.config().decoder_input_channels() == 115);
  for (size_t i = 0; i < trunk.size(); ++i)
    REQUIRE(model.params().find("dec.trunk" + std::to_string(i + 1) + ".w")->value.n ==
            trunk[i]);
}

TEST_CASE("empty model counts zero parameters") {
  ParamStore empty;
  REQUIRE(empty.total_elements() == 0);
}

TEST_CASE("pyramid shapes: 64x64 reaches 1x1 at level 6, 128x192 level 3") {
  OasNet model({}, 2);
  Tape tape;
  Rng rng(3);
  const auto feats =
      model.extract_pyramid(tape, tape.leaf(random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f)));
  REQUIRE(feats.size() == 6);
  const Tensor4& top = tape.value(feats[5]);
  REQUIRE(top.c == 160);
  REQUIRE(top.h == 1);
  REQUIRE(top.w == 1);

  Tape t2;
  const auto f2 =
      model.extract_pyramid(t2, t2.leaf(random_uniform(rng, 1, 3, 128, 192, 0.0f, 1.0f)));
  const Tensor4& l3 = t2.value(f2[2]);
  REQUIRE(l3.c == 64);
  REQUIRE(l3.h == 16);
  REQUIRE(l3.w == 24);
}

TEST_CASE("extract_pyramid names the required multiple on bad sizes") {
  OasNet model({}, 2);
  Tape tape;
  const auto bad = tape.leaf(Tensor4(1, 3, 100, 64));
  REQUIRE_THROWS_WITH(model.extract_pyramid(tape, bad),
                      Catch::Matchers::ContainsSubstring("divisible by 64"));
}

TEST_CASE("identical images give bitwise-identical pyramids") {
  OasNet model({}, 4);
  Rng rng(5);
  const Tensor4 im = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  Tape tape;
  const auto fa = model.extract_pyramid(tape, tape.leaf(im));
  const auto fb = model.extract_pyramid(tape, tape.leaf(im));
  for (size_t k = 0; k < fa.size(); ++k) {
    const Tensor4& a = tape.value(fa[k]);
    const Tensor4& b = tape.value(fb[k]);
    REQUIRE(std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) == 0);
  }
}

TEST_CASE("zeroed flow head: decode_level returns the upsampled previous flow") {
  OasNet model({}, 6);
  model.flow_head().w->value.fill(0.0f);
  model.flow_head().b->value.fill(0.0f);
  Rng rng(7);
  const Tensor4 im1 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  const Tensor4 im2 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  Tape tape;
  const auto p1 = model.extract_pyramid(tape, tape.leaf(im1));
  const auto p2 = model.extract_pyramid(tape, tape.leaf(im2));
  // Previous state at level-4 resolution (2x2 for 64x64 input), nonzero flow.
  const Tensor4& f3 = tape.value(p1[2]);
  LevelState prev;
  prev.level = 4;
  prev.flow = tape.leaf(random_uniform(rng, 1, 2, f3.h / 2, f3.w / 2, -1.0f, 1.0f));
  prev.occ = tape.leaf(Tensor4::full(1, 1, f3.h / 2, f3.w / 2, 0.5f));
  const LevelState out = model.decode_level(tape, 3, p1[2], p2[2], &prev);
  const Tensor4& expect = tape.value(upsample_bilinear_2x(tape, prev.flow, 2.0f));
  const Tensor4& got = tape.value(out.flow);
  REQUIRE(std::memcmp(got.data.data(), expect.data.data(), got.data.size() * 4) == 0);
}

TEST_CASE("zeroed flow head collapses the residual chain to zero flow") {
  OasNet model({}, 8);
  model.flow_head().w->value.fill(0.0f);
  model.flow_head().b->value.fill(0.0f);
  Rng rng(9);
  const Tensor4 im1 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  const Tensor4 im2 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  const auto est = model.estimate_flow(im1, im2);
  for (float v : est.flow.data) REQUIRE(v == 0.0f);
  for (const auto& lf : est.level_flows)
    for (float v : lf.data) REQUIRE(v == 0.0f);
}

TEST_CASE("decode_level rejects a previous state at the wrong resolution") {
  OasNet model({}, 10);
  Rng rng(11);
  const Tensor4 im = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  Tape tape;
  const auto p = model.extract_pyramid(tape, tape.leaf(im));
  LevelState prev;
  prev.level = 4;
  prev.flow = tape.leaf(Tensor4(1, 2, 3, 3));
  prev.occ = tape.leaf(Tensor4::full(1, 1, 3, 3, 0.5f));
  REQUIRE_THROWS_AS(model.decode_level(tape, 3, p[2], p[2], &prev), ShapeError);
}

TEST_CASE("forward contract: full-res flow, 5 level states, occ in (0, 1)") {
  OasNet model({}, 12);
  Rng rng(13);
  const Tensor4 im1 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  const Tensor4 im2 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  const auto est = model.estimate_flow(im1, im2);
  REQUIRE(est.flow.h == 64);
  REQUIRE(est.flow.w == 64);
  REQUIRE(est.flow.c == 2);
  REQUIRE(est.occ_pyramid.size() == 5);
  REQUIRE(est.level_flows.size() == 5);
  int expect_h = 1;  // level 6 of 64 -> 1
  for (const auto& occ : est.occ_pyramid) {
    REQUIRE(occ.h == expect_h);
    expect_h *= 2;
    for (float v : occ.data) {
      REQUIRE(v > 0.0f);
      REQUIRE(v < 1.0f);
    }
  }
  REQUIRE(est.flow.all_finite());
}

TEST_CASE("decoder sharing: one weight perturbation changes all 5 levels") {
  OasNet model({}, 14);
  Rng rng(15);
  const Tensor4 im1 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  const Tensor4 im2 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  const auto base = model.estimate_flow(im1, im2);
  // Center tap of the first 3x3 kernel: at level 6 the map is 1x1, so corner
  // taps only ever see zero padding.
  Tensor4& w3 = model.params().find("dec.trunk3.w")->value;
  w3.at(0, 0, 1, 1) += 0.25f;
  const auto bumped = model.estimate_flow(im1, im2);
  for (size_t k = 0; k < base.level_flows.size(); ++k) {
    const double diff = oracles::max_abs_diff(base.level_flows[k], bumped.level_flows[k]);
    INFO("level index " << k);
    REQUIRE(diff > 0.0);
  }
}

TEST_CASE("same seed, same inputs: bitwise-deterministic estimates") {
  Rng rng(17);
  const Tensor4 im1 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  const Tensor4 im2 = random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f);
  OasNet a({}, 21), b({}, 21);
  const auto ea = a.estimate_flow(im1, im2);
  const auto eb = b.estimate_flow(im1, im2);
  REQUIRE(std::memcmp(ea.flow.data.data(), eb.flow.data.data(), ea.flow.data.size() * 4) == 0);
  OasNet c({}, 22);
  const auto ec = c.estimate_flow(im1, im2);
  REQUIRE(oracles::max_abs_diff(ea.flow, ec.flow) > 0.0);
}

TEST_CASE("occlusion-off wiring swaps the module for a single bypass filter") {
  OasNetConfig cfg;
  cfg.occlusion = false;
  OasNet model(cfg, 23);
  REQUIRE(model.params().find("dec.oa.bypass.w") != nullptr);
  REQUIRE(model.params().find("dec.oa.conv1.w") == nullptr);
  const Param* bypass = model.params().find("dec.oa.bypass.w");
  REQUIRE(bypass->value.n == 81);
  REQUIRE(bypass->value.c == 81);
  Rng rng(24);
  const auto est = model.estimate_flow(random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f),
                                       random_uniform(rng, 1, 3, 64, 64, 0.0f, 1.0f));
  REQUIRE(est.flow.all_finite());
}
