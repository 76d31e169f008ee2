#include <catch2/catch_amalgamated.hpp>

#include "oasflow/correlation.hpp"
#include "oracles.hpp"

using namespace oasflow;

namespace {

Tensor4 rand_flow(Rng& rng, int n, int h, int w, double mag) {
  Tensor4 t(n, 2, h, w);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-mag, mag));
  return t;
}

// Two-object scene: the blob sits at A in f1 and at B in f2; the flow maps A
// onto B and is zero elsewhere. Warping duplicates the blob ("ghosting").
struct GhostScene {
  Tensor4 f1, f2, flow;
  int ax, ay, bx, by, size;
};

GhostScene make_ghost_scene(uint64_t seed) {
  GhostScene s;
  const int h = 12, w = 12, c = 3;
  s.ax = 2, s.ay = 4, s.bx = 8, s.by = 4, s.size = 3;
  Rng rng(seed);
  s.f1 = random_uniform(rng, 1, c, h, w, 0.0f, 0.3f);
  s.f2 = s.f1;
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < s.size; ++y)
      for (int x = 0; x < s.size; ++x) {
        s.f1.at(0, ci, s.ay + y, s.ax + x) = 2.0f + 0.1f * static_cast<float>(ci);
        s.f2.at(0, ci, s.by + y, s.bx + x) = 2.0f + 0.1f * static_cast<float>(ci);
      }
  s.flow = Tensor4(1, 2, h, w);
  for (int y = 0; y < s.size; ++y)
    for (int x = 0; x < s.size; ++x)
      s.flow.at(0, 0, s.ay + y, s.ax + x) = static_cast<float>(s.bx - s.ax);
  return s;
}

}  // namespace

TEST_CASE("SearchSpec offset/channel mapping is bijective, 81 channels at r=4") {
  SearchSpec spec{4, true};
  REQUIRE(spec.channels() == 81);
  std::vector<bool> seen(spec.channels(), false);
  for (int dy = -4; dy <= 4; ++dy)
    for (int dx = -4; dx <= 4; ++dx) {
      const int ch = spec.channel_of(dy, dx);
      REQUIRE(ch >= 0);
      REQUIRE(ch < 81);
      REQUIRE_FALSE(seen[ch]);
      seen[ch] = true;
      const auto [by, bx] = spec.offset_of(ch);
      REQUIRE(by == dy);
      REQUIRE(bx == dx);
    }
  REQUIRE(spec.channel_of(-4, -4) == 0);   // row-major, dy outer
  REQUIRE(spec.channel_of(-4, 4) == 8);
  REQUIRE(spec.channel_of(0, 0) == 40);
}

TEST_CASE("warp with zero flow is the identity") {
  Rng rng(3);
  const Tensor4 f = random_uniform(rng, 2, 3, 6, 7, -1.0f, 1.0f);
  Tape tape;
  const Tensor4& out = tape.value(warp(tape, tape.leaf(f), tape.leaf(Tensor4(2, 2, 6, 7))));
  REQUIRE(oracles::max_abs_diff(out, f) == 0.0);
}

TEST_CASE("warp with integer flow (1, 0) shifts left and zero-fills the edge") {
  Rng rng(4);
  const Tensor4 f = random_uniform(rng, 1, 2, 4, 5, 0.1f, 1.0f);
  Tensor4 flow(1, 2, 4, 5);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 5; ++x) flow.at(0, 0, y, x) = 1.0f;
  Tape tape;
  const Tensor4& out = tape.value(warp(tape, tape.leaf(f), tape.leaf(flow)));
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) REQUIRE(out.at(0, c, y, x) == f.at(0, c, y, x + 1));
      REQUIRE(out.at(0, c, y, 4) == 0.0f);
    }
}

TEST_CASE("warp duplicates content when two sources read one target") {
  const GhostScene s = make_ghost_scene(11);
  Tape tape;
  const Tensor4& warped = tape.value(warp(tape, tape.leaf(s.f2), tape.leaf(s.flow)));
  // Blob content appears at A (through the flow) and again at B (zero flow).
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s.size; ++y)
      for (int x = 0; x < s.size; ++x) {
        REQUIRE(warped.at(0, c, s.ay + y, s.ax + x) ==
                s.f2.at(0, c, s.by + y, s.bx + x));
        REQUIRE(warped.at(0, c, s.by + y, s.bx + x) ==
                s.f2.at(0, c, s.by + y, s.bx + x));
      }
}

TEST_CASE("cost_volume_warping: all-ones features give unit interior costs") {
  const int C = 5;
  const Tensor4 ones = Tensor4::full(1, C, 8, 8, 1.0f);
  SearchSpec spec{2, true};
  Tape tape;
  const auto cv =
      cost_volume_warping(tape, tape.leaf(ones), tape.leaf(ones), tape.leaf(Tensor4(1, 2, 8, 8)), spec);
  const Tensor4& out = tape.value(cv.costs);
  for (int ch = 0; ch < spec.channels(); ++ch) {
    const auto [dy, dx] = spec.offset_of(ch);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const bool interior = y + dy >= 0 && y + dy < 8 && x + dx >= 0 && x + dx < 8;
        if (interior)
          REQUIRE(out.at(0, ch, y, x) == Catch::Approx(1.0f));
        else
          REQUIRE(out.at(0, ch, y, x) == 0.0f);
      }
  }
}

TEST_CASE("cost volumes with r=0, zero flow reduce to per-pixel inner products") {
  Rng rng(5);
  const Tensor4 f1 = random_uniform(rng, 1, 4, 5, 5, -1.0f, 1.0f);
  const Tensor4 f2 = random_uniform(rng, 1, 4, 5, 5, -1.0f, 1.0f);
  SearchSpec spec{0, true};
  Tape tape;
  const auto cv = cost_volume_warping(tape, tape.leaf(f1), tape.leaf(f2),
                                      tape.leaf(Tensor4(1, 2, 5, 5)), spec);
  const Tensor4& out = tape.value(cv.costs);
  REQUIRE(out.c == 1);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      double dot = 0.0;
      for (int c = 0; c < 4; ++c)
        dot += static_cast<double>(f1.at(0, c, y, x)) * f2.at(0, c, y, x);
      REQUIRE(out.at(0, 0, y, x) == Catch::Approx(dot / 4.0).margin(1e-6));
    }
}

TEST_CASE("cost_volume_warping matches the literal Eq.1 oracle") {
  Rng rng(6);
  const Tensor4 f1 = random_uniform(rng, 1, 4, 6, 6, -1.0f, 1.0f);
  const Tensor4 f2 = random_uniform(rng, 1, 4, 6, 6, -1.0f, 1.0f);
  const Tensor4 flow = rand_flow(rng, 1, 6, 6, 1.5);
  SearchSpec spec{2, true};
  Tape tape;
  const auto cv =
      cost_volume_warping(tape, tape.leaf(f1), tape.leaf(f2), tape.leaf(flow), spec);
  const Tensor4 expect =
      oracles::cost_volume_warping_naive(f1, f2, flow, spec.radius, spec.normalize);
  REQUIRE(oracles::max_abs_diff(tape.value(cv.costs), expect) < 1e-5);
}

TEST_CASE("cost_volume_sampling matches the literal Eq.2 oracle") {
  Rng rng(7);
  const Tensor4 f1 = random_uniform(rng, 1, 4, 6, 6, -1.0f, 1.0f);
  const Tensor4 f2 = random_uniform(rng, 1, 4, 6, 6, -1.0f, 1.0f);
  const Tensor4 flow = rand_flow(rng, 1, 6, 6, 1.5);
  SearchSpec spec{2, true};
  Tape tape;
  const auto cv =
      cost_volume_sampling(tape, tape.leaf(f1), tape.leaf(f2), tape.leaf(flow), spec);
  const Tensor4 expect =
      oracles::cost_volume_sampling_naive(f1, f2, flow, spec.radius, spec.normalize);
  REQUIRE(oracles::max_abs_diff(tape.value(cv.costs), expect) < 1e-5);
}

TEST_CASE("zero-flow identity: sampling equals warping") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 4 + trial % 3, w = 5 + trial % 4, c = 2 + trial % 3;
    const Tensor4 f1 = random_uniform(rng, 1, c, h, w, -1.0f, 1.0f);
    const Tensor4 f2 = random_uniform(rng, 1, c, h, w, -1.0f, 1.0f);
    SearchSpec spec{1 + trial % 3, true};
    Tape tape;
    const auto zero = tape.leaf(Tensor4(1, 2, h, w));
    const auto a = cost_volume_sampling(tape, tape.leaf(f1), tape.leaf(f2), zero, spec);
    const auto b = cost_volume_warping(tape, tape.leaf(f1), tape.leaf(f2), zero, spec);
    REQUIRE(oracles::max_abs_diff(tape.value(a.costs), tape.value(b.costs)) < 1e-6);
  }
}

TEST_CASE("constant integer flow: sampling equals direct gather of shifted f2") {
  Rng rng(9);
  const Tensor4 f1 = random_uniform(rng, 1, 3, 6, 6, -1.0f, 1.0f);
  const Tensor4 f2 = random_uniform(rng, 1, 3, 6, 6, -1.0f, 1.0f);
  Tensor4 flow(1, 2, 6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      flow.at(0, 0, y, x) = 2.0f;
      flow.at(0, 1, y, x) = -1.0f;
    }
  SearchSpec spec{1, true};
  Tape tape;
  const auto cv =
      cost_volume_sampling(tape, tape.leaf(f1), tape.leaf(f2), tape.leaf(flow), spec);
  const Tensor4& out = tape.value(cv.costs);
  for (int ch = 0; ch < spec.channels(); ++ch) {
    const auto [dy, dx] = spec.offset_of(ch);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        const int ty = y - 1 + dy, tx = x + 2 + dx;
        double dot = 0.0;
        if (ty >= 0 && ty < 6 && tx >= 0 && tx < 6)
          for (int c = 0; c < 3; ++c)
            dot += static_cast<double>(f1.at(0, c, y, x)) * f2.at(0, c, ty, tx);
        REQUIRE(out.at(0, ch, y, x) == Catch::Approx(dot / 3.0).margin(1e-6));
      }
  }
}

TEST_CASE("both volumes are bilinear: scaling f1 scales all costs") {
  Rng rng(10);
  const Tensor4 f1 = random_uniform(rng, 1, 3, 5, 5, -1.0f, 1.0f);
  const Tensor4 f2 = random_uniform(rng, 1, 3, 5, 5, -1.0f, 1.0f);
  const Tensor4 flow = rand_flow(rng, 1, 5, 5, 1.0);
  Tensor4 f1s = f1;
  for (auto& v : f1s.data) v *= 2.5f;
  SearchSpec spec{1, true};
  for (const bool sampling : {false, true}) {
    Tape tape;
    auto make = [&](const Tensor4& a) {
      return sampling
                 ? cost_volume_sampling(tape, tape.leaf(a), tape.leaf(f2), tape.leaf(flow), spec)
                 : cost_volume_warping(tape, tape.leaf(a), tape.leaf(f2), tape.leaf(flow), spec);
    };
    const Tensor4& base = tape.value(make(f1).costs);
    const Tensor4& scaled = tape.value(make(f1s).costs);
    for (int64_t i = 0; i < base.numel(); ++i)
      REQUIRE(std::abs(2.5 * base.data[i] - scaled.data[i]) < 1e-6);
  }
}

TEST_CASE("fused sampling kernel is bit-identical to the per-offset naive path") {
  Rng rng(12);
  const Tensor4 f1 = random_uniform(rng, 2, 4, 7, 7, -1.0f, 1.0f);
  const Tensor4 f2 = random_uniform(rng, 2, 4, 7, 7, -1.0f, 1.0f);
  const Tensor4 flow = rand_flow(rng, 2, 7, 7, 2.0);
  SearchSpec spec{2, true};
  Tape tape;
  const auto cv =
      cost_volume_sampling(tape, tape.leaf(f1), tape.leaf(f2), tape.leaf(flow), spec);
  const Tensor4& fused = tape.value(cv.costs);

  // Naive route: one independent sample per (x, d) pair, nothing hoisted out
  // of the offset loop. The search offset shifts corner indices, never the
  // float coordinate: d is an integer grid displacement, and adding it to the
  // coordinate first would round (frac(x+u+d) can differ from frac(x+u) by an
  // ulp when the exponent grows), which is why the kernel may share one
  // fractional part across all 81 offsets exactly.
  for (int ch = 0; ch < spec.channels(); ++ch) {
    const auto [dy, dx] = spec.offset_of(ch);
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
          const auto b = detail::make_bilinear_coeff(static_cast<float>(x) + flow.at(n, 0, y, x),
                                                     static_cast<float>(y) + flow.at(n, 1, y, x));
          double acc = 0.0;
          for (int c = 0; c < 4; ++c)
            acc += static_cast<double>(f1.at(n, c, y, x)) *
                   static_cast<double>(detail::sample_plane(f2.plane(n, c), 7, 7, b, dx, dy));
          const float expect = static_cast<float>(acc * (1.0 / 4.0));
          REQUIRE(fused.at(n, ch, y, x) == expect);
        }
  }

  // The public bilinear_sample route (coordinates pre-added in float) agrees
  // to interpolation accuracy.
  const Tape::Id f2id = tape.leaf(f2);
  for (const int ch : {0, spec.channels() / 2, spec.channels() - 1}) {
    const auto [dy, dx] = spec.offset_of(ch);
    Tensor4 cx(2, 1, 7, 7), cy(2, 1, 7, 7);
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
          cx.at(n, 0, y, x) =
              (static_cast<float>(x) + flow.at(n, 0, y, x)) + static_cast<float>(dx);
          cy.at(n, 0, y, x) =
              (static_cast<float>(y) + flow.at(n, 1, y, x)) + static_cast<float>(dy);
        }
    const Tensor4& sampled =
        tape.value(bilinear_sample(tape, f2id, tape.leaf(cx), tape.leaf(cy)));
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
          double acc = 0.0;
          for (int c = 0; c < 4; ++c)
            acc += static_cast<double>(f1.at(n, c, y, x)) *
                   static_cast<double>(sampled.at(n, c, y, x));
          REQUIRE(fused.at(n, ch, y, x) ==
                  Catch::Approx(acc * (1.0 / 4.0)).margin(2e-6));
        }
  }
}

TEST_CASE("ghosting divergence witness: warping and sampling volumes differ") {
  const GhostScene s = make_ghost_scene(13);
  SearchSpec spec{2, true};
  Tape tape;
  const auto w =
      cost_volume_warping(tape, tape.leaf(s.f1), tape.leaf(s.f2), tape.leaf(s.flow), spec);
  const auto p =
      cost_volume_sampling(tape, tape.leaf(s.f1), tape.leaf(s.f2), tape.leaf(s.flow), spec);
  const Tensor4& wv = tape.value(w.costs);
  const Tensor4& sv = tape.value(p.costs);
  REQUIRE(oracles::max_abs_diff(wv, sv) > 0.1);

  // The divergence is localized where the ghost lives: near A, background
  // pixels see blob content in the warped feature but not in f2 itself.
  double near_a = 0.0;
  for (int ch = 0; ch < spec.channels(); ++ch)
    for (int y = s.ay - 1; y < s.ay + s.size + 1; ++y)
      for (int x = s.ax - 1; x < s.ax + s.size + 1; ++x)
        near_a = std::max(near_a, std::abs(static_cast<double>(wv.at(0, ch, y, x)) -
                                           sv.at(0, ch, y, x)));
  REQUIRE(near_a > 0.1);
}

TEST_CASE("cost volume kernels are bit-identical across thread counts") {
  Rng rng(14);
  const Tensor4 f1 = random_uniform(rng, 1, 8, 12, 12, -1.0f, 1.0f);
  const Tensor4 f2 = random_uniform(rng, 1, 8, 12, 12, -1.0f, 1.0f);
  const Tensor4 flow = rand_flow(rng, 1, 12, 12, 2.0);
  SearchSpec spec{4, true};
  set_thread_count(1);
  Tape t1;
  const Tensor4 a =
      t1.value(cost_volume_sampling(t1, t1.leaf(f1), t1.leaf(f2), t1.leaf(flow), spec).costs);
  set_thread_count(6);
  Tape t2;
  const Tensor4 b =
      t2.value(cost_volume_sampling(t2, t2.leaf(f1), t2.leaf(f2), t2.leaf(flow), spec).costs);
  set_thread_count(1);
  REQUIRE(std::memcmp(a.data.data(), b.data.data(), a.data.size() * 4) == 0);
}

TEST_CASE("cost volumes reject mismatched shapes with axis names") {
  Tape tape;
  const auto f1 = tape.leaf(Tensor4(1, 3, 4, 4));
  const auto f2 = tape.leaf(Tensor4(1, 3, 4, 5));
  const auto flow = tape.leaf(Tensor4(1, 2, 4, 4));
  SearchSpec spec{1, true};
  REQUIRE_THROWS_AS(cost_volume_sampling(tape, f1, f2, flow, spec), ShapeError);
  const auto bad_flow = tape.leaf(Tensor4(1, 3, 4, 4));
  REQUIRE_THROWS_WITH(cost_volume_sampling(tape, f1, f1, bad_flow, spec),
                      Catch::Matchers::ContainsSubstring("2 channels"));
}
