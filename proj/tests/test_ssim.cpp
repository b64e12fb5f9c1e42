#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "relight/ssim.hpp"

using namespace relight;

TEST_CASE("ssim_map identity and closed forms") {
  SECTION("identical frames give SSIM 1 everywhere") {
    Rng rng(21);
    const Frame f = testutil::random_frame(rng, 24, 24);
    const Frame s = ssim_map(f, f);
    for (double v : s.data) REQUIRE(v == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("constant frames, hand-evaluated") {
    // means 0.2 / 0.6, zero variance, c1 = 1e-4: the c2 factors cancel and
    // SSIM = 0.2401 / 0.4001 everywhere.
    SsimConfig cfg;
    cfg.c1 = 1e-4;
    const Frame r = testutil::constant_frame(16, 16, 0.2);
    const Frame t = testutil::constant_frame(16, 16, 0.6);
    const double expected = 0.2401 / 0.4001;
    const Frame s = ssim_map(r, t, cfg);
    for (double v : s.data) REQUIRE(v == Catch::Approx(expected).margin(1e-9));
  }
  SECTION("equal means and zero variances: SSIM 1 even for 1 - reference") {
    const Frame r = testutil::constant_frame(16, 16, 0.5);
    Frame t = r;
    for (double& v : t.data) v = 1.0 - v;
    const Frame s = ssim_map(r, t);
    for (double v : s.data) REQUIRE(v == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("dimension mismatch is an error") {
    REQUIRE_THROWS(
        ssim_map(testutil::constant_frame(16, 16, 0.5),
                 testutil::constant_frame(16, 12, 0.5)));
  }
}

TEST_CASE("ssim_map properties") {
  Rng rng(22);
  SECTION("symmetry and range") {
    for (int trial = 0; trial < 10; ++trial) {
      const Frame a = testutil::random_frame(rng, 20, 20);
      const Frame b = testutil::random_frame(rng, 20, 20);
      const Frame ab = ssim_map(a, b);
      const Frame ba = ssim_map(b, a);
      for (std::size_t i = 0; i < ab.data.size(); ++i) {
        REQUIRE(ab.data[i] == Catch::Approx(ba.data[i]).margin(1e-12));
        REQUIRE(ab.data[i] <= 1.0 + 1e-9);
      }
    }
  }
}

TEST_CASE("masked_ssim_loss") {
  SsimConfig cfg;
  SECTION("identical frames, full mask, loss 0") {
    const Frame f = testutil::constant_frame(16, 16, 0.4);
    const auto mask = specular_mask(f, cfg.mask_threshold);
    REQUIRE(masked_ssim_loss(f, f, mask, cfg) ==
            Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("constant-frame pair loss") {
    SsimConfig c = cfg;
    c.c1 = 1e-4;
    const Frame r = testutil::constant_frame(16, 16, 0.2);
    const Frame t = testutil::constant_frame(16, 16, 0.6);
    const auto mask = specular_mask(t, c.mask_threshold);
    REQUIRE(masked_ssim_loss(r, t, mask, c) ==
            Catch::Approx(1.0 - 0.2401 / 0.4001).margin(1e-6));
  }
  SECTION("empty mask is an explicit error") {
    const Frame bright = testutil::constant_frame(16, 16, 0.9);
    const auto mask = specular_mask(bright, cfg.mask_threshold);
    REQUIRE(mask.kept_count() == 0);
    REQUIRE_THROWS_AS(masked_ssim_loss(bright, bright, mask, cfg),
                      EmptyMaskError);
  }
  SECTION("constant frames: loss zero iff means equal, increasing in gap") {
    const Frame r = testutil::constant_frame(16, 16, 0.3);
    const auto mask = specular_mask(r, cfg.mask_threshold);
    double prev = masked_ssim_loss(r, testutil::constant_frame(16, 16, 0.3),
                                   mask, cfg);
    REQUIRE(prev == Catch::Approx(0.0).margin(1e-12));
    for (double mu : {0.35, 0.4, 0.5, 0.6}) {
      const double loss =
          masked_ssim_loss(r, testutil::constant_frame(16, 16, mu), mask, cfg);
      REQUIRE(loss > prev);
      prev = loss;
    }
  }
  SECTION("subset of pointwise-smaller losses cannot increase the mean") {
    Rng rng(23);
    const Frame a = testutil::random_frame(rng, 20, 20);
    const Frame b = testutil::random_frame(rng, 20, 20);
    SpecularMask full;
    full.width = 20;
    full.height = 20;
    full.keep.assign(400, 1);
    const double mean_loss = masked_ssim_loss(a, b, full);
    const Frame s = ssim_map(a, b);
    SpecularMask subset = full;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < s.data.size(); ++i) {
      subset.keep[i] = (1.0 - s.data[i]) <= mean_loss ? 1 : 0;
      kept += subset.keep[i];
    }
    REQUIRE(kept > 0);
    REQUIRE(masked_ssim_loss(a, b, subset) <= mean_loss + 1e-12);
  }
}

TEST_CASE("loss_gradient_wrt_target") {
  SsimConfig cfg;
  SECTION("zero at the perfect-similarity minimum") {
    Rng rng(24);
    const Frame f = testutil::random_frame(rng, 16, 16, 1, 0.1, 0.65);
    const auto mask = specular_mask(f, cfg.mask_threshold);
    const Frame g = loss_gradient_wrt_target(f, f, mask, cfg);
    for (double v : g.data) REQUIRE(std::fabs(v) < 1e-8);
  }
  SECTION("matches central finite differences on a random pair") {
    Rng rng(25);
    const Frame r = testutil::random_frame(rng, 16, 16, 1, 0.05, 0.95);
    Frame t = testutil::random_frame(rng, 16, 16, 1, 0.05, 0.95);
    const auto mask = specular_mask(t, cfg.mask_threshold);
    const Frame grad = loss_gradient_wrt_target(r, t, mask, cfg);
    const double h = 1e-6;
    for (std::size_t i = 0; i < t.data.size(); i += 7) {
      Frame tp = t, tm = t;
      tp.data[i] += h;
      tm.data[i] -= h;
      const double fd = (masked_ssim_loss(r, tp, mask, cfg) -
                         masked_ssim_loss(r, tm, mask, cfg)) /
                        (2.0 * h);
      const double denom = std::max(std::fabs(fd) + std::fabs(grad.data[i]), 1e-8);
      REQUIRE(std::fabs(fd - grad.data[i]) / denom < 1e-5);
    }
  }
}
