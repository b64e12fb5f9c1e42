#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "relight/photometric.hpp"
#include "relight/gamma.hpp"

using namespace relight;

namespace {

Frame affine_of(const Frame& f, double s, double o) {
  Frame g = f;
  for (double& v : g.data) v = s * v + o;
  return g;
}

}  // namespace

TEST_CASE("huber") {
  const double d = 0.03;
  REQUIRE(huber(0.0, d) == 0.0);
  REQUIRE(huber(0.01, d) == Catch::Approx(0.5e-4).margin(1e-18));
  REQUIRE(huber(-0.01, d) == huber(0.01, d));
  // quadratic/linear pieces meet at |r| = delta with matching value and slope
  REQUIRE(huber(d, d) == Catch::Approx(0.5 * d * d).margin(1e-18));
  const double h = 1e-9;
  REQUIRE((huber(d + h, d) - huber(d - h, d)) / (2 * h) ==
          Catch::Approx(d).margin(1e-6));
  REQUIRE(huber(0.1, d) == Catch::Approx(d * (0.1 - 0.5 * d)).margin(1e-18));
}

TEST_CASE("photometric_energy") {
  Rng rng(61);
  const Frame a = testutil::random_frame(rng, 16, 16, 1, 0.05, 0.9);
  const auto corr = CorrespondenceSet::identity(16, 16);
  SECTION("identical frames have zero energy") {
    REQUIRE(photometric_energy(a, a, corr, {}, {}) == 0.0);
  }
  SECTION("a pure offset is absorbed by b_j") {
    const Frame b = affine_of(a, 1.0, 0.1);
    REQUIRE(photometric_energy(a, b, corr, {}, AffineBrightness{0.0, 0.1}) ==
            Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("a pure exposure change is absorbed by a_j") {
    Frame b = a;
    for (double& v : b.data) v *= std::exp(0.2);
    REQUIRE(photometric_energy(a, b, corr, {}, AffineBrightness{0.2, 0.0}) ==
            Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("shared exposure shift leaves the energy invariant") {
    const Frame b = affine_of(a, 1.1, 0.02);
    const double e0 = photometric_energy(a, b, corr, {}, {});
    const double e1 = photometric_energy(a, b, corr, AffineBrightness{-0.7, 0.0},
                                         AffineBrightness{-0.7, 0.0});
    REQUIRE(e1 == Catch::Approx(e0).margin(1e-12));
  }
  SECTION("out-of-bounds correspondence names the pair") {
    CorrespondenceSet bad;
    bad.pairs.push_back({16, 3, 0, 0, 1.0});
    REQUIRE_THROWS_WITH(photometric_energy(a, a, bad, {}, {}),
                        Catch::Matchers::ContainsSubstring("(16,3)"));
  }
  SECTION("non-positive weight rejected") {
    CorrespondenceSet bad;
    bad.pairs.push_back({0, 0, 0, 0, 0.0});
    REQUIRE_THROWS(photometric_energy(a, a, bad, {}, {}));
  }
  SECTION("rgb frames rejected") {
    const Frame c = testutil::random_frame(rng, 8, 8, 3, 0.1, 0.9);
    REQUIRE_THROWS(photometric_energy(c, c, CorrespondenceSet::identity(8, 8),
                                      {}, {}));
  }
}

TEST_CASE("fit_affine") {
  Rng rng(62);
  const Frame a = testutil::random_frame(rng, 24, 24, 1, 0.05, 0.9);
  const auto corr = CorrespondenceSet::identity(24, 24);
  SECTION("recovers a known scale and offset with zero residual") {
    const Frame b = affine_of(a, 0.8, 0.05);
    const auto fit = fit_affine(a, b, corr);
    REQUIRE(std::exp(fit.ab_j.a) == Catch::Approx(0.8).margin(1e-12));
    REQUIRE(fit.ab_j.b == Catch::Approx(0.05).margin(1e-12));
    REQUIRE(fit.energy == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("identity pair fits the identity") {
    const auto fit = fit_affine(a, a, corr);
    REQUIRE(fit.ab_j.a == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(fit.ab_j.b == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("constant source intensities are degenerate") {
    const Frame c(24, 24, 1, 0.4);
    REQUIRE_THROWS_WITH(fit_affine(c, a, corr),
                        Catch::Matchers::ContainsSubstring("degenerate"));
  }
  SECTION("a gamma curve is not affine-explainable") {
    const Frame b = apply_gamma(a, GammaValue{0.5});
    const auto fit = fit_affine(a, b, corr);
    REQUIRE(fit.energy > 0.0);
    REQUIRE(fit.energy / corr.pairs.size() > 1e-6);
  }
  SECTION("inverting the gamma restores an affine-trivial pair") {
    const Frame degraded = apply_gamma(a, GammaValue{0.5});
    const Frame restored = apply_gamma(degraded, GammaValue{2.0});
    const auto fit = fit_affine(a, restored, corr);
    REQUIRE(fit.energy == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("sequence_photometric_score") {
  Rng rng(63);
  Sequence seq;
  for (int t = 0; t < 5; ++t) {
    Frame f = testutil::random_frame(rng, 16, 16, 1, 0.05, 0.9);
    f.index = t;
    seq.frames.push_back(std::move(f));
  }
  std::vector<CorrespondenceSet> corr(4, CorrespondenceSet::identity(16, 16));
  SECTION("per-frame affine drift scores (near) zero; random frames do not") {
    const Frame base = testutil::random_frame(rng, 16, 16, 1, 0.05, 0.7);
    Sequence aff;
    for (int t = 0; t < 5; ++t) {
      Frame f = affine_of(base, 1.0 + 0.05 * t, 0.01 * t);
      f.index = t;
      aff.frames.push_back(std::move(f));
    }
    REQUIRE(sequence_photometric_score(aff, corr) ==
            Catch::Approx(0.0).margin(1e-12));
    // a gamma flicker over the same base is not affine-explainable
    Sequence gam;
    const double powers[5] = {1.0, 1.4, 0.7, 1.2, 0.8};
    for (int t = 0; t < 5; ++t) {
      Frame f = apply_gamma(base, GammaValue{powers[t]});
      f.index = t;
      gam.frames.push_back(std::move(f));
    }
    REQUIRE(sequence_photometric_score(gam, corr) > 1e-7);
  }
  SECTION("set count must match pair count") {
    corr.pop_back();
    REQUIRE_THROWS(sequence_photometric_score(seq, corr));
  }
}

TEST_CASE("load_correspondences") {
  testutil::TempDir dir("corr");
  const std::string path = (dir.path / "corr.txt").string();
  {
    std::ofstream out(path);
    out << "# header comment\n";
    out << "1 2 3 4\n";
    out << "5 6 7 8 0.5\n";
    out << "\n";
  }
  const auto c = load_correspondences(path);
  REQUIRE(c.pairs.size() == 2);
  REQUIRE(c.pairs[0].xi == 1);
  REQUIRE(c.pairs[0].weight == 1.0);
  REQUIRE(c.pairs[1].yj == 8);
  REQUIRE(c.pairs[1].weight == 0.5);
  {
    std::ofstream out(path);
    out << "1 2 three 4\n";
  }
  REQUIRE_THROWS(load_correspondences(path));
}
