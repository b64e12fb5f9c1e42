#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "relight/controller.hpp"

using namespace relight;

namespace {

ControllerParams identity_params(ControllerArch arch = {}) {
  ControllerParams p = ControllerParams::zeros(arch);
  p.head_bias[0] = 1.0;
  return p;
}

Sequence random_sequence(Rng& rng, int n, int w = 64, int h = 64) {
  Sequence s;
  for (int i = 0; i < n; ++i) {
    Frame f = testutil::random_frame(rng, w, h);
    f.index = i;
    s.frames.push_back(std::move(f));
  }
  return s;
}

}  // namespace

TEST_CASE("step with zero weights is driven by the head bias") {
  Rng rng(31);
  const Frame input = testutil::random_frame(rng, 64, 64);
  const auto state = ControllerState::zero(ControllerArch{});
  SECTION("head bias 1 gives gamma exactly 1") {
    const auto [g, next] = step(identity_params(), state, input);
    REQUIRE(g.value == 1.0);
  }
  SECTION("head bias -1 clamps at the floor") {
    ControllerParams p = ControllerParams::zeros(ControllerArch{});
    p.head_bias[0] = -1.0;
    const auto [g, next] = step(p, state, input);
    REQUIRE(g.value == 0.1);
  }
}

TEST_CASE("step is deterministic and bounded") {
  Rng rng(32);
  ControllerParams p = ControllerParams::init(ControllerArch{}, rng);
  const Frame input = testutil::random_frame(rng, 64, 64);
  auto state = ControllerState::zero(p.arch);
  const auto [g1, s1] = step(p, state, input);
  const auto [g2, s2] = step(p, state, input);
  REQUIRE(g1.value == g2.value);
  REQUIRE(s1.h.v == s2.h.v);
  REQUIRE(g1.value >= 0.1);
  REQUIRE(g1.value <= 10.0);
  // h is the product of a sigmoid and a tanh, so strictly inside (-1, 1)
  for (double v : s1.h.v) {
    REQUIRE(v > -1.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("step validates shapes and flags non-finite activations") {
  Rng rng(33);
  ControllerParams p = ControllerParams::init(ControllerArch{}, rng);
  const auto state = ControllerState::zero(p.arch);
  REQUIRE_THROWS(step(p, state, testutil::random_frame(rng, 32, 32)));
  ControllerParams bad = p;
  bad.conv1_weight[0] = 1e308;
  bad.conv1_weight[1] = 1e308;
  REQUIRE_THROWS_WITH(step(bad, state, testutil::constant_frame(64, 64, 0.9)),
                      Catch::Matchers::ContainsSubstring("conv1"));
}

TEST_CASE("enhance_sequence") {
  Rng rng(34);
  SECTION("identity-initialized controller leaves the sequence unchanged") {
    const Sequence seq = random_sequence(rng, 5);
    const auto [out, trace] = enhance_sequence(identity_params(), seq);
    REQUIRE(out.size() == seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
      REQUIRE(out.frames[i].data == seq.frames[i].data);
      REQUIRE(trace[i].value == 1.0);
    }
  }
  SECTION("single-frame sequence degenerates cleanly") {
    ControllerParams p = ControllerParams::init(ControllerArch{}, rng);
    const Sequence seq = random_sequence(rng, 1);
    const auto [out, trace] = enhance_sequence(p, seq);
    REQUIRE(out.size() == 1);
    REQUIRE(trace.size() == 1);
  }
  SECTION("state resets per sequence") {
    ControllerParams p = ControllerParams::init(ControllerArch{}, rng);
    const Sequence seq = random_sequence(rng, 6);
    const auto [o1, t1] = enhance_sequence(p, seq);
    const auto [o2, t2] = enhance_sequence(p, seq);
    for (std::size_t i = 0; i < t1.size(); ++i) {
      REQUIRE(t1[i].value == t2[i].value);
    }
  }
  SECTION("causality: permuting later frames never changes earlier gammas") {
    ControllerParams p = ControllerParams::init(ControllerArch{}, rng);
    Sequence seq = random_sequence(rng, 8);
    const auto [o1, t1] = enhance_sequence(p, seq);
    std::swap(seq.frames[5], seq.frames[7]);
    const auto [o2, t2] = enhance_sequence(p, seq);
    for (int i = 0; i < 5; ++i) REQUIRE(t1[i].value == t2[i].value);
  }
  SECTION("empty sequence is an error") {
    REQUIRE_THROWS(enhance_sequence(identity_params(), Sequence{}));
  }
}

TEST_CASE("controller stays light-weight") {
  REQUIRE(ControllerParams::zeros(ControllerArch{}).parameter_count() < 10000);
}

TEST_CASE("weight serialization") {
  testutil::TempDir dir("weights");
  Rng rng(35);
  const ControllerParams p = ControllerParams::init(ControllerArch{}, rng);
  const std::string path = (dir.path / "c.weights.json").string();
  save_params(p, path);

  SECTION("round trip is bit exact") {
    const ControllerParams q = load_params(path);
    bool equal = true;
    p.for_each_tensor([&](const char* name, const std::vector<double>& v) {
      q.for_each_tensor([&](const char* n2, const std::vector<double>& w) {
        if (std::string(name) == n2 && v != w) equal = false;
      });
    });
    REQUIRE(equal);
    REQUIRE(q.arch.channels == p.arch.channels);
  }
  SECTION("missing tensor names the tensor") {
    auto j = nlohmann::json::parse(testutil::read_file(path));
    j["tensors"].erase("conv2.bias");
    const std::string bad = (dir.path / "missing.weights.json").string();
    std::ofstream(bad) << j.dump();
    REQUIRE_THROWS_WITH(load_params(bad),
                        Catch::Matchers::ContainsSubstring("conv2.bias"));
  }
  SECTION("wrong version is rejected") {
    auto j = nlohmann::json::parse(testutil::read_file(path));
    j["format_version"] = 2;
    const std::string bad = (dir.path / "v2.weights.json").string();
    std::ofstream(bad) << j.dump();
    REQUIRE_THROWS_WITH(load_params(bad),
                        Catch::Matchers::ContainsSubstring("format_version"));
  }
  SECTION("shape mismatch names the tensor") {
    auto j = nlohmann::json::parse(testutil::read_file(path));
    j["tensors"]["head.weight"]["shape"] = {4};
    const std::string bad = (dir.path / "shape.weights.json").string();
    std::ofstream(bad) << j.dump();
    REQUIRE_THROWS_WITH(load_params(bad),
                        Catch::Matchers::ContainsSubstring("head.weight"));
  }
}
