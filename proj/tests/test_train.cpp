#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "planeforge/errors.hpp"
#include "planeforge/train.hpp"

namespace train = pf::train;
namespace loss = pf::loss;
namespace net = pf::net;
using pf::RngStream;

namespace {

train::TrainingConfig tiny_config(int colors, std::int64_t steps, std::uint64_t seed) {
  train::TrainingConfig tc;
  tc.steps = steps;
  tc.lr_initial = 1e-3;
  tc.seed = seed;
  tc.loss_spec.variant = loss::Variant::Unit;
  tc.loss_spec.num_colors = colors;
  tc.loss_spec.box_radius = 2.0;
  tc.loss_spec.batch_centers = 256;
  tc.loss_spec.batch_peripherals = 4;
  tc.eval_every = 64;
  tc.eval_pairs = 2000;
  return tc;
}

net::Network net_for(const train::TrainingConfig& tc, std::vector<int> hidden) {
  net::NetworkArchitecture a;
  a.input_dim = tc.loss_spec.expected_input_dim();
  a.spatial_dim = tc.loss_spec.dimension;
  a.hidden_widths = std::move(hidden);
  a.num_colors = tc.loss_spec.num_colors;
  return net::init_network(a, tc.seed);
}

}  // namespace

TEST_CASE("lr schedule is affine to zero") {
  train::TrainingConfig tc = tiny_config(3, 1000, 1);
  CHECK(train::lr_at(0, tc) == 1e-3);
  CHECK(train::lr_at(500, tc) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(train::lr_at(999, tc) == doctest::Approx(1e-3 / 1000.0).epsilon(1e-12));
  CHECK_THROWS_AS(train::lr_at(1000, tc), std::invalid_argument);
  CHECK_THROWS_AS(train::lr_at(-1, tc), std::invalid_argument);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  train::TrainingConfig tc = tiny_config(3, 10, 1);
  std::vector<double> params{0.5, -0.25, 1.0};
  auto state = train::make_adam_state(params.size());
  std::vector<double> grads(3, 0.0);
  auto before = params;
  train::adam_update(state, params, grads, 1e-3, tc);
  CHECK(params == before);
}

TEST_CASE("adam: first step moves by about lr against the gradient") {
  train::TrainingConfig tc = tiny_config(3, 10, 1);
  std::vector<double> params{0.0, 0.0};
  auto state = train::make_adam_state(2);
  std::vector<double> grads{0.37, -2.4};
  train::adam_update(state, params, grads, 1e-3, tc);
  for (std::size_t i = 0; i < 2; ++i) {
    double delta = params[i];
    CHECK(std::fabs(delta) >= 0.99e-3);
    CHECK(std::fabs(delta) <= 1.0e-3);
    CHECK(std::signbit(delta) == std::signbit(-grads[i]));
  }
}

TEST_CASE("adam is deterministic and rejects non-finite gradients") {
  train::TrainingConfig tc = tiny_config(3, 10, 1);
  std::vector<double> p1{0.1, 0.2}, p2{0.1, 0.2};
  auto s1 = train::make_adam_state(2);
  auto s2 = train::make_adam_state(2);
  std::vector<double> g{1.0, -1.0};
  for (int i = 0; i < 5; ++i) {
    train::adam_update(s1, p1, g, 1e-3, tc);
    train::adam_update(s2, p2, g, 1e-3, tc);
  }
  CHECK(p1 == p2);

  std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(train::adam_update(s1, p1, bad, 1e-3, tc), pf::NumericError);
}

TEST_CASE("training is bit-deterministic given the seed") {
  train::TrainingConfig tc = tiny_config(3, 40, 9);
  auto n0 = net_for(tc, {16});
  auto [t1, h1] = train::train(n0, tc, RngStream(tc.seed));
  auto [t2, h2] = train::train(n0, tc, RngStream(tc.seed));
  CHECK(t1.parameters == t2.parameters);
  REQUIRE(h1.records.size() == h2.records.size());
  for (std::size_t i = 0; i < h1.records.size(); ++i) {
    CHECK(h1.records[i].loss == h2.records[i].loss);
    CHECK(h1.records[i].conflict_rate == h2.records[i].conflict_rate);
  }
}

TEST_CASE("history length is ceil(steps / eval_every)") {
  for (auto [steps, every] : std::vector<std::pair<std::int64_t, std::int64_t>>{
           {40, 64}, {64, 64}, {100, 30}, {128, 64}}) {
    train::TrainingConfig tc = tiny_config(3, steps, 3);
    tc.eval_every = every;
    tc.loss_spec.batch_centers = 32;
    tc.eval_pairs = 200;
    auto n0 = net_for(tc, {8});
    auto [t, h] = train::train(n0, tc, RngStream(tc.seed));
    CHECK(h.records.size() == static_cast<std::size_t>((steps + every - 1) / every));
    for (std::size_t i = 1; i < h.records.size(); ++i)
      CHECK(h.records[i].step > h.records[i - 1].step);
  }
}

TEST_CASE("training rejects mismatched architectures") {
  train::TrainingConfig tc = tiny_config(3, 10, 1);
  net::NetworkArchitecture a;
  a.input_dim = 2;
  a.spatial_dim = 2;
  a.hidden_widths = {8};
  a.num_colors = 5;  // spec wants 3
  auto n0 = net::init_network(a, 1);
  CHECK_THROWS_AS(train::train(n0, tc, RngStream(1)), pf::ConfigError);
}

TEST_CASE("smoke: loss trends down over a short 7-color run (3 of 5 seeds)") {
  int successes = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    train::TrainingConfig tc = tiny_config(7, 768, seed);
    tc.eval_every = 16;
    tc.eval_pairs = 500;
    auto n0 = net_for(tc, {32});
    auto [t, h] = train::train(n0, tc, RngStream(seed));
    std::size_t tenth = h.records.size() / 10;
    REQUIRE(tenth >= 1);
    double first = 0, last = 0;
    for (std::size_t i = 0; i < tenth; ++i) {
      first += h.records[i].loss;
      last += h.records[h.records.size() - 1 - i].loss;
    }
    if (last <= first) ++successes;
    for (double p : t.parameters) REQUIRE(std::isfinite(p));
  }
  CHECK(successes >= 3);
}
