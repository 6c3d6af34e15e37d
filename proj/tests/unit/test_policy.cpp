#include <doctest.h>

#include <cmath>

#include "triage/error.hpp"
#include "triage/policy.hpp"

using namespace triage;

namespace {

// Plain-loop forward pass used as an independent oracle.
std::array<double, 4> oracle_forward(const PolicyParams& p, const std::vector<double>& s) {
  std::vector<double> h1(p.dims.hidden1), h2(p.dims.hidden2);
  for (std::size_t i = 0; i < p.dims.hidden1; ++i) {
    double acc = p.b1(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < p.dims.input; ++j) acc += p.w1(i, j) * s[j];
    h1[i] = std::max(0.0, acc);
  }
  for (std::size_t i = 0; i < p.dims.hidden2; ++i) {
    double acc = p.b2(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < p.dims.hidden1; ++j) acc += p.w2(i, j) * h1[j];
    h2[i] = std::max(0.0, acc);
  }
  std::array<double, 4> out{};
  for (std::size_t a = 0; a < 3; ++a) {
    double acc = p.bp(static_cast<Eigen::Index>(a));
    for (std::size_t j = 0; j < p.dims.hidden2; ++j) acc += p.wp(a, j) * h2[j];
    out[a] = acc;
  }
  double v = p.bv(0);
  for (std::size_t j = 0; j < p.dims.hidden2; ++j) v += p.wv(0, j) * h2[j];
  out[3] = v;
  return out;
}

ActionDistribution dist_of(double a, double b, double c) {
  ActionDistribution d;
  d.probs = {a, b, c};
  return d;
}

}  // namespace

TEST_CASE("zero parameters give a uniform distribution") {
  const auto p = PolicyParams::zeros({10});
  const auto d = policy_forward(p, std::vector<double>(10, 1.0), false, nullptr);
  for (double x : d.probs) CHECK(x == doctest::Approx(1.0 / 3.0));
  CHECK(d.value == 0.0);
  CHECK(p.dims.hidden1 == 256);
  CHECK(p.dims.hidden2 == 128);
}

TEST_CASE("seeded initialization, zero state") {
  const auto p = PolicyParams::init({93}, 0);
  const std::vector<double> zero(93, 0.0);
  const auto d = policy_forward(p, zero, false, nullptr);
  // Zero biases: the zero state maps to zero logits and a zero value.
  for (double x : d.probs) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(d.value == 0.0);
  const double limit = std::sqrt(6.0 / (93.0 + 256.0));
  CHECK(p.w1.cwiseAbs().maxCoeff() <= limit);
  CHECK(p.w1.cwiseAbs().maxCoeff() > 0.5 * limit);
  CHECK(p.b1.isZero());
  CHECK(PolicyParams::init({93}, 0).flat() == p.flat());
  CHECK(PolicyParams::init({93}, 1).flat() != p.flat());
}

TEST_CASE("forward pass matches a loop oracle and the pinned golden output") {
  const auto p = PolicyParams::init({8, 16, 8}, 0);
  std::vector<double> s(8);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.25 * static_cast<double>(i) - 0.8;
  const auto d = policy_forward(p, s, false, nullptr);
  const auto o = oracle_forward(p, s);
  for (std::size_t a = 0; a < 3; ++a) CHECK(d.logits[a] == doctest::Approx(o[a]).epsilon(1e-12));
  CHECK(d.value == doctest::Approx(o[3]).epsilon(1e-12));
  CHECK(d.probs[0] == doctest::Approx(0.3626258729901799).epsilon(1e-12));
  CHECK(d.probs[1] == doctest::Approx(0.45627075457830146).epsilon(1e-12));
  CHECK(d.probs[2] == doctest::Approx(0.18110337243151858).epsilon(1e-12));
  CHECK(d.value == doctest::Approx(0.38272861830294219).epsilon(1e-12));
}

TEST_CASE("eval mode is deterministic; training applies dropout") {
  const auto p = PolicyParams::init({6}, 3);
  const std::vector<double> s{1, -1, 0.5, 2, 0, -0.3};
  const auto a = policy_forward(p, s, false, nullptr);
  const auto b = policy_forward(p, s, false, nullptr);
  CHECK(a.probs == b.probs);
  CHECK(a.value == b.value);
  Rng r1(5), r2(5);
  const auto t1 = policy_forward(p, s, true, &r1);
  const auto t2 = policy_forward(p, s, true, &r2);
  CHECK(t1.probs == t2.probs);
  CHECK(t1.probs != a.probs);
  CHECK_THROWS_AS(policy_forward(p, s, true, nullptr), ValidationError);
  CHECK_THROWS_AS(policy_forward(p, std::vector<double>(5, 0.0), false, nullptr), DimensionMismatch);
}

TEST_CASE("confidence signals") {
  auto c = confidence({1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(c.entropy == doctest::Approx(std::log(3.0)));
  CHECK(c.top2_gap == doctest::Approx(0.0));
  c = confidence({1, 0, 0});
  CHECK(c.entropy == 0.0);
  CHECK(c.top2_gap == 1.0);
  const auto [action, sig] = select_action(dist_of(0.9, 0.05, 0.05), SelectMode::Greedy, false, nullptr);
  CHECK(action == TriageAction::ClassifyTP);
  CHECK(sig.top2_gap == doctest::Approx(0.85));
}

TEST_CASE("greedy ties follow action order and masking renormalizes") {
  CHECK(select_action(dist_of(1.0 / 3, 1.0 / 3, 1.0 / 3), SelectMode::Greedy, false, nullptr).first ==
        TriageAction::ClassifyTP);
  CHECK(select_action(dist_of(0.2, 0.4, 0.4), SelectMode::Greedy, false, nullptr).first ==
        TriageAction::ClassifyFP);
  CHECK(select_action(dist_of(0.1, 0.2, 0.7), SelectMode::Greedy, true, nullptr).first ==
        TriageAction::ClassifyFP);
  const auto m = masked_probs({0.1, 0.3, 0.6}, true);
  CHECK(m[0] == doctest::Approx(0.25));
  CHECK(m[1] == doctest::Approx(0.75));
  CHECK(m[2] == 0.0);
  CHECK_THROWS_AS(masked_probs({0.0, 0.0, 1.0}, true), DegenerateDistribution);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    CHECK(select_action(dist_of(0.1, 0.2, 0.7), SelectMode::Sample, true, &rng).first != TriageAction::Fuzz);
  }
}

TEST_CASE("sampling follows the distribution") {
  Rng rng(9);
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 20000; ++i) {
    ++counts[static_cast<int>(select_action(dist_of(0.2, 0.5, 0.3), SelectMode::Sample, false, &rng).first)];
  }
  CHECK(counts[0] / 20000.0 == doctest::Approx(0.2).epsilon(0.1));
  CHECK(counts[1] / 20000.0 == doctest::Approx(0.5).epsilon(0.05));
  CHECK(counts[2] / 20000.0 == doctest::Approx(0.3).epsilon(0.1));
}

TEST_CASE("property: softmax shift invariance, entropy bounds, greedy scale invariance") {
  Rng rng(4);
  auto p = PolicyParams::init({4, 8, 6}, 2);
  const std::vector<double> s{0.3, -1.2, 0.8, 0.1};
  for (int trial = 0; trial < 200; ++trial) {
    const double shift = rng.uniform(-50, 50);
    const auto before = policy_forward(p, s, false, nullptr);
    auto shifted = p;
    shifted.bp.array() += shift;
    const auto after = policy_forward(shifted, s, false, nullptr);
    for (std::size_t a = 0; a < 3; ++a) CHECK(std::abs(before.probs[a] - after.probs[a]) < 1e-9);

    ActionDistribution d;
    double sum = 0;
    for (auto& x : d.probs) sum += (x = rng.uniform() + 1e-12);
    for (auto& x : d.probs) x /= sum;
    const auto c = confidence(d.probs);
    CHECK(c.entropy >= 0.0);
    CHECK(c.entropy <= std::log(3.0) + 1e-12);
    CHECK(c.top2_gap >= 0.0);
    CHECK(c.top2_gap <= 1.0);
    ActionDistribution scaled = d;
    const double k = rng.uniform(0.1, 10);
    for (auto& x : scaled.probs) x *= k;
    CHECK(select_action(d, SelectMode::Greedy, false, nullptr).first ==
          select_action(scaled, SelectMode::Greedy, false, nullptr).first);
    p.bp(trial % 3) += rng.normal();
  }
}

TEST_CASE("parameter plumbing") {
  auto p = PolicyParams::init({5, 4, 3}, 1);
  CHECK(p.parameter_count() == 5 * 4 + 4 + 4 * 3 + 3 + 3 * 3 + 3 + 3 + 1);
  auto flat = p.flat();
  CHECK(flat.size() == p.parameter_count());
  auto q = PolicyParams::zeros(p.dims);
  q.assign_flat(flat);
  CHECK(q.flat() == flat);
  q += p;
  q *= 0.5;
  CHECK(q.flat() == flat);
  CHECK_NOTHROW(p.validate());
  p.w2(0, 0) = NAN;
  CHECK_FALSE(p.all_finite());
  CHECK_THROWS_AS(p.validate(), ValidationError);
  auto r = PolicyParams::zeros({3});
  r.dropout = 1.0;
  CHECK_THROWS_AS(r.validate(), ValidationError);
}
