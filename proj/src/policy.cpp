#include "triage/policy.hpp"

#include <algorithm>
#include <cmath>

#include "triage/error.hpp"

namespace triage {

PolicyParams PolicyParams::zeros(LayerDims dims, double dropout) {
  PolicyParams p;
  p.dims = dims;
  p.w1 = Matrix::Zero(static_cast<Eigen::Index>(dims.hidden1), static_cast<Eigen::Index>(dims.input));
  p.b1 = Vector::Zero(static_cast<Eigen::Index>(dims.hidden1));
  p.w2 = Matrix::Zero(static_cast<Eigen::Index>(dims.hidden2), static_cast<Eigen::Index>(dims.hidden1));
  p.b2 = Vector::Zero(static_cast<Eigen::Index>(dims.hidden2));
  p.wp = Matrix::Zero(static_cast<Eigen::Index>(kActionCount), static_cast<Eigen::Index>(dims.hidden2));
  p.bp = Vector::Zero(static_cast<Eigen::Index>(kActionCount));
  p.wv = Matrix::Zero(1, static_cast<Eigen::Index>(dims.hidden2));
  p.bv = Vector::Zero(1);
  p.dropout = dropout;
  return p;
}

PolicyParams PolicyParams::init(LayerDims dims, std::uint64_t seed, double dropout) {
  PolicyParams p = zeros(dims, dropout);
  p.seed = seed;
  Rng rng(seed);
  auto fill = [&](Matrix& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
    }
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.wp);
  fill(p.wv);
  return p;
}

namespace {

template <typename F>
void for_each_block(PolicyParams& p, F&& f) {
  f(p.w1.data(), static_cast<std::size_t>(p.w1.size()));
  f(p.b1.data(), static_cast<std::size_t>(p.b1.size()));
  f(p.w2.data(), static_cast<std::size_t>(p.w2.size()));
  f(p.b2.data(), static_cast<std::size_t>(p.b2.size()));
  f(p.wp.data(), static_cast<std::size_t>(p.wp.size()));
  f(p.bp.data(), static_cast<std::size_t>(p.bp.size()));
  f(p.wv.data(), static_cast<std::size_t>(p.wv.size()));
  f(p.bv.data(), static_cast<std::size_t>(p.bv.size()));
}

}  // namespace

std::size_t PolicyParams::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size() + wp.size() + bp.size() +
                                  wv.size() + bv.size());
}

std::vector<double> PolicyParams::flat() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for_each_block(const_cast<PolicyParams&>(*this),
                 [&](const double* data, std::size_t n) { out.insert(out.end(), data, data + n); });
  return out;
}

void PolicyParams::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw DimensionMismatch("flat parameter array has " + std::to_string(values.size()) + " values, expected " +
                            std::to_string(parameter_count()));
  }
  std::size_t offset = 0;
  for_each_block(*this, [&](double* data, std::size_t n) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), n, data);
    offset += n;
  });
}

bool PolicyParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() && wp.allFinite() &&
         bp.allFinite() && wv.allFinite() && bv.allFinite();
}

void PolicyParams::validate() const {
  const auto in = static_cast<Eigen::Index>(dims.input);
  const auto h1 = static_cast<Eigen::Index>(dims.hidden1);
  const auto h2 = static_cast<Eigen::Index>(dims.hidden2);
  const bool shapes = w1.rows() == h1 && w1.cols() == in && b1.size() == h1 && w2.rows() == h2 &&
                      w2.cols() == h1 && b2.size() == h2 && wp.rows() == 3 && wp.cols() == h2 &&
                      bp.size() == 3 && wv.rows() == 1 && wv.cols() == h2 && bv.size() == 1;
  if (!shapes) throw ValidationError("policy parameter shapes do not match the layer dimensions");
  if (!all_finite()) throw ValidationError("policy parameters contain non-finite values");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
}

PolicyParams& PolicyParams::operator+=(const PolicyParams& o) {
  w1 += o.w1;
  b1 += o.b1;
  w2 += o.w2;
  b2 += o.b2;
  wp += o.wp;
  bp += o.bp;
  wv += o.wv;
  bv += o.bv;
  return *this;
}

PolicyParams& PolicyParams::operator*=(double s) {
  w1 *= s;
  b1 *= s;
  w2 *= s;
  b2 *= s;
  wp *= s;
  bp *= s;
  wv *= s;
  bv *= s;
  return *this;
}

namespace {

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, bool training, Rng* rng) {
  if (!training || rate <= 0.0) return Matrix::Ones(rows, cols);
  if (!rng) throw ValidationError("training-mode forward pass needs an RNG for dropout");
  Matrix mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) mask(r, c) = rng->uniform() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

std::array<double, kActionCount> softmax(const std::array<double, kActionCount>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::array<double, kActionCount> p{};
  double sum = 0.0;
  for (std::size_t a = 0; a < kActionCount; ++a) {
    p[a] = std::exp(z[a] - m);
    sum += p[a];
  }
  for (double& x : p) x /= sum;
  return p;
}

}  // namespace

void forward_batch(const PolicyParams& params, const Matrix& input, bool training, Rng* rng, ForwardCache& cache) {
  if (static_cast<std::size_t>(input.cols()) != params.dims.input) {
    throw DimensionMismatch("state length " + std::to_string(input.cols()) + " does not match policy input " +
                            std::to_string(params.dims.input));
  }
  const Eigen::Index batch = input.rows();
  cache.input = input;
  cache.h1 = ((input * params.w1.transpose()).rowwise() + params.b1.transpose()).cwiseMax(0.0);
  cache.mask1 = dropout_mask(batch, cache.h1.cols(), params.dropout, training, rng);
  cache.h1 = cache.h1.cwiseProduct(cache.mask1);
  cache.h2 = ((cache.h1 * params.w2.transpose()).rowwise() + params.b2.transpose()).cwiseMax(0.0);
  cache.mask2 = dropout_mask(batch, cache.h2.cols(), params.dropout, training, rng);
  cache.h2 = cache.h2.cwiseProduct(cache.mask2);
  cache.logits = (cache.h2 * params.wp.transpose()).rowwise() + params.bp.transpose();
  cache.value = (cache.h2 * params.wv.transpose()).col(0).array() + params.bv(0);
}

PolicyParams backward_batch(const PolicyParams& params, const ForwardCache& cache, const Matrix& dlogits,
                            const Vector& dvalue) {
  PolicyParams g = PolicyParams::zeros(params.dims, params.dropout);
  g.wp = dlogits.transpose() * cache.h2;
  g.bp = dlogits.colwise().sum().transpose();
  g.wv = dvalue.transpose() * cache.h2;
  g.bv(0) = dvalue.sum();

  // dL/dh2 (post-dropout), then through dropout scale and ReLU.
  Matrix dh2 = dlogits * params.wp + dvalue * params.wv;
  dh2 = dh2.cwiseProduct(cache.mask2);
  dh2 = (cache.h2.array() > 0.0).select(dh2, 0.0);
  g.w2 = dh2.transpose() * cache.h1;
  g.b2 = dh2.colwise().sum().transpose();

  Matrix dh1 = dh2 * params.w2;
  dh1 = dh1.cwiseProduct(cache.mask1);
  dh1 = (cache.h1.array() > 0.0).select(dh1, 0.0);
  g.w1 = dh1.transpose() * cache.input;
  g.b1 = dh1.colwise().sum().transpose();
  return g;
}

ActionDistribution policy_forward(const PolicyParams& params, std::span<const double> state, bool training,
                                  Rng* rng) {
  if (state.size() != params.dims.input) {
    throw DimensionMismatch("state length " + std::to_string(state.size()) + " does not match policy input " +
                            std::to_string(params.dims.input));
  }
  Matrix input(1, static_cast<Eigen::Index>(state.size()));
  std::copy(state.begin(), state.end(), input.data());
  ForwardCache cache;
  forward_batch(params, input, training, rng, cache);
  ActionDistribution dist;
  for (std::size_t a = 0; a < kActionCount; ++a) dist.logits[a] = cache.logits(0, static_cast<Eigen::Index>(a));
  dist.probs = softmax(dist.logits);
  dist.value = cache.value(0);
  return dist;
}

std::array<double, kActionCount> masked_probs(const std::array<double, kActionCount>& probs, bool mask_fuzz) {
  std::array<double, kActionCount> p = probs;
  if (mask_fuzz) p[static_cast<std::size_t>(TriageAction::Fuzz)] = 0.0;
  double sum = 0.0;
  for (double x : p) sum += x;
  if (!(sum > 0.0)) throw DegenerateDistribution("action distribution has no mass after masking");
  for (double& x : p) x /= sum;
  return p;
}

ConfidenceSignals confidence(const std::array<double, kActionCount>& probs) {
  std::array<double, kActionCount> sorted = probs;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  ConfidenceSignals s;
  s.top2_gap = std::clamp(sorted[0] - sorted[1], 0.0, 1.0);
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  s.entropy = std::clamp(h, 0.0, std::log(static_cast<double>(kActionCount)));
  return s;
}

std::pair<TriageAction, ConfidenceSignals> select_action(const ActionDistribution& dist, SelectMode mode,
                                                         bool mask_fuzz, Rng* rng) {
  const auto p = masked_probs(dist.probs, mask_fuzz);
  const ConfidenceSignals signals = confidence(p);
  std::size_t chosen = 0;
  if (mode == SelectMode::Greedy) {
    for (std::size_t a = 1; a < kActionCount; ++a) {
      if (p[a] > p[chosen]) chosen = a;
    }
  } else {
    if (!rng) throw ValidationError("sampling an action needs an RNG");
    const double u = rng->uniform();
    double cumulative = 0.0;
    chosen = kActionCount;
    for (std::size_t a = 0; a < kActionCount; ++a) {
      if (p[a] <= 0.0) continue;
      cumulative += p[a];
      chosen = a;
      if (u < cumulative) break;
    }
  }
  return {static_cast<TriageAction>(chosen), signals};
}

}  // namespace triage
