#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "triage/random.hpp"
#include "triage/triage_env.hpp"

namespace triage {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kHidden1 = 256;
inline constexpr std::size_t kHidden2 = 128;
inline constexpr double kDefaultDropout = 0.2;

struct LayerDims {
  std::size_t input = 0;
  std::size_t hidden1 = kHidden1;
  std::size_t hidden2 = kHidden2;

  friend bool operator==(const LayerDims&, const LayerDims&) = default;
};

// Shared two-layer ReLU trunk with a 3-way policy head and a scalar value head.
// Also used as the gradient container (same shapes).
struct PolicyParams {
  LayerDims dims;
  Matrix w1;  // hidden1 x input
  Vector b1;
  Matrix w2;  // hidden2 x hidden1
  Vector b2;
  Matrix wp;  // 3 x hidden2
  Vector bp;
  Matrix wv;  // 1 x hidden2
  Vector bv;  // 1
  double dropout = kDefaultDropout;
  std::uint64_t seed = 0;

  static PolicyParams zeros(LayerDims dims, double dropout = kDefaultDropout);
  // Uniform(-sqrt(6/(fan_in+fan_out)), +...) weights, zero biases.
  static PolicyParams init(LayerDims dims, std::uint64_t seed, double dropout = kDefaultDropout);

  std::size_t parameter_count() const;
  // Row-major concatenation: w1, b1, w2, b2, wp, bp, wv, bv.
  std::vector<double> flat() const;
  void assign_flat(std::span<const double> values);

  bool all_finite() const;
  // Throws ValidationError on inconsistent shapes, non-finite values or a
  // dropout rate outside [0, 1).
  void validate() const;

  PolicyParams& operator+=(const PolicyParams& other);
  PolicyParams& operator*=(double s);
};

struct ActionDistribution {
  std::array<double, kActionCount> probs{};
  std::array<double, kActionCount> logits{};
  double value = 0.0;
};

// ReLU(W1 s + b1) -> dropout -> ReLU(W2 h1 + b2) -> dropout -> heads. Dropout
// (inverted, scaled by 1/(1-rate)) only when `training`; eval is deterministic
// and `rng` may be null.
ActionDistribution policy_forward(const PolicyParams& params, std::span<const double> state, bool training,
                                  Rng* rng);

// Zeroes Fuzz and renormalises when `mask_fuzz`; throws DegenerateDistribution
// when nothing is left.
std::array<double, kActionCount> masked_probs(const std::array<double, kActionCount>& probs, bool mask_fuzz);

struct ConfidenceSignals {
  double top2_gap = 0.0;
  double entropy = 0.0;  // nats
};

ConfidenceSignals confidence(const std::array<double, kActionCount>& probs);

enum class SelectMode { Sample, Greedy };

// Greedy ties resolve to the earlier action (TP < FP < Fuzz). Signals are
// computed on the post-mask distribution.
std::pair<TriageAction, ConfidenceSignals> select_action(const ActionDistribution& dist, SelectMode mode,
                                                         bool mask_fuzz, Rng* rng);

// Batched pass with everything backprop needs.
struct ForwardCache {
  Matrix input;   // B x input
  Matrix h1;      // post-ReLU, post-dropout
  Matrix h2;
  Matrix mask1;   // dropout scale per unit (0 or 1/(1-rate)); ones in eval
  Matrix mask2;
  Matrix logits;  // B x 3
  Vector value;   // B
};

void forward_batch(const PolicyParams& params, const Matrix& input, bool training, Rng* rng, ForwardCache& cache);

// Gradients of a loss given dL/dlogits (B x 3) and dL/dvalue (B).
PolicyParams backward_batch(const PolicyParams& params, const ForwardCache& cache, const Matrix& dlogits,
                            const Vector& dvalue);

}  // namespace triage
