#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "uvs/rng.hpp"

namespace uvs {

// Feature vector of a (question, partial path) pair, length d.
using Representation = Eigen::VectorXd;

// Index vector driving the uncertainty branch, length m.
using IndexVector = Eigen::VectorXd;

// Distribution the index vector is drawn from.
//   ZeroPoint        - the all-zero index; queries the mean only.
//   CoordinateSigned - uniform over the 2m signed unit vectors
//                      {+e_1..+e_m, -e_1..-e_m}; used for training.
//   Gaussian         - N(0, I_m); used at inference to access the full
//                      posterior value distribution.
class IndexDistribution {
 public:
  enum class Kind { ZeroPoint, CoordinateSigned, Gaussian };

  static IndexDistribution zero_point(int m) { return {Kind::ZeroPoint, m}; }
  static IndexDistribution coordinate_signed(int m) {
    return {Kind::CoordinateSigned, m};
  }
  static IndexDistribution gaussian(int m) { return {Kind::Gaussian, m}; }

  Kind kind() const { return kind_; }
  int dim() const { return m_; }

 private:
  IndexDistribution(Kind kind, int m);
  Kind kind_;
  int m_;
};

// The i-th of the 2m signed unit vectors: +e_i for i < m, -e_{i-m} otherwise.
IndexVector signed_coordinate(int m, int i);

struct UvmHeadConfig {
  int d = 0;                    // representation dimension
  int m = 10;                   // number of ensemble components
  double posterior_scale = 1.0; // weight of the learnable uncertainty term
  double prior_scale = 1.0;     // weight of the frozen prior term
};

// Dual-branch value head. The mean branch is a plain linear readout; the
// uncertainty branch maps an index vector through a learnable matrix plus a
// frozen randomly-initialized prior matrix:
//
//   value(x, z) = x . mean_weights
//              + x . (posterior_scale * posterior_matrix
//                     + prior_scale * prior_matrix) . z
//
// A zero index recovers the mean exactly, so the head degenerates to a
// conventional outcome value model when the uncertainty branch is unused.
// Training can only shrink uncertainty where data constrains the posterior
// matrix to cancel the prior; elsewhere the prior keeps the value
// distribution dispersed.
struct UvmHead {
  int d = 0;
  int m = 0;
  double posterior_scale = 1.0;
  double prior_scale = 1.0;
  std::uint64_t prior_seed = 0;

  Eigen::VectorXd mean_weights;      // d
  Eigen::MatrixXd posterior_matrix;  // d x m, learnable
  Eigen::MatrixXd prior_matrix;      // d x m, frozen after init

  // Zero mean and posterior weights; prior entries i.i.d. normal with
  // standard deviation 1/sqrt(m), so an untrained head has posterior value
  // std close to |x| under a Gaussian index.
  static UvmHead init(const UvmHeadConfig& cfg, std::uint64_t prior_seed);

  // posterior_scale * posterior_matrix + prior_scale * prior_matrix.
  Eigen::MatrixXd uncertainty_matrix() const;

  void validate() const;
};

struct ValueDistributionSummary {
  double mean = 0.0;  // exact (zero-index) mean
  double std = 0.0;   // sample standard deviation of posterior draws
  int sample_count = 0;
};

IndexVector sample_index(const IndexDistribution& dist, Rng& rng);

// One posterior value sample for representation x under index z.
double posterior_value(const UvmHead& head, const Representation& x,
                       const IndexVector& z);

// Mean of the posterior value distribution; equals posterior_value with a
// zero index. This is the derived OVM prediction.
double mean_value(const UvmHead& head, const Representation& x);

// n i.i.d. posterior samples under a Gaussian index. The representation is
// consumed once: the uncertainty loading is computed a single time and each
// draw costs one m-dimensional dot product.
std::vector<double> sample_posterior_values(const UvmHead& head,
                                            const Representation& x, int n,
                                            Rng& rng);

// Exact mean plus a sampled standard deviation (n >= 2 draws).
ValueDistributionSummary posterior_summary(const UvmHead& head,
                                           const Representation& x, int n,
                                           Rng& rng);

// Checkpoint serialization: full decimal precision, bit-exact round trip.
std::string checkpoint_to_string(const UvmHead& head);
UvmHead checkpoint_from_string(const std::string& body);
void save_checkpoint(const UvmHead& head, const std::string& path);
UvmHead load_checkpoint(const std::string& path);

}  // namespace uvs
