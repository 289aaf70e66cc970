#include "uvs/uvm_head.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "uvs/util.hpp"

namespace uvs {

namespace {

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& v,
                    const char* what) {
  if (!v.allFinite())
    throw std::invalid_argument(std::string(what) + " has non-finite entries");
}

}  // namespace

IndexDistribution::IndexDistribution(Kind kind, int m) : kind_(kind), m_(m) {
  if (m <= 0) throw std::invalid_argument("index dimension must be positive");
}

IndexVector signed_coordinate(int m, int i) {
  if (i < 0 || i >= 2 * m)
    throw std::invalid_argument("signed coordinate index out of range");
  IndexVector z = IndexVector::Zero(m);
  if (i < m)
    z[i] = 1.0;
  else
    z[i - m] = -1.0;
  return z;
}

UvmHead UvmHead::init(const UvmHeadConfig& cfg, std::uint64_t prior_seed) {
  if (cfg.d <= 0 || cfg.m <= 0)
    throw std::invalid_argument("head dimensions must be positive");
  if (cfg.posterior_scale < 0.0 || cfg.prior_scale < 0.0)
    throw std::invalid_argument("head scales must be non-negative");
  UvmHead h;
  h.d = cfg.d;
  h.m = cfg.m;
  h.posterior_scale = cfg.posterior_scale;
  h.prior_scale = cfg.prior_scale;
  h.prior_seed = prior_seed;
  h.mean_weights = Eigen::VectorXd::Zero(cfg.d);
  h.posterior_matrix = Eigen::MatrixXd::Zero(cfg.d, cfg.m);
  h.prior_matrix.resize(cfg.d, cfg.m);
  Rng rng(Rng::derive(prior_seed, "uvm-prior-init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.m));
  for (int i = 0; i < cfg.d; ++i)
    for (int j = 0; j < cfg.m; ++j) h.prior_matrix(i, j) = scale * rng.normal();
  return h;
}

Eigen::MatrixXd UvmHead::uncertainty_matrix() const {
  return posterior_scale * posterior_matrix + prior_scale * prior_matrix;
}

void UvmHead::validate() const {
  if (d <= 0 || m <= 0) throw std::invalid_argument("head dimensions invalid");
  if (mean_weights.size() != d || posterior_matrix.rows() != d ||
      posterior_matrix.cols() != m || prior_matrix.rows() != d ||
      prior_matrix.cols() != m)
    throw std::invalid_argument("head parameter shapes inconsistent");
  if (!mean_weights.allFinite() || !posterior_matrix.allFinite() ||
      !prior_matrix.allFinite() || !std::isfinite(posterior_scale) ||
      !std::isfinite(prior_scale))
    throw std::invalid_argument("head parameters must be finite");
}

IndexVector sample_index(const IndexDistribution& dist, Rng& rng) {
  const int m = dist.dim();
  switch (dist.kind()) {
    case IndexDistribution::Kind::ZeroPoint:
      return IndexVector::Zero(m);
    case IndexDistribution::Kind::CoordinateSigned:
      return signed_coordinate(m, rng.uniform_int(2 * m));
    case IndexDistribution::Kind::Gaussian: {
      IndexVector z(m);
      for (int i = 0; i < m; ++i) z[i] = rng.normal();
      return z;
    }
  }
  throw std::logic_error("unreachable index distribution kind");
}

double posterior_value(const UvmHead& head, const Representation& x,
                       const IndexVector& z) {
  if (x.size() != head.d)
    throw std::invalid_argument("representation length does not match head d");
  if (z.size() != head.m)
    throw std::invalid_argument("index length does not match head m");
  require_finite(x, "representation");
  require_finite(z, "index vector");
  return x.dot(head.mean_weights) + (head.uncertainty_matrix().transpose() * x).dot(z);
}

double mean_value(const UvmHead& head, const Representation& x) {
  if (x.size() != head.d)
    throw std::invalid_argument("representation length does not match head d");
  require_finite(x, "representation");
  return x.dot(head.mean_weights);
}

std::vector<double> sample_posterior_values(const UvmHead& head,
                                            const Representation& x, int n,
                                            Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");
  const double mean = mean_value(head, x);
  // One-time encoding of x into its uncertainty loading.
  const Eigen::VectorXd load = head.uncertainty_matrix().transpose() * x;
  std::vector<double> values(static_cast<size_t>(n));
  IndexVector z(head.m);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < head.m; ++i) z[i] = rng.normal();
    values[static_cast<size_t>(k)] = mean + load.dot(z);
  }
  return values;
}

ValueDistributionSummary posterior_summary(const UvmHead& head,
                                           const Representation& x, int n,
                                           Rng& rng) {
  if (n < 2)
    throw std::invalid_argument("posterior_summary needs at least 2 samples");
  ValueDistributionSummary s;
  s.mean = mean_value(head, x);
  s.sample_count = n;
  const std::vector<double> values = sample_posterior_values(head, x, n, rng);
  double sample_mean = 0.0;
  for (double v : values) sample_mean += v;
  sample_mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - sample_mean) * (v - sample_mean);
  s.std = std::sqrt(ss / (n - 1));
  return s;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& mat) {
  // Row-major flat list.
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < mat.rows(); ++i)
    for (Eigen::Index j = 0; j < mat.cols(); ++j) arr.push_back(mat(i, j));
  return arr;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& arr, int rows,
                                 int cols) {
  if (static_cast<int>(arr.size()) != rows * cols)
    throw std::runtime_error("checkpoint matrix size mismatch");
  Eigen::MatrixXd mat(rows, cols);
  int k = 0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) mat(i, j) = arr[k++].get<double>();
  return mat;
}

}  // namespace

std::string checkpoint_to_string(const UvmHead& head) {
  head.validate();
  nlohmann::json j;
  j["format"] = "uvm-head-v1";
  j["d"] = head.d;
  j["m"] = head.m;
  j["posterior_scale"] = head.posterior_scale;
  j["prior_scale"] = head.prior_scale;
  j["prior_seed"] = head.prior_seed;
  nlohmann::json mw = nlohmann::json::array();
  for (int i = 0; i < head.d; ++i) mw.push_back(head.mean_weights[i]);
  j["mean_weights"] = mw;
  j["posterior_matrix"] = matrix_to_json(head.posterior_matrix);
  j["prior_matrix"] = matrix_to_json(head.prior_matrix);
  return j.dump(2) + "\n";
}

UvmHead checkpoint_from_string(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body);
  if (j.value("format", "") != "uvm-head-v1")
    throw std::runtime_error("unrecognized checkpoint format");
  UvmHead h;
  h.d = j.at("d").get<int>();
  h.m = j.at("m").get<int>();
  h.posterior_scale = j.at("posterior_scale").get<double>();
  h.prior_scale = j.at("prior_scale").get<double>();
  h.prior_seed = j.at("prior_seed").get<std::uint64_t>();
  const auto& mw = j.at("mean_weights");
  if (static_cast<int>(mw.size()) != h.d)
    throw std::runtime_error("checkpoint mean_weights size mismatch");
  h.mean_weights.resize(h.d);
  for (int i = 0; i < h.d; ++i) h.mean_weights[i] = mw[i].get<double>();
  h.posterior_matrix = matrix_from_json(j.at("posterior_matrix"), h.d, h.m);
  h.prior_matrix = matrix_from_json(j.at("prior_matrix"), h.d, h.m);
  h.validate();
  return h;
}

void save_checkpoint(const UvmHead& head, const std::string& path) {
  write_text_file(path, checkpoint_to_string(head));
}

UvmHead load_checkpoint(const std::string& path) {
  return checkpoint_from_string(read_text_file(path));
}

}  // namespace uvs
