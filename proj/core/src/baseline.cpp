#include "sarc/baseline.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "sarc/error.hpp"

namespace sarc {

namespace {

// Reciprocal condition estimate of an SPD matrix from its LDLT pivots.
bool well_conditioned(const Eigen::MatrixXd& a, Eigen::LDLT<Eigen::MatrixXd>& ldlt) {
  ldlt.compute(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  const auto d = ldlt.vectorD().cwiseAbs();
  if (d.minCoeff() <= 0) return false;
  return d.minCoeff() / d.maxCoeff() > 1e-12;
}

}  // namespace

double LinearBaseline::predict(const FeatureVector& scaled) const {
  if (scaled.protocol != protocol || scaled.values.size() != weights.size()) {
    throw ProtocolMismatchError("baseline expects protocol " + std::string(protocol_name(protocol)) +
                                " with " + std::to_string(weights.size()) + " features");
  }
  double y = intercept;
  for (std::size_t j = 0; j < weights.size(); ++j) y += weights[j] * scaled.values[j];
  return y;
}

std::vector<double> LinearBaseline::predict(std::span<const FeatureVector> scaled) const {
  std::vector<double> out;
  out.reserve(scaled.size());
  for (const auto& v : scaled) out.push_back(predict(v));
  return out;
}

void LinearBaseline::write_to(KeyValueConfig& kv) const {
  kv.set("baseline.protocol", std::string(protocol_name(protocol)));
  kv.set("baseline.weights", join_doubles(weights));
  kv.set("baseline.intercept", format_double(intercept));
  kv.set("baseline.ridge_used", ridge_used ? "true" : "false");
}

LinearBaseline LinearBaseline::read_from(const KeyValueConfig& kv) {
  if (!kv.contains("baseline.weights")) throw ConfigError("checkpoint has no baseline.weights");
  LinearBaseline b;
  b.protocol = parse_protocol(kv.get_string("baseline.protocol", "p2"));
  b.weights = kv.get_double_list("baseline.weights", {});
  b.intercept = kv.get_double("baseline.intercept", 0.0);
  b.ridge_used = kv.get_bool("baseline.ridge_used", false);
  if (b.weights.size() != feature_count(b.protocol)) {
    throw ConfigError("baseline.weights has " + std::to_string(b.weights.size()) + " entries for protocol " +
                      std::string(protocol_name(b.protocol)));
  }
  return b;
}

LinearBaseline fit_linear_baseline(std::span<const FeatureVector> scaled, std::span<const double> targets) {
  if (scaled.empty()) throw DegenerateInputError("baseline: no training rows");
  if (scaled.size() != targets.size()) {
    throw DimensionError("baseline: " + std::to_string(scaled.size()) + " rows but " +
                         std::to_string(targets.size()) + " targets");
  }
  const Protocol protocol = scaled[0].protocol;
  const std::size_t f = feature_count(protocol);
  const std::size_t n = scaled.size();
  if (n < f + 1) {
    throw DegenerateInputError("baseline: need at least " + std::to_string(f + 1) + " rows, got " +
                               std::to_string(n));
  }
  Eigen::MatrixXd x(n, f + 1);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (scaled[i].protocol != protocol || scaled[i].values.size() != f) {
      throw ProtocolMismatchError("baseline: mixed protocols in training rows");
    }
    x(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t j = 0; j < f; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = scaled[i].values[j];
    }
    y(static_cast<Eigen::Index>(i)) = targets[i];
  }
  Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::VectorXd xty = x.transpose() * y;

  LinearBaseline out;
  out.protocol = protocol;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  if (!well_conditioned(xtx, ldlt)) {
    for (Eigen::Index j = 1; j < xtx.rows(); ++j) xtx(j, j) += kBaselineRidge;
    out.ridge_used = true;
    ldlt.compute(xtx);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0) {
      throw NumericError("baseline: normal equations singular even with ridge fallback");
    }
  }
  const Eigen::VectorXd w = ldlt.solve(xty);
  if (!w.allFinite()) throw NumericError("baseline: non-finite solution");
  out.intercept = w(0);
  out.weights.assign(w.data() + 1, w.data() + w.size());
  return out;
}

}  // namespace sarc
