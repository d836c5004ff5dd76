#include "ldpnn/recursion.hpp"

#include <map>
#include <mutex>
#include <sstream>

namespace ldpnn {

CovMatrix initial_cov(const NetworkConfig& model, const InputSet& inputs) {
  model.validate();
  inputs.validate(model.n0);
  const int a = inputs.size();
  Matrix g(a, a);
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < a; ++j)
      g(i, j) = model.Cb +
                model.Cw / model.n0 * inputs.points[static_cast<size_t>(i)].dot(
                                          inputs.points[static_cast<size_t>(j)]);
  return CovMatrix(SymMatrix(g), model.Cb);
}

namespace {

std::string chain_key(const NetworkConfig& model, const InputSet& inputs,
                      const QuadratureSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << model.L << '|' << model.n0 << '|' << model.Cb << '|' << model.Cw << '|'
     << model.act.name << '|' << spec.order;
  for (const auto& p : inputs.points) {
    os << ';';
    for (int r = 0; r < p.size(); ++r) os << p[r] << ',';
  }
  return os.str();
}

}  // namespace

std::vector<CovMatrix> limit_cov_chain(const NetworkConfig& model,
                                       const InputSet& inputs,
                                       const QuadratureSpec& spec) {
  static std::map<std::string, std::vector<CovMatrix>> cache;
  static std::mutex mu;
  const std::string key = chain_key(model, inputs, spec);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  std::vector<CovMatrix> chain;
  chain.reserve(static_cast<size_t>(model.L));
  CovMatrix g = initial_cov(model, inputs);
  const int a = inputs.size();
  const Matrix ones = Matrix::Ones(a, a);
  for (int l = 1; l <= model.L; ++l) {
    SymMatrix y = y_of_q(g, model.act, spec);
    CovMatrix next(SymMatrix(model.Cb * ones + model.Cw * y.mat()), model.Cb);
    chain.push_back(next);
    g = next;
  }
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, chain);
  return chain;
}

}  // namespace ldpnn
