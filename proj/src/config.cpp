#include "ldpnn/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ldpnn/activation.hpp"

namespace ldpnn {

namespace {

using nlohmann::json;

Matrix parse_matrix(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty())
    throw ConfigError(name + ": expected a non-empty array of rows");
  const size_t rows = j.size();
  const size_t cols = j[0].size();
  Matrix m(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ConfigError(name + ": ragged rows");
    for (size_t k = 0; k < cols; ++k) m(static_cast<int>(i), static_cast<int>(k)) = j[i][k].get<double>();
  }
  return m;
}

double parse_gamma(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kGammaInf;
    throw ConfigError("gammas: string entries must be \"inf\"");
  }
  return j.get<double>();
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    ExperimentConfig cfg;
    cfg.schema = j.value("schema", 1);
    if (cfg.schema != 1) throw ConfigError("config: unsupported schema");

    const json& jm = j.at("model");
    cfg.model.L = jm.value("depth", 1);
    cfg.model.n0 = jm.value("n0", 1);
    cfg.model.n_out = jm.value("n_out", 1);
    cfg.model.Cb = jm.value("cb", 0.0);
    cfg.model.Cw = jm.value("cw", 1.0);
    cfg.model.act = builtin(jm.value("activation", "hard_clip"));
    if (jm.contains("gammas")) {
      cfg.model.ratios.gammas.clear();
      for (const auto& g : jm.at("gammas"))
        cfg.model.ratios.gammas.push_back(parse_gamma(g));
      cfg.model.ratios.pivot = jm.value("pivot", 1);
    } else {
      cfg.model.ratios = WidthRatios::uniform(cfg.model.L);
    }

    if (j.contains("inputs")) {
      Matrix pts = parse_matrix(j.at("inputs"), "inputs");
      cfg.inputs.points.clear();
      for (int i = 0; i < pts.rows(); ++i)
        cfg.inputs.points.push_back(pts.row(i).transpose());
    } else {
      cfg.inputs.points = {Vector::Ones(cfg.model.n0)};
    }
    cfg.inputs.labels.clear();
    if (j.contains("labels")) {
      for (const auto& l : j.at("labels"))
        cfg.inputs.labels.push_back(l.get<std::string>());
    }
    while (cfg.inputs.labels.size() < cfg.inputs.points.size())
      cfg.inputs.labels.push_back("x" + std::to_string(cfg.inputs.labels.size()));

    if (j.contains("schedule"))
      for (const auto& n : j.at("schedule"))
        cfg.schedule.pivot_widths.push_back(n.get<std::uint64_t>());

    if (j.contains("scaling")) {
      const json& js = j.at("scaling");
      std::string mode = js.value("mode", "md");
      if (mode == "ld")
        cfg.scaling.mode = ScalingSpec::ld;
      else if (mode == "md")
        cfg.scaling.mode = ScalingSpec::md;
      else
        throw ConfigError("scaling.mode must be ld or md");
      cfg.scaling.rho = js.value("rho", 0.5);
      if (cfg.scaling.mode == ScalingSpec::md &&
          !(cfg.scaling.rho > 0 && cfg.scaling.rho < 1))
        throw ConfigError("scaling.rho must lie in (0,1)");
    }

    if (j.contains("thresholds")) {
      const json& jt = j.at("thresholds");
      if (jt.is_string()) {
        if (jt.get<std::string>() != "auto")
          throw ConfigError("thresholds: expected numbers or \"auto\"");
      } else {
        cfg.auto_thresholds = false;
        for (const auto& t : jt) cfg.thresholds.push_back(t.get<double>());
      }
    }
    cfg.target_p = j.value("target_p", 2e-3);
    cfg.samples = j.value("samples", std::uint64_t{100000});
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.quad.order = j.value("quad_order", 0);
    cfg.mc.samples = j.value("mc_samples", std::uint64_t{100000});
    cfg.mc.seed = cfg.seed;
    cfg.out_dir = j.value("out", "out");
    cfg.include_bias_in_upsilon_tilde =
        j.value("include_bias_in_upsilon_tilde", false);
    if (j.contains("pattern"))
      for (const auto& s : j.at("pattern"))
        cfg.pattern.s.push_back(s.get<int>());

    for (const char* name : {"eta", "q", "y", "z", "g"}) {
      if (j.contains(name)) {
        Matrix m = parse_matrix(j.at(name), name);
        if (std::string(name) == "eta") cfg.eta = m;
        if (std::string(name) == "q") cfg.q = m;
        if (std::string(name) == "y") cfg.y = m;
        if (std::string(name) == "z") cfg.z = m;
        if (std::string(name) == "g") cfg.g = m;
      }
    }
    cfg.gamma = j.contains("gamma") ? parse_gamma(j.at("gamma")) : 1.0;

    // Cross-field validation.
    cfg.model.validate();
    cfg.inputs.validate(cfg.model.n0);
    cfg.pattern.validate();
    if (cfg.model.L >= 2 && !cfg.model.act.bounded() && cfg.inputs.size() >= 2)
      throw ConfigError(
          "deep networks (depth >= 2) over several inputs require a bounded "
          "continuous activation; only the single-input ReLU case is "
          "supported unbounded");
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << cfg.schema << '|' << cfg.model.L << '|' << cfg.model.n0 << '|'
     << cfg.model.n_out << '|' << cfg.model.Cb << '|' << cfg.model.Cw << '|'
     << cfg.model.act.name << '|' << cfg.model.ratios.pivot;
  for (double g : cfg.model.ratios.gammas) os << ',' << g;
  os << '|';
  for (const auto& p : cfg.inputs.points) {
    for (int r = 0; r < p.size(); ++r) os << p[r] << ',';
    os << ';';
  }
  os << '|';
  for (auto n : cfg.schedule.pivot_widths) os << n << ',';
  os << '|' << (cfg.scaling.mode == ScalingSpec::ld ? "ld" : "md") << ','
     << cfg.scaling.rho << '|';
  if (cfg.auto_thresholds)
    os << "auto," << cfg.target_p;
  else
    for (double t : cfg.thresholds) os << t << ',';
  os << '|' << cfg.samples << '|' << cfg.seed << '|' << cfg.quad.order << '|'
     << cfg.mc.samples << '|' << cfg.include_bias_in_upsilon_tilde << '|';
  for (int s : cfg.pattern.s) os << s;
  os << '|' << cfg.gamma << '|';
  auto put = [&](const std::optional<Matrix>& m) {
    if (m)
      for (int i = 0; i < m->rows(); ++i)
        for (int k = 0; k < m->cols(); ++k) os << (*m)(i, k) << ',';
    os << ';';
  };
  put(cfg.eta);
  put(cfg.q);
  put(cfg.y);
  put(cfg.z);
  put(cfg.g);

  std::string s = os.str();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ldpnn
