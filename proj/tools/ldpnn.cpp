// Command-line front end: rate evaluation, covariance recursion, and the
// Monte Carlo validation harness, with reproducible CSV/JSON reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

#include "ldpnn/activation.hpp"
#include "ldpnn/config.hpp"
#include "ldpnn/gauss_expect.hpp"
#include "ldpnn/rates.hpp"
#include "ldpnn/recursion.hpp"
#include "ldpnn/report.hpp"
#include "ldpnn/shallow.hpp"
#include "ldpnn/simulator.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using namespace ldpnn;
using nlohmann::json;

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::string activation;
  std::string pattern;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int quad_order = -1;
  std::uint64_t mc_samples = 0;
  double rho = -1.0;
  int depth = 0;
};

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "JSON experiment config");
  cmd->add_option("--out", opt.out_dir, "output directory");
  cmd->add_option("--seed", opt.seed, "RNG seed")->each([&](const std::string&) {
    opt.seed_set = true;
  });
  cmd->add_option("--quad-order", opt.quad_order, "Gauss-Hermite order");
  cmd->add_option("--mc-samples", opt.mc_samples, "MC backend sample count");
  cmd->add_option("--activation", opt.activation, "activation name");
  cmd->add_option("--rho", opt.rho, "moderate-deviation exponent");
  cmd->add_option("--pattern", opt.pattern, "derivative pattern, e.g. 0,1");
}

ExperimentConfig make_config(const CliOptions& opt) {
  ExperimentConfig cfg;
  if (!opt.config_path.empty()) {
    cfg = load_config(opt.config_path);
  } else {
    cfg.model.act = builtin("hard_clip");
    cfg.inputs.points = {Vector::Ones(1)};
    cfg.inputs.labels = {"x0"};
  }
  if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
  if (opt.seed_set) {
    cfg.seed = opt.seed;
    cfg.mc.seed = opt.seed;
  }
  if (opt.quad_order >= 0) cfg.quad.order = opt.quad_order;
  if (opt.mc_samples > 0) cfg.mc.samples = opt.mc_samples;
  if (opt.rho > 0) cfg.scaling.rho = opt.rho;
  if (!opt.activation.empty()) cfg.model.act = builtin(opt.activation);
  if (!opt.pattern.empty()) {
    cfg.pattern.s.clear();
    for (char c : opt.pattern) {
      if (c == ',') continue;
      if (c != '0' && c != '1') throw ConfigError("--pattern: entries are 0/1");
      cfg.pattern.s.push_back(c - '0');
    }
  }
  if (opt.depth > 0) {
    cfg.model.L = opt.depth;
    cfg.model.ratios = WidthRatios::uniform(opt.depth);
  }
  return cfg;
}

struct RunOutput {
  std::vector<std::pair<std::string, CsvReport>> csvs;
  json diagnostics = json::object();
};

void emit(const ExperimentConfig& cfg, const std::string& command,
          const RunOutput& out, double wall_s, const std::string& status) {
  std::filesystem::create_directories(cfg.out_dir);
  json manifest;
  manifest["schema"] = 1;
  manifest["command"] = command;
  manifest["version"] = kVersion;
  manifest["config_hash"] = config_hash(cfg);
  manifest["seed"] = cfg.seed;
  manifest["wall_time_s"] = wall_s;
  manifest["status"] = status;
  json files = json::array();
  for (const auto& [name, csv] : out.csvs) {
    std::string path = cfg.out_dir + "/" + name;
    csv.write(path);
    files.push_back(name);
  }
  manifest["outputs"] = files;
  manifest["diagnostics"] = out.diagnostics;
  std::ofstream mf(cfg.out_dir + "/manifest.json",
                   std::ios::binary | std::ios::trunc);
  mf << manifest.dump(2) << "\n";
}

Matrix require(const std::optional<Matrix>& m, const char* name) {
  if (!m) throw ConfigError(std::string("config: missing matrix '") + name + "'");
  return *m;
}

// ---------------------------------------------------------------------------

RunOutput run_kappa(const ExperimentConfig& cfg) {
  Matrix qm = require(cfg.q, "q");
  Matrix em = require(cfg.eta, "eta");
  CovMatrix q(SymMatrix(qm), 0.0);
  SymMatrix eta(em);
  double se = 0.0;
  ExtReal mc = kappa_mc(eta, q, cfg.model.act, cfg.mc, &se);
  std::string quad_s = "nan", disc = "nan";
  if (q.dim() <= 3) {
    ExtReal kq = kappa(eta, q, cfg.model.act, cfg.quad);
    quad_s = fmt_double(kq.value());
    disc = fmt_double(kq.value() - mc.value());
  }
  CsvReport csv({"eta", "q", "kappa_quad", "kappa_mc", "mc_stderr",
                 "discrepancy"});
  csv.add_row({fmt_matrix(em), fmt_matrix(qm), quad_s,
               fmt_double(mc.value()), fmt_double(se), disc});
  RunOutput out;
  out.csvs.emplace_back("kappa.csv", std::move(csv));
  return out;
}

RunOutput run_recursion(const ExperimentConfig& cfg) {
  CovMatrix g0 = initial_cov(cfg.model, cfg.inputs);
  auto chain = limit_cov_chain(cfg.model, cfg.inputs, cfg.quad);
  CsvReport csv({"layer", "i", "j", "value"});
  auto add = [&](int layer, const Matrix& m) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j)
        csv.add_row({std::to_string(layer), std::to_string(i),
                     std::to_string(j), fmt_double(m(i, j))});
  };
  add(0, g0.base().mat());
  for (size_t l = 0; l < chain.size(); ++l)
    add(static_cast<int>(l + 1), chain[l].base().mat());
  RunOutput out;
  out.csvs.emplace_back("recursion.csv", std::move(csv));
  return out;
}

RunOutput run_rate(const ExperimentConfig& cfg, const std::string& which) {
  CsvReport csv({"op", "inputs", "value", "minimizer", "iters", "grad_norm",
                 "status"});
  RunOutput out;
  if (which == "kappa-star") {
    Matrix ym = require(cfg.y, "y");
    Matrix qm = require(cfg.q, "q");
    CovMatrix q(SymMatrix(qm), 0.0);
    if (q.dim() == 1 && cfg.model.act.kernel == simd::ActKernel::relu &&
        qm(0, 0) > 0) {
      RateValue v = kappa_star_relu_scalar(ym(0, 0), qm(0, 0));
      csv.add_row({"kappa-star", fmt_matrix(ym) + "|" + fmt_matrix(qm),
                   fmt_double(v.value()), "", "0", "0", "closed_form"});
    } else {
      LegendreResult r = legendre_full(SymMatrix(ym), q, cfg.model.act, cfg.quad);
      csv.add_row({"kappa-star", fmt_matrix(ym) + "|" + fmt_matrix(qm),
                   fmt_double(r.value.value()), fmt_matrix(r.eta.mat()),
                   std::to_string(r.iters), fmt_double(r.grad_norm),
                   r.diverged ? "diverged" : "converged"});
      out.diagnostics["grad_norm"] = r.grad_norm;
      out.diagnostics["iters"] = r.iters;
    }
  } else if (which == "chain") {
    Matrix gm = require(cfg.g, "g");
    CovMatrix gl(SymMatrix(gm), cfg.model.Cb);
    ChainResult r = chain_rate_IG_full(gl, cfg.model, cfg.inputs, cfg.quad);
    std::string mins;
    for (const auto& m : r.intermediates) {
      if (!mins.empty()) mins += '|';
      mins += fmt_matrix(m.mat());
    }
    csv.add_row({"chain", fmt_matrix(gm), fmt_double(r.value.value()), mins,
                 "0", "0", "best_start=" + std::to_string(r.best_start)});
    out.diagnostics["best_start"] = r.best_start;
  } else if (which == "output") {
    Matrix zm = require(cfg.z, "z");
    OutputRateResult r = output_rate_IZ_full(zm, cfg.model, cfg.inputs, cfg.quad);
    std::string mins;
    for (const auto& m : r.chain) {
      if (!mins.empty()) mins += '|';
      mins += fmt_matrix(m.mat());
    }
    csv.add_row({"output", fmt_matrix(zm), fmt_double(r.value.value()), mins,
                 "0", "0", "best_start=" + std::to_string(r.best_start)});
    out.diagnostics["best_start"] = r.best_start;
  } else {  // md
    Matrix zm = require(cfg.z, "z");
    auto chain = limit_cov_chain(cfg.model, cfg.inputs, cfg.quad);
    RateValue v = md_rate(zm, chain.back());
    csv.add_row({"md", fmt_matrix(zm), fmt_double(v.value()), "", "0", "0",
                 "exact"});
  }
  out.csvs.emplace_back("rate.csv", std::move(csv));
  return out;
}

RunOutput run_tail(const ExperimentConfig& cfg, bool with_predictions,
                   const std::string& csv_name) {
  if (cfg.schedule.pivot_widths.empty())
    throw ConfigError("config: schedule must list pivot widths");
  auto chain = limit_cov_chain(cfg.model, cfg.inputs, cfg.quad);
  double ghat = chain.back().base()(0, 0);

  std::vector<double> thresholds = cfg.thresholds;
  if (cfg.auto_thresholds) {
    std::uint64_t n_min = cfg.schedule.pivot_widths.front();
    for (auto n : cfg.schedule.pivot_widths) n_min = std::min(n_min, n);
    double rho_eff = cfg.scaling.mode == ScalingSpec::md ? cfg.scaling.rho : 1.0;
    thresholds = {md_auto_threshold(ghat, rho_eff, n_min, cfg.target_p)};
  }

  TailRun run = estimate_tail(cfg.model, cfg.inputs, cfg.schedule, thresholds,
                              cfg.scaling, cfg.samples, cfg.seed);

  std::vector<double> predicted(thresholds.size(),
                                std::numeric_limits<double>::quiet_NaN());
  if (with_predictions) {
    for (size_t t = 0; t < thresholds.size(); ++t) {
      if (cfg.scaling.mode == ScalingSpec::md) {
        predicted[t] = thresholds[t] * thresholds[t] / (2.0 * ghat);
      } else {
        Matrix z = Matrix::Zero(cfg.inputs.size(), cfg.model.n_out);
        z(0, 0) = thresholds[t];
        predicted[t] =
            output_rate_IZ(z, cfg.model, cfg.inputs, cfg.quad).value();
      }
    }
  }

  CsvReport csv({"n", "t", "hits", "samples", "log_prob", "stderr",
                 "predicted_rate", "fitted_slope"});
  const size_t nt = thresholds.size();
  for (size_t i = 0; i < run.estimates.size(); ++i) {
    const TailEstimate& e = run.estimates[i];
    const SlopeFit& f = run.fits[i % nt];
    csv.add_row({std::to_string(e.n), fmt_double(e.threshold),
                 std::to_string(e.hits), std::to_string(e.samples),
                 fmt_double(e.log_prob), fmt_double(e.stderr_log),
                 fmt_double(predicted[i % nt]), fmt_double(f.slope)});
  }
  RunOutput out;
  for (size_t t = 0; t < nt; ++t) {
    out.diagnostics["fit_" + std::to_string(t)] = {
        {"slope", run.fits[t].slope},
        {"slope_se", run.fits[t].slope_se},
        {"intercept", run.fits[t].intercept},
        {"points", run.fits[t].points}};
  }
  out.csvs.emplace_back(csv_name, std::move(csv));
  return out;
}

RunOutput run_shallow_rate(const ExperimentConfig& cfg, bool md) {
  Matrix zm = require(cfg.z, "z");
  CsvReport csv({"op", "z", "value", "y_opt", "outer_iters", "status"});
  RunOutput out;
  if (md) {
    RateValue v = shallow_md_rate(zm, cfg.model, cfg.inputs, cfg.pattern,
                                  cfg.quad, cfg.include_bias_in_upsilon_tilde);
    csv.add_row({"shallow-md", fmt_matrix(zm), fmt_double(v.value()), "", "0",
                 "exact"});
  } else {
    ShallowRateResult r =
        shallow_ld_rate_full(zm, cfg.model, cfg.inputs, cfg.pattern, cfg.quad);
    csv.add_row({"shallow-ld", fmt_matrix(zm), fmt_double(r.value.value()),
                 fmt_matrix(r.y_opt.transpose()), std::to_string(r.outer_iters),
                 r.diverged ? "diverged" : "converged"});
  }
  out.csvs.emplace_back("shallow.csv", std::move(csv));
  return out;
}

RunOutput run_shallow_validate(const ExperimentConfig& cfg) {
  if (cfg.schedule.pivot_widths.empty())
    throw ConfigError("config: schedule must list pivot widths");
  if (cfg.pattern.s.empty())
    throw ConfigError("config: pattern required for shallow validate");

  // Limit variance of the sensitivity coordinate from the tilde coefficients.
  UpsilonEvaluator ev(cfg.model, cfg.inputs, cfg.pattern, cfg.quad);
  double qvar = ev.tilde_matrix(cfg.include_bias_in_upsilon_tilde)(0, 0);
  if (cfg.pattern.s[0] == 0 && cfg.model.Cb > 0) qvar += cfg.model.Cb;

  std::vector<double> thresholds = cfg.thresholds;
  if (cfg.auto_thresholds) {
    std::uint64_t n_min = cfg.schedule.pivot_widths.front();
    for (auto n : cfg.schedule.pivot_widths) n_min = std::min(n, n_min);
    double rho_eff = cfg.scaling.mode == ScalingSpec::md ? cfg.scaling.rho : 1.0;
    thresholds = {md_auto_threshold(qvar, rho_eff, n_min, cfg.target_p)};
  }

  TailRun run = shallow_sensitivity_tail(cfg.model, cfg.inputs, cfg.pattern,
                                         cfg.schedule, thresholds, cfg.scaling,
                                         cfg.samples, cfg.seed);
  std::vector<double> predicted(thresholds.size());
  for (size_t t = 0; t < thresholds.size(); ++t) {
    Matrix z = Matrix::Zero(cfg.inputs.size(),
                            static_cast<int>(cfg.pattern.s.size()));
    z(0, 0) = thresholds[t];
    predicted[t] = shallow_md_rate(z, cfg.model, cfg.inputs, cfg.pattern,
                                   cfg.quad, cfg.include_bias_in_upsilon_tilde)
                       .value();
  }

  CsvReport csv({"n", "t", "hits", "samples", "log_prob", "stderr",
                 "predicted_rate", "fitted_slope"});
  const size_t nt = thresholds.size();
  for (size_t i = 0; i < run.estimates.size(); ++i) {
    const TailEstimate& e = run.estimates[i];
    const SlopeFit& f = run.fits[i % nt];
    csv.add_row({std::to_string(e.n), fmt_double(e.threshold),
                 std::to_string(e.hits), std::to_string(e.samples),
                 fmt_double(e.log_prob), fmt_double(e.stderr_log),
                 fmt_double(predicted[i % nt]), fmt_double(f.slope)});
  }
  RunOutput out;
  out.csvs.emplace_back("shallow_validate.csv", std::move(csv));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate functions and Monte Carlo validation for wide Gaussian "
               "networks"};
  app.require_subcommand(1);
  CliOptions opt;

  CLI::App* c_kappa = app.add_subcommand("kappa", "cumulant value, both backends");
  CLI::App* c_rate = app.add_subcommand("rate", "rate function evaluation");
  c_rate->require_subcommand(1);
  CLI::App* c_ks = c_rate->add_subcommand("kappa-star", "Legendre transform");
  CLI::App* c_chain = c_rate->add_subcommand("chain", "chained covariance rate");
  CLI::App* c_out = c_rate->add_subcommand("output", "output LD rate");
  CLI::App* c_md = c_rate->add_subcommand("md", "moderate-deviation rate");
  CLI::App* c_rec = app.add_subcommand("recursion", "limit covariance chain");
  c_rec->add_option("--depth", opt.depth, "chain depth L");
  CLI::App* c_sim = app.add_subcommand("simulate", "tail estimation");
  CLI::App* c_val = app.add_subcommand("validate", "tail estimation vs predicted rates");
  CLI::App* c_sh = app.add_subcommand("shallow", "shallow-network sensitivities");
  c_sh->require_subcommand(1);
  CLI::App* c_sh_rate = c_sh->add_subcommand("rate", "LD rate");
  CLI::App* c_sh_md = c_sh->add_subcommand("md-rate", "MD rate");
  CLI::App* c_sh_val = c_sh->add_subcommand("validate", "sensitivity MD slopes");

  for (CLI::App* c : {c_kappa, c_ks, c_chain, c_out, c_md, c_rec, c_sim, c_val,
                      c_sh_rate, c_sh_md, c_sh_val})
    add_common(c, opt);

  CLI11_PARSE(app, argc, argv);

  std::string command;
  auto t0 = std::chrono::steady_clock::now();
  try {
    ExperimentConfig cfg = make_config(opt);
    RunOutput out;
    if (c_kappa->parsed()) {
      command = "kappa";
      out = run_kappa(cfg);
    } else if (c_rate->parsed()) {
      if (c_ks->parsed()) command = "rate kappa-star";
      if (c_chain->parsed()) command = "rate chain";
      if (c_out->parsed()) command = "rate output";
      if (c_md->parsed()) command = "rate md";
      out = run_rate(cfg, command.substr(5));
    } else if (c_rec->parsed()) {
      command = "recursion";
      out = run_recursion(cfg);
    } else if (c_sim->parsed()) {
      command = "simulate";
      out = run_tail(cfg, false, "simulate.csv");
    } else if (c_val->parsed()) {
      command = "validate";
      out = run_tail(cfg, true, "validate.csv");
    } else if (c_sh->parsed()) {
      if (c_sh_rate->parsed()) {
        command = "shallow rate";
        out = run_shallow_rate(cfg, false);
      } else if (c_sh_md->parsed()) {
        command = "shallow md-rate";
        out = run_shallow_rate(cfg, true);
      } else {
        command = "shallow validate";
        out = run_shallow_validate(cfg);
      }
    }
    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    emit(cfg, command, out, wall, "ok");
    std::cout << command << ": ok, outputs in " << cfg.out_dir << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NonConvergenceError& e) {
    std::cerr << "non-convergence: " << e.what()
              << " (grad_norm=" << e.grad_norm << ", iters=" << e.iters
              << ")\n";
    try {
      ExperimentConfig cfg = make_config(opt);
      RunOutput out;
      out.diagnostics["error"] = e.what();
      out.diagnostics["grad_norm"] = e.grad_norm;
      out.diagnostics["iters"] = e.iters;
      double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      emit(cfg, command, out, wall, "nonconvergence");
    } catch (...) {
    }
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
