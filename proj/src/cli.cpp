#include "halpern/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "halpern/affine.hpp"
#include "halpern/analysis.hpp"
#include "halpern/output.hpp"
#include "halpern/transport.hpp"

namespace halpern::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v.rfind("pi", 0) == 0) {
    if (v == "pi") return std::numbers::pi;
    if (v.size() > 3 && v[2] == '/') return std::numbers::pi / parse_double(key, v.substr(3));
    if (v.size() > 3 && v[2] == '*') return std::numbers::pi * parse_double(key, v.substr(3));
  }
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError(fmt::format("{}: '{}' is not a number", key, value));
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw UsageError(fmt::format("{}: '{}' is not a non-negative integer", key, value));
  }
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(parse_double(key, item));
  }
  return out;
}

std::string fmt17(double v) { return fmt::format("{:.17g}", v); }

// Deterministic beta in (0,1] for randomized suites.
double random_beta(std::uint64_t seed, std::uint64_t index) {
  const double u = 0.5 * (uniform_pm1(seed, index) + 1.0);
  return u > 0.0 ? u : 0.5;
}

std::vector<double> random_betas(std::size_t n, std::uint64_t seed, bool monotone) {
  std::vector<double> b(n + 1, 0.0);
  for (std::size_t i = 1; i <= n; ++i) b[i] = random_beta(seed, i);
  if (monotone) std::sort(b.begin() + 1, b.end());
  return b;
}

template <class F>
void parallel_for(std::size_t count, unsigned jobs, F&& body) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void emit(const std::string& path, const std::string& text, std::ostream& stdout_stream) {
  if (path.empty() || path == "-") stdout_stream << text;
  else write_file_atomic(path, text);
}

} // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::stringstream ss{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError(fmt::format("config line {}: expected key = value", lineno));
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw UsageError(fmt::format("config line {}: empty key", lineno));
    kv[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValues load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("cannot read config {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

ExperimentConfig make_config(const KeyValues& kv) {
  ExperimentConfig cfg;
  bool dim_given = false;
  for (const auto& [key, value] : kv) {
    if (key == "operator") cfg.op = value;
    else if (key == "rho") cfg.rho = parse_double(key, value);
    else if (key == "theta") cfg.theta = parse_double(key, value);
    else if (key == "dim") cfg.dim = parse_uint(key, value), dim_given = true;
    else if (key == "grid") cfg.grid = parse_uint(key, value);
    else if (key == "norm") {
      try {
        cfg.norm = parse_norm_kind(value);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    } else if (key == "schedule") {
      try {
        cfg.schedule = parse_schedule_kind(value);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    } else if (key == "betas") cfg.betas = parse_list(key, value);
    else if (key == "x0") {
      if (value != "random") cfg.x0 = parse_list(key, value);
    } else if (key == "seed") cfg.seed = parse_uint(key, value);
    else if (key == "n_max" || key == "n-max") cfg.n_max = parse_uint(key, value);
    else if (key == "trace_csv") cfg.trace_csv = value;
    else if (key == "bounds_csv") cfg.bounds_csv = value;
    else if (key == "svg") cfg.svg = value;
    else throw UsageError(fmt::format("unknown config key '{}'", key));
  }
  static const std::vector<std::string> kOps = {"rotation", "cyclic", "goebel", "l1shift"};
  if (std::find(kOps.begin(), kOps.end(), cfg.op) == kOps.end()) {
    throw UsageError(fmt::format("unknown operator '{}'", cfg.op));
  }
  if (cfg.op == "rotation") cfg.dim = 2;
  if (cfg.op == "goebel") cfg.dim = cfg.grid;
  if (!dim_given && (cfg.op == "cyclic" || cfg.op == "l1shift")) cfg.dim = cfg.x0 ? cfg.x0->size() : 10;
  if (cfg.schedule == ScheduleKind::FixedSequence && cfg.betas.size() < cfg.n_max) {
    throw UsageError(fmt::format("fixed schedule needs {} betas, got {}", cfg.n_max, cfg.betas.size()));
  }
  if (cfg.x0 && cfg.x0->size() != cfg.dim) {
    throw UsageError(fmt::format("x0 has {} entries, the operator needs {}", cfg.x0->size(), cfg.dim));
  }
  return cfg;
}

OperatorSpec make_operator(const ExperimentConfig& cfg) {
  if (cfg.op == "rotation") return rotation_contraction(cfg.rho, cfg.theta);
  if (cfg.op == "cyclic") return cyclic_shift(cfg.rho, cfg.dim, cfg.norm);
  if (cfg.op == "goebel") return goebel_map(cfg.rho, cfg.grid);
  if (cfg.op == "l1shift") return l1_right_shift(cfg.rho, cfg.dim);
  throw UsageError(fmt::format("unknown operator '{}'", cfg.op));
}

Vec make_x0(const ExperimentConfig& cfg, const OperatorSpec& op) {
  if (cfg.x0) return *cfg.x0;
  if (cfg.op == "goebel") return random_goebel_point(op.dim, cfg.seed);
  return random_pm1(op.dim, cfg.seed);
}

RunOutput run_experiment(const ExperimentConfig& cfg) {
  const OperatorSpec op = make_operator(cfg);
  const Vec x0 = make_x0(cfg, op);
  const Rho rho(cfg.rho);
  const std::size_t n = cfg.n_max;
  RunOutput out;
  out.header.push_back(fmt::format("operator={}", op.name));
  out.header.push_back(fmt::format("schedule={} n_max={}", to_string(cfg.schedule), n));
  if (cfg.x0) out.header.push_back("x0=literal");
  else if (cfg.op == "goebel") out.header.push_back(fmt::format("x0=random rng={} seed={} dist=U[0,1] endpoints pinned", kRngName, cfg.seed));
  else out.header.push_back(fmt::format("x0=random rng={} seed={} dist=U[-1,1]", kRngName, cfg.seed));

  const std::optional<double> delta0 = op.fixed_point ? std::optional(op.dist(x0, *op.fixed_point)) : std::nullopt;
  // A priori orbit bound: (1 + rho) delta0 when rho <= 1, diam(C) = 1 on the Goebel domain.
  std::optional<double> kappa0;
  std::string kappa_rule;
  if (delta0 && rho <= 1.0) {
    kappa0 = (1.0 + rho) * *delta0;
    kappa_rule = "kappa0=(1+rho)*delta0, delta0=||x0-x*||";
  } else if (cfg.op == "goebel") {
    kappa0 = 1.0;
    kappa_rule = "kappa0=diam(C)=1";
  }

  switch (cfg.schedule) {
  case ScheduleKind::MOpt:
  case ScheduleKind::FixedSequence: {
    std::vector<ScheduleRow> rows;
    if (cfg.schedule == ScheduleKind::MOpt) {
      rows = m_opt_schedule(rho, n);
    } else {
      std::vector<double> betas{0.0};
      betas.insert(betas.end(), cfg.betas.begin(), cfg.betas.begin() + static_cast<long>(n));
      rows = halpern_recursive_bounds(rho, betas);
    }
    out.trace = halpern_run(op, x0, betas_of(rows), n);
    if (kappa0) out.bound_rows = rows, out.scale = *kappa0, out.scale_rule = kappa_rule;
    break;
  }
  case ScheduleKind::Ada:
    out.trace = ada_halpern_run(op, x0, n);
    if (kappa0) out.bound_rows = m_opt_schedule(rho, n), out.scale = *kappa0, out.scale_rule = kappa_rule;
    break;
  case ScheduleKind::FlatOpt: {
    auto rows = flat_schedule(rho, n);
    out.trace = halpern_run(op, x0, betas_of(rows), n);
    if (delta0) out.bound_rows = rows, out.scale = *delta0, out.scale_rule = "delta0=||x0-x*||";
    break;
  }
  case ScheduleKind::Affine: {
    const auto sched = aff_schedule(rho, std::max<std::size_t>(n, 1));
    const auto actions = sched.actions();
    out.trace = halpern_run(op, x0, std::span<const StepAction>(actions), n);
    if (sched.limit_case) out.header.push_back("affine schedule at rho=1 is the limit case");
    if (delta0 && cfg.op != "goebel") {
      std::vector<ScheduleRow> rows;
      for (std::size_t k = 0; k <= n; ++k) rows.push_back({k, sched.rows[k].beta, sched.rows[k].l_star, {}});
      out.bound_rows = rows, out.scale = *delta0, out.scale_rule = "delta0=||x0-x*||, bound=L*_n";
    }
    break;
  }
  case ScheduleKind::BanachPicard: {
    out.trace = banach_picard_run(op, x0, n);
    std::vector<ScheduleRow> rows;
    for (std::size_t k = 0; k <= n; ++k) rows.push_back({k, k == 0 ? 0.0 : 1.0, std::pow(cfg.rho, static_cast<double>(k)), {}});
    out.bound_rows = rows, out.scale = out.trace.steps.front().residual, out.scale_rule = "r0=||x0-Tx0||, bound=rho^n";
    break;
  }
  }
  out.trace.delta0 = delta0;
  out.trace.kappa0 = kappa0;
  if (out.bound_rows) {
    out.header.push_back(fmt::format("scale_rule={} scale={:.17g}", out.scale_rule, out.scale));
    out.violations = check_bounds(out.trace, *out.bound_rows, out.scale).failures();
  }
  return out;
}

std::string trace_csv_text(const RunOutput& run) {
  std::ostringstream os;
  for (const auto& h : run.header) os << "# " << h << '\n';
  write_trace_csv(os, run.trace);
  return os.str();
}

std::string bounds_csv_text(const RunOutput& run) {
  if (!run.bound_rows) return {};
  std::ostringstream os;
  os << "# scale_rule=" << run.scale_rule << '\n';
  os << "n,bound,scale,scaled_bound,residual\n";
  const auto& rows = *run.bound_rows;
  for (std::size_t k = 0; k < std::min(rows.size(), run.trace.steps.size()); ++k) {
    fmt::print(os, "{},{:.17g},{:.17g},{:.17g},{:.17g}\n", k, rows[k].bound, run.scale, run.scale * rows[k].bound,
               run.trace.steps[k].residual);
  }
  return os.str();
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  const RunOutput run = run_experiment(cfg);
  emit(cfg.trace_csv, trace_csv_text(run), out);
  if (!cfg.bounds_csv.empty()) {
    if (run.bound_rows) emit(cfg.bounds_csv, bounds_csv_text(run), out);
    else err << "no a priori scale is derivable for this run; bounds CSV not written\n";
  }
  if (!cfg.svg.empty()) {
    PlotSpec spec{fmt::format("{} on {}", to_string(cfg.schedule), make_operator(cfg).name), "n", "residual", {}};
    PlotSeries res{"residual", {}, {}};
    PlotSeries bnd{"scaled bound", {}, {}};
    for (const auto& s : run.trace.steps) {
      res.x.push_back(static_cast<double>(s.n));
      res.y.push_back(s.residual);
      if (run.bound_rows && s.n < run.bound_rows->size()) {
        bnd.x.push_back(static_cast<double>(s.n));
        bnd.y.push_back(run.scale * (*run.bound_rows)[s.n].bound);
      }
    }
    spec.series.push_back(std::move(res));
    if (!bnd.x.empty()) spec.series.push_back(std::move(bnd));
    write_file_atomic(cfg.svg, render_svg(spec));
  }
  if (run.violations > 0) {
    err << fmt::format("{} bound check(s) failed\n", run.violations);
    return kExitAssertion;
  }
  return kExitOk;
}

std::string schedule_csv_text(ScheduleKind kind, Rho rho, std::size_t n_max, const std::vector<double>& betas) {
  std::ostringstream os;
  switch (kind) {
  case ScheduleKind::MOpt: write_schedule_csv(os, m_opt_schedule(rho, n_max)); break;
  case ScheduleKind::FlatOpt: write_schedule_csv(os, flat_schedule(rho, n_max)); break;
  case ScheduleKind::BanachPicard:
    write_schedule_csv(os, halpern_recursive_bounds(rho, banach_picard_betas(n_max)));
    break;
  case ScheduleKind::FixedSequence: {
    if (betas.size() < n_max) throw UsageError(fmt::format("fixed schedule needs {} betas, got {}", n_max, betas.size()));
    std::vector<double> full{0.0};
    full.insert(full.end(), betas.begin(), betas.begin() + static_cast<long>(n_max));
    write_schedule_csv(os, halpern_recursive_bounds(rho, full));
    break;
  }
  case ScheduleKind::Affine: write_affine_csv(os, aff_schedule(rho, n_max)); break;
  case ScheduleKind::Ada:
    throw UsageError("the adaptive schedule depends on the operator; use `run` with schedule=ada");
  }
  return os.str();
}

int cmd_schedule(ScheduleKind kind, Rho rho, std::size_t n_max, const std::string& out, std::ostream& stdout_stream,
                 const std::vector<double>& betas) {
  emit(out, schedule_csv_text(kind, rho, n_max, betas), stdout_stream);
  return kExitOk;
}

// ---------------------------------------------------------------- figures

std::vector<std::string> figure_ids() { return {"fig1", "fig2", "fig3-left", "fig3-right", "fig4-left", "fig4-right"}; }

namespace {

double override_double(const KeyValues& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : parse_double(key, it->second);
}

std::uint64_t override_uint(const KeyValues& kv, const std::string& key, std::uint64_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end() && key == "n_max") it = kv.find("n-max");
  return it == kv.end() ? fallback : parse_uint(key, it->second);
}

FigureOutput figure_cobweb() {
  std::ostringstream csv;
  csv << "series,rho,x,y\n";
  PlotSpec spec{"r -> V(r) with cobweb iterates", "r", "V(r)", {}};
  spec.series.push_back({"identity", {0.0, 1.0}, {0.0, 1.0}});
  for (double r : {0.75, 1.5}) {
    const Rho rho(r);
    PlotSeries curve{fmt::format("V, rho={}", r), {}, {}};
    for (int k = 0; k <= 200; ++k) {
      const double x = k / 200.0;
      const double y = v_opt(rho, x);
      curve.x.push_back(x);
      curve.y.push_back(y);
      fmt::print(csv, "curve,{},{},{}\n", fmt17(r), fmt17(x), fmt17(y));
    }
    PlotSeries web{fmt::format("cobweb, rho={}", r), {}, {}};
    double prev = 1.0;
    for (int n = 1; n <= 40; ++n) {
      const double next = v_opt(rho, prev);
      fmt::print(csv, "cobweb,{},{},{}\n", fmt17(r), fmt17(prev), fmt17(next));
      web.x.insert(web.x.end(), {prev, prev});
      web.y.insert(web.y.end(), {prev, next});
      prev = next;
    }
    const double fixed = r_limit(rho);
    fmt::print(csv, "fixed,{},{},{}\n", fmt17(r), fmt17(fixed), fmt17(fixed));
    spec.series.push_back(std::move(curve));
    spec.series.push_back(std::move(web));
  }
  return {"fig1", csv.str(), render_svg(spec)};
}

FigureOutput figure_ratios(const KeyValues& kv) {
  const auto points = static_cast<std::size_t>(override_uint(kv, "points", 1000));
  const auto grid = fig2_grid(points);
  const auto ns = fig2_indices();
  std::ostringstream csv;
  write_fig2_csv(csv, grid, ns);
  PlotSpec spec{"Q_n(rho) and Q_inf(rho)", "rho", "ratio", {}};
  for (std::size_t n : ns) spec.series.push_back({fmt::format("n={}", n), {}, {}});
  spec.series.push_back({"Q_inf", {}, {}});
  for (double r : grid) {
    const auto q = q_n_all(Rho(r), ns.back());
    for (std::size_t k = 0; k < ns.size(); ++k) {
      spec.series[k].x.push_back(r);
      spec.series[k].y.push_back(q[ns[k]]);
    }
    spec.series.back().x.push_back(r);
    spec.series.back().y.push_back(q_inf(Rho(r)));
  }
  return {"fig2", csv.str(), render_svg(spec)};
}

FigureOutput figure_rotation(std::string_view id, const KeyValues& kv) {
  const double theta = id == "fig3-left" ? std::numbers::pi / 2.0 : std::numbers::pi / 4.0;
  const double rho = override_double(kv, "rho", 0.98);
  const std::size_t n = override_uint(kv, "n_max", 300);
  const auto op = rotation_contraction(rho, override_double(kv, "theta", theta));
  Vec x0{1.0, 0.0};
  if (const auto it = kv.find("x0"); it != kv.end()) x0 = parse_list("x0", it->second);
  const auto mopt = halpern_run(op, x0, betas_of(m_opt_schedule(Rho(rho), n)), n);
  const auto ada = ada_halpern_run(op, x0, n);
  const auto bp = banach_picard_run(op, x0, n);
  std::ostringstream csv;
  csv << "n,mopt,ada,bp\n";
  PlotSpec spec{fmt::format("residuals, rho={}, theta={:.6g}", rho, theta), "n", "||x^n - Tx^n||", {}};
  spec.series = {{"m-opt", {}, {}}, {"ada", {}, {}}, {"bp", {}, {}}};
  for (std::size_t k = 0; k <= n; ++k) {
    // ada stops at step 0 when x0 is already fixed.
    const double a = k < ada.steps.size() ? ada.steps[k].residual : 0.0;
    fmt::print(csv, "{},{},{},{}\n", k, fmt17(mopt.steps[k].residual), fmt17(a), fmt17(bp.steps[k].residual));
    const double x = static_cast<double>(k);
    spec.series[0].x.push_back(x), spec.series[0].y.push_back(mopt.steps[k].residual);
    spec.series[1].x.push_back(x), spec.series[1].y.push_back(a);
    spec.series[2].x.push_back(x), spec.series[2].y.push_back(bp.steps[k].residual);
  }
  return {std::string(id), csv.str(), render_svg(spec)};
}

FigureOutput figure_cyclic(std::string_view id, const KeyValues& kv) {
  const double rho = override_double(kv, "rho", id == "fig4-left" ? 0.98 : 1.02);
  const std::size_t dim = override_uint(kv, "dim", 100);
  const std::uint64_t seed = override_uint(kv, "seed", 42);
  const std::size_t n = override_uint(kv, "n_max", 200);
  const Rho r(rho);
  const auto op = cyclic_shift(rho, dim);
  const Vec x0 = random_pm1(dim, seed);
  const auto aff = aff_schedule(r, std::max<std::size_t>(n, 1)).actions();
  const auto t_aff = halpern_run(op, x0, std::span<const StepAction>(aff), n);
  const auto t_flat = halpern_run(op, x0, betas_of(flat_schedule(r, n)), n);
  const auto t_mopt = halpern_run(op, x0, betas_of(m_opt_schedule(r, n)), n);
  const auto t_bp = banach_picard_run(op, x0, n);
  std::ostringstream csv;
  fmt::print(csv, "# x0: rng={} seed={} dist=U[-1,1] dim={}\n", kRngName, seed, dim);
  csv << "n,aff,flat,mopt,bp\n";
  PlotSpec spec{fmt::format("cyclic shift, rho={}, d={}", rho, dim), "n", "||x^n - Tx^n||", {}};
  spec.series = {{"aff", {}, {}}, {"flat-opt", {}, {}}, {"m-opt", {}, {}}, {"bp", {}, {}}};
  for (std::size_t k = 0; k <= n; ++k) {
    const double v[4] = {t_aff.steps[k].residual, t_flat.steps[k].residual, t_mopt.steps[k].residual,
                         t_bp.steps[k].residual};
    fmt::print(csv, "{},{},{},{},{}\n", k, fmt17(v[0]), fmt17(v[1]), fmt17(v[2]), fmt17(v[3]));
    for (int s = 0; s < 4; ++s) {
      spec.series[static_cast<std::size_t>(s)].x.push_back(static_cast<double>(k));
      spec.series[static_cast<std::size_t>(s)].y.push_back(v[s]);
    }
  }
  return {std::string(id), csv.str(), render_svg(spec)};
}

} // namespace

FigureOutput make_figure(std::string_view id, const KeyValues& overrides) {
  if (id == "fig1") return figure_cobweb();
  if (id == "fig2") return figure_ratios(overrides);
  if (id == "fig3-left" || id == "fig3-right") return figure_rotation(id, overrides);
  if (id == "fig4-left" || id == "fig4-right") return figure_cyclic(id, overrides);
  throw UsageError(fmt::format("unknown figure '{}'", id));
}

int cmd_figure(const std::vector<std::string>& ids, const std::filesystem::path& out_dir, const KeyValues& overrides,
               unsigned jobs, bool svg, std::ostream& err) {
  std::vector<std::string> todo;
  for (const auto& id : ids) {
    if (id == "all") {
      const auto all = figure_ids();
      todo.insert(todo.end(), all.begin(), all.end());
    } else {
      const auto known = figure_ids();
      if (std::find(known.begin(), known.end(), id) == known.end()) throw UsageError(fmt::format("unknown figure '{}'", id));
      todo.push_back(id);
    }
  }
  std::mutex log_mutex;
  parallel_for(todo.size(), jobs, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const auto fig = make_figure(todo[i], overrides);
    write_file_atomic(out_dir / (fig.id + ".csv"), fig.csv);
    if (svg) write_file_atomic(out_dir / (fig.id + ".svg"), fig.svg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard lock(log_mutex);
    err << fmt::format("{}: wrote {} ({:.2f} s)\n", fig.id, (out_dir / (fig.id + ".csv")).string(), secs);
  });
  return kExitOk;
}

// ---------------------------------------------------------------- verify

namespace {

using Records = std::vector<VerifyRecord>;

void push_close(Records& out, std::string_view suite, std::string check, double lhs, double rhs, double tol) {
  out.push_back({std::string(suite), std::move(check), lhs, rhs, std::abs(lhs - rhs) <= tol});
}

void push_le(Records& out, std::string_view suite, std::string check, double lhs, double rhs) {
  out.push_back({std::string(suite), std::move(check), lhs, rhs, lhs <= rhs});
}

// Grid minimum of a function on [0,1].
std::pair<double, double> grid_min(const std::function<double(double)>& f, std::size_t points) {
  double best = std::numeric_limits<double>::infinity();
  double arg = 0.0;
  for (std::size_t k = 0; k <= points; ++k) {
    const double b = static_cast<double>(k) / static_cast<double>(points);
    const double v = f(b);
    if (v < best) best = v, arg = b;
  }
  return {arg, best};
}

Records suite_schedules(const VerifyOptions& opts) {
  Records out;
  const std::string_view suite = "schedules";
  constexpr std::size_t kGrid = 100'000;
  const double h = 1.0 / kGrid;
  std::vector<double> rhos = {0.5, 0.75, 0.98, 1.0, 1.5, 2.0, 3.0};
  if (opts.rho) rhos = {*opts.rho};
  for (double r : rhos) {
    const Rho rho(r);
    for (std::size_t t = 0; t <= opts.budget; ++t) {
      const double lo = r_limit(rho);
      const double x = lo + (1.0 - lo) * 0.5 * (uniform_pm1(opts.seed + 7, t) + 1.0);
      const auto [arg, val] = grid_min([&](double b) { return 1.0 - b + r * b * b + r * b * (x - 1.0); }, kGrid);
      push_close(out, suite, fmt::format("v_opt_grid(rho={},r={:.6f})", r, x), v_opt(rho, x), val, r * h * h + 1e-15);
      push_close(out, suite, fmt::format("b_opt_grid(rho={},r={:.6f})", r, x), b_opt(rho, x), arg, h);
      const double xf = (1.0 + r) * 0.5 * (uniform_pm1(opts.seed + 11, t) + 1.0);
      const auto [farg, fval] = grid_min(
          [&](double b) { return (1.0 + r) - (1.0 + 3.0 * r) * b + 2.0 * r * b * b + r * b * xf; }, kGrid);
      push_close(out, suite, fmt::format("v_flat_grid(rho={},r={:.6f})", r, xf), v_flat(rho, xf), fval,
                 2.0 * r * h * h + 1e-15);
      push_close(out, suite, fmt::format("b_flat_grid(rho={},r={:.6f})", r, xf), b_flat(rho, xf), farg, h);
    }
    const auto rows = m_opt_schedule(rho, 1000);
    const auto direct = m_opt_betas_direct(rho, 1000);
    double worst = 0.0;
    for (std::size_t n = 0; n <= 1000; ++n) worst = std::max(worst, std::abs(rows[n].beta - direct[n]));
    push_le(out, suite, fmt::format("m_opt_direct_recursion(rho={})", r), worst, 1e-12);
  }
  const auto rows = m_opt_schedule(Rho(1.0), 10'000);
  double worst = 0.0;
  double prev = 1.0;
  for (std::size_t n = 1; n <= 10'000; ++n) {
    prev = prev - 0.25 * prev * prev;
    worst = std::max(worst, std::abs(rows[n].bound - prev));
  }
  push_le(out, suite, "rho1_quadratic_recursion", worst, 1e-12);
  const auto flat = flat_schedule(Rho(1.0), 200);
  double wb = 0.0;
  double wr = 0.0;
  for (std::size_t n = 0; n <= 200; ++n) {
    wb = std::max(wb, std::abs(flat[n].beta - rows[n].beta));
    wr = std::max(wr, std::abs(flat[n].bound - 2.0 * rows[n].bound));
  }
  push_le(out, suite, "flat_betas_equal_mopt_at_rho1", wb, 1e-12);
  push_le(out, suite, "flat_bound_twice_mopt_at_rho1", wr, 1e-12);
  return out;
}

Records suite_transport(const VerifyOptions& opts) {
  Records out;
  const std::string_view suite = "transport";
  const double r = opts.rho.value_or(1.0);
  const Rho rho(r);
  const std::size_t n = opts.n;
  std::vector<std::pair<std::string, std::vector<double>>> cases;
  cases.push_back({"mopt", betas_of(m_opt_schedule(rho, n))});
  for (std::size_t t = 0; t < opts.budget; ++t) {
    cases.push_back({fmt::format("random{}", t), random_betas(n, opts.seed + t, t % 2 == 0)});
  }
  for (const auto& [label, betas] : cases) {
    const auto pi = MannArray::halpern(betas);
    const auto table = ot_bounds(rho, pi, n);
    const auto rec = halpern_recursive_bounds(rho, betas);
    for (std::size_t k = 0; k <= n; ++k) {
      push_close(out, suite, fmt::format("{}:closed_form_R({})", label, k), table.R[k], rec[k].bound, 1e-12);
    }
    const auto inst = build_adversarial_instance(table, 1.0, pi);
    const auto report = verify_tightness(inst, table);
    for (const auto& c : report.checks) {
      out.push_back({std::string(suite), fmt::format("{}:{}({},{})", label, c.check, c.m, c.n), c.lhs, c.rhs, c.ok});
    }
  }
  return out;
}

Records suite_affine(const VerifyOptions& opts) {
  Records out;
  const std::string_view suite = "affine";
  std::vector<double> grid;
  for (int k = 1; k <= 19; ++k) grid.push_back(0.05 * k);
  for (int k = 21; k <= 60; ++k) grid.push_back(0.05 * k);
  for (double r : grid) {
    const Rho rho(r);
    const auto scan = affine_n0_scan(rho);
    const auto lam = affine_n0_lambert(rho);
    push_close(out, suite, fmt::format("n0_scan_vs_lambert(rho={:.2f})", r), static_cast<double>(scan),
               static_cast<double>(lam), 0.0);
    double worst = 0.0;
    for (std::size_t n = 0; n <= 30; ++n) worst = std::max(worst, std::abs(l_star(rho, n) - l_star_bruteforce(rho, n)));
    push_le(out, suite, fmt::format("l_star_vs_bruteforce(rho={:.2f})", r), worst, 1e-12);
  }
  for (std::size_t t = 0; t < opts.budget; ++t) {
    const double r = 0.3 + 1.5 * 0.5 * (uniform_pm1(opts.seed + 3, t) + 1.0);
    const std::size_t n = 50;
    const auto betas = random_betas(n, opts.seed + 100 + t, false);
    const auto op = l1_right_shift(r, n + 2);
    Vec x0(n + 2, 0.0);
    x0[0] = 1.0;
    const auto trace = halpern_run(op, x0, betas, n);
    double worst = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      const double ln = affine_residual_bound(Rho(r), betas, k);
      worst = std::max(worst, std::abs(trace.steps[k].residual - ln) / std::max(1.0, ln));
    }
    // Error measured relative to max(1, L_n): expansive draws reach L_n ~ 1e13.
    push_le(out, suite, fmt::format("l1_shift_exact(trial={},rho={:.4f})", t, r), worst, 1e-12);

    const std::size_t m = 20;
    const auto sx0 = sign_init_x0(r, betas, m);
    const auto cyc = cyclic_shift(r, m + 2);
    const auto st = halpern_run(cyc, sx0, betas, m);
    const double lm = affine_residual_bound(Rho(r), betas, m);
    push_close(out, suite, fmt::format("sign_vector_exact(trial={},rho={:.4f})", t, r), st.steps[m].residual, lm,
               1e-12 * std::max(1.0, lm));
  }
  return out;
}

Records suite_analysis(const VerifyOptions& opts) {
  Records out;
  const std::string_view suite = "analysis";
  constexpr std::size_t kPoints = 500;
  double worst_gap = -std::numeric_limits<double>::infinity();
  double worst_qinf = 0.0;
  for (std::size_t k = 1; k <= kPoints; ++k) {
    const Rho rho(static_cast<double>(k) / (kPoints + 1));
    const auto q = q_n_all(rho, 500);
    const double qi = q_inf(rho);
    worst_gap = std::max(worst_gap, *std::max_element(q.begin(), q.end()) - qi);
    worst_qinf = std::max(worst_qinf, qi);
  }
  push_le(out, suite, "max_q_n_minus_q_inf", worst_gap, 1e-9);
  push_le(out, suite, "max_q_inf", worst_qinf, kESquared + 1e-9);
  const auto seq = rho_z_sequences(opts.budget >= 5 ? 1'000'000 : 100'000);
  for (std::size_t n = 0; n <= 30; ++n) {
    const double rn = seq.rho[n];
    if (rn >= 1.0) break;
    push_close(out, suite, fmt::format("q_inf_at_rho_n({})", n), q_inf(Rho(rn)) * std::pow(rn, static_cast<double>(n + 1)),
               1.0, 1e-12);
  }
  bool decreasing = true;
  for (std::size_t n = 2; n < seq.rho_pow.size(); ++n) decreasing = decreasing && seq.rho_pow[n] < seq.rho_pow[n - 1];
  out.push_back({std::string(suite), "rho_n_pow_n_strictly_decreasing", decreasing ? 1.0 : 0.0, 1.0, decreasing});
  push_close(out, suite, fmt::format("rho_n_pow_n_limit(n={})", seq.rho_pow.size() - 1), seq.rho_pow.back(),
             1.0 / kESquared, 1e-3);
  const auto logi = logistic_sandwich(10'000);
  const bool sandwich = std::all_of(logi.begin(), logi.end(), [](const LogisticRow& r) { return r.ok; });
  out.push_back({std::string(suite), "logistic_sandwich(n<=10000)", sandwich ? 1.0 : 0.0, 1.0, sandwich});
  for (double r : {1.5, 2.0, 2.4}) {
    push_le(out, suite, fmt::format("logistic_identity(rho={})", r), logistic_identity_gap(Rho(r), 10'000), 1e-12);
  }
  return out;
}

Records suite_engine(const VerifyOptions& opts) {
  Records out;
  const std::string_view suite = "engine";
  {
    const std::size_t n = 200;
    const Rho rho(1.5);
    const auto op = cyclic_shift(rho, 10);
    const auto rows = m_opt_schedule(rho, n);
    for (std::size_t t = 0; t < std::max<std::size_t>(opts.budget, 1); ++t) {
      const Vec x0 = random_pm1(10, opts.seed + t);
      const auto betas = betas_of(rows);
      const double kappa = orbit_diameter(op, mann_orbit(op, x0, MannArray::halpern(betas), n));
      const auto report = check_bounds(halpern_run(op, x0, betas, n), rows, kappa);
      out.push_back({std::string(suite), fmt::format("mopt_cyclic1.5_failures(seed={})", opts.seed + t),
                     static_cast<double>(report.failures()), 0.0, report.all_ok()});
    }
  }
  {
    const std::size_t n = 60;
    const Rho rho(0.8);
    const auto op = l1_right_shift(rho, n + 2);
    Vec x0(n + 2, 0.0);
    x0[0] = 1.0;
    const auto rows = flat_schedule(rho, n);
    const auto report = check_bounds(halpern_run(op, x0, betas_of(rows), n), rows, 1.0);
    out.push_back({std::string(suite), "flat_l1shift0.8_failures", static_cast<double>(report.failures()), 0.0,
                   report.all_ok()});
  }
  for (double theta : {std::numbers::pi / 2.0, std::numbers::pi / 4.0}) {
    bool ok = true;
    try {
      ada_halpern_run(rotation_contraction(0.98, theta), Vec{1.0, 0.0}, 2000);
    } catch (const BoundViolation&) {
      ok = false;
    }
    out.push_back({std::string(suite), fmt::format("ada_sandwich(theta={:.6f})", theta), ok ? 1.0 : 0.0, 1.0, ok});
  }
  {
    const auto op = goebel_map(2.0, 101);
    const auto rows = m_opt_schedule(Rho(2.0), 100);
    const auto trace = halpern_run(op, random_goebel_point(101, opts.seed), betas_of(rows), 100);
    double worst = 0.0;
    for (const auto& s : trace.steps) worst = std::max(worst, std::abs(s.residual - 0.5));
    push_le(out, suite, "goebel_constant_residual", worst, 1e-14);
  }
  {
    const std::size_t n = 12;
    const Rho rho(0.7);
    const auto op = cyclic_shift(rho, 6);
    const auto pi = MannArray::uniform(n);
    const Vec x0 = random_pm1(6, opts.seed);
    const double kappa = orbit_diameter(op, mann_orbit(op, x0, pi, n));
    const auto table = ot_bounds(rho, pi, n);
    const auto trace = mann_run(op, x0, pi, n);
    std::size_t bad = 0;
    for (std::size_t k = 0; k <= n; ++k) bad += trace.steps[k].residual > kappa * table.R[k] * (1.0 + 1e-9);
    out.push_back({std::string(suite), "mann_uniform_ot_bound_failures", static_cast<double>(bad), 0.0, bad == 0});
  }
  return out;
}

} // namespace

std::vector<std::string> suite_names() { return {"schedules", "transport", "affine", "analysis", "engine"}; }

std::vector<VerifyRecord> run_suite(std::string_view suite, const VerifyOptions& opts) {
  if (suite == "schedules") return suite_schedules(opts);
  if (suite == "transport") return suite_transport(opts);
  if (suite == "affine") return suite_affine(opts);
  if (suite == "analysis") return suite_analysis(opts);
  if (suite == "engine") return suite_engine(opts);
  throw UsageError(fmt::format("unknown verify suite '{}'", suite));
}

std::string to_jsonl(const std::vector<VerifyRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["suite"] = r.suite;
    j["check"] = r.check;
    j["lhs"] = r.lhs;
    j["rhs"] = r.rhs;
    j["abs_diff"] = std::abs(r.lhs - r.rhs);
    j["ok"] = r.ok;
    out += j.dump();
    out += '\n';
  }
  return out;
}

int cmd_verify(std::string_view suite, const VerifyOptions& opts, const std::string& out, unsigned jobs,
               std::ostream& stdout_stream, std::ostream& err) {
  std::vector<std::string> suites;
  if (suite == "all") suites = suite_names();
  else {
    const auto known = suite_names();
    if (std::find(known.begin(), known.end(), suite) == known.end()) {
      throw UsageError(fmt::format("unknown verify suite '{}'", suite));
    }
    suites.emplace_back(suite);
  }
  std::vector<std::vector<VerifyRecord>> results(suites.size());
  parallel_for(suites.size(), jobs, [&](std::size_t i) { results[i] = run_suite(suites[i], opts); });
  std::vector<VerifyRecord> all;
  for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
  emit(out, to_jsonl(all), stdout_stream);
  const auto failed = std::count_if(all.begin(), all.end(), [](const VerifyRecord& r) { return !r.ok; });
  err << fmt::format("verify {}: {} checks, {} failed\n", suite, all.size(), failed);
  return failed == 0 ? kExitOk : kExitAssertion;
}

// ---------------------------------------------------------------- entry

int main_entry(int argc, char** argv) {
  CLI::App app{"Halpern iteration schedules, bounds and experiments"};
  app.require_subcommand(1);

  std::string kind = "mopt";
  double rho = 1.0;
  std::size_t n_max = 100;
  std::string out;
  std::vector<double> betas;
  auto* schedule = app.add_subcommand("schedule", "Print a schedule with its bound sequence");
  schedule->add_option("--kind", kind, "mopt | flat | affine | bp | fixed");
  schedule->add_option("--rho", rho, "Lipschitz constant")->required();
  schedule->add_option("--n-max", n_max, "Last step index");
  schedule->add_option("--betas", betas, "beta_1..beta_n for --kind fixed")->delimiter(',');
  schedule->add_option("--out", out, "Output CSV (stdout when omitted)");

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<double> run_rho;
  std::optional<std::size_t> run_n;
  std::optional<std::uint64_t> run_seed;
  std::string bounds_out;
  std::string svg_out;
  auto* run = app.add_subcommand("run", "Run one experiment described by a key=value config");
  run->add_option("--config", config_path, "Config file");
  run->add_option("--set", sets, "Override key=value (repeatable)");
  run->add_option("--rho", run_rho, "Override rho");
  run->add_option("--n-max", run_n, "Override n_max");
  run->add_option("--seed", run_seed, "Override seed of the random start");
  run->add_option("--out", out, "Trace CSV (stdout when omitted)");
  run->add_option("--bounds-out", bounds_out, "Bounds CSV");
  run->add_option("--svg", svg_out, "SVG plot of residual and bound");

  std::vector<std::string> fig_ids;
  std::string fig_dir = "figures";
  unsigned jobs = 1;
  bool no_svg = false;
  auto* figure = app.add_subcommand("figure", "Reproduce figure data as CSV and SVG");
  figure->add_option("ids", fig_ids, "fig1 fig2 fig3-left fig3-right fig4-left fig4-right all")->required();
  figure->add_option("--out", fig_dir, "Output directory");
  figure->add_option("--jobs", jobs, "Parallel jobs");
  figure->add_option("--set", sets, "Override key=value (rho, theta, dim, seed, n_max, points, x0)");
  figure->add_option("--rho", run_rho, "Override rho");
  figure->add_option("--n-max", run_n, "Override n_max");
  figure->add_option("--seed", run_seed, "Override seed");
  figure->add_flag("--no-svg", no_svg, "Skip SVG output");

  std::string suite = "all";
  VerifyOptions vopts;
  std::optional<double> vrho;
  auto* verify = app.add_subcommand("verify", "Run verification suites, JSON lines per check");
  verify->add_option("suite", suite, "schedules | transport | affine | analysis | engine | all");
  verify->add_option("--n", vopts.n, "Horizon for the transport suite");
  verify->add_option("--rho", vrho, "Lipschitz constant where a suite takes one");
  verify->add_option("--budget", vopts.budget, "Number of random trials per suite");
  verify->add_option("--seed", vopts.seed, "Base seed");
  verify->add_option("--out", out, "JSONL output (stdout when omitted)");
  verify->add_option("--jobs", jobs, "Parallel suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto overrides = [&] {
    KeyValues kv = config_path.empty() ? KeyValues{} : load_config_file(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError(fmt::format("--set expects key=value, got '{}'", s));
      kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    if (run_rho) kv["rho"] = fmt17(*run_rho);
    if (run_n) kv["n_max"] = std::to_string(*run_n);
    if (run_seed) kv["seed"] = std::to_string(*run_seed);
    return kv;
  };

  try {
    if (*schedule) {
      ScheduleKind k;
      try {
        k = parse_schedule_kind(kind);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      return cmd_schedule(k, Rho(rho), n_max, out, std::cout, betas);
    }
    if (*run) {
      auto kv = overrides();
      if (!out.empty()) kv["trace_csv"] = out;
      if (!bounds_out.empty()) kv["bounds_csv"] = bounds_out;
      if (!svg_out.empty()) kv["svg"] = svg_out;
      return cmd_run(make_config(kv), std::cout, std::cerr);
    }
    if (*figure) return cmd_figure(fig_ids, fig_dir, overrides(), jobs, !no_svg, std::cerr);
    if (*verify) {
      vopts.rho = vrho;
      return cmd_verify(suite, vopts, out, jobs, std::cout, std::cerr);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const BoundViolation& e) {
    std::cerr << "bound violation: " << e.what() << '\n';
    return kExitAssertion;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAssertion;
  }
  return kExitUsage;
}

} // namespace halpern::cli
