#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "halpern/analysis.hpp"
#include "halpern/cli.hpp"
#include "halpern/output.hpp"

using namespace halpern;
using namespace halpern::cli;
namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("halpern_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_main(std::vector<std::string> args) {
  args.insert(args.begin(), "halpern");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return main_entry(static_cast<int>(argv.size()), argv.data());
}

} // namespace

TEST_CASE("key value parsing") {
  const auto kv = parse_key_values("# comment\noperator = cyclic\n\nrho=1.5  # trailing\n  dim = 10\n");
  CHECK(kv.at("operator") == "cyclic");
  CHECK(kv.at("rho") == "1.5");
  CHECK(kv.at("dim") == "10");
  CHECK_THROWS_AS(parse_key_values("no equals sign"), UsageError);
  CHECK_THROWS_AS(parse_key_values("= 3"), UsageError);
}

TEST_CASE("experiment configs") {
  const auto cfg = make_config({{"operator", "rotation"}, {"theta", "pi/4"}, {"x0", "1,0"}, {"schedule", "ada"}});
  CHECK(cfg.theta == doctest::Approx(std::numbers::pi / 4));
  CHECK(cfg.x0 == Vec{1.0, 0.0});
  CHECK(cfg.schedule == ScheduleKind::Ada);
  CHECK_THROWS_AS(make_config({{"operator", "nosuch"}}), UsageError);
  CHECK_THROWS_AS(make_config({{"colour", "blue"}}), UsageError);
  CHECK_THROWS_AS(make_config({{"rho", "fast"}}), UsageError);
  CHECK_THROWS_AS(make_config({{"schedule", "fixed"}, {"n_max", "3"}, {"betas", "0.5"}}), UsageError);
  CHECK_THROWS_AS(make_config({{"operator", "cyclic"}, {"dim", "4"}, {"x0", "1,2"}}), UsageError);
  const auto cyc = make_config({{"operator", "cyclic"}, {"rho", "0.98"}, {"dim", "100"}, {"seed", "42"}});
  CHECK(make_x0(cyc, make_operator(cyc)) == random_pm1(100, 42));
}

TEST_CASE("schedule subcommand output") {
  const auto one = csv_rows(schedule_csv_text(ScheduleKind::MOpt, Rho(1), 3));
  REQUIRE(one.size() == 5);
  CHECK(one[0] == std::vector<std::string>{"n", "beta", "bound"});
  CHECK(std::stod(one[2][2]) == 0.75);
  CHECK(std::stod(one[3][2]) == 0.609375);
  for (std::size_t n = 1; n <= 5; ++n) {
    const auto flat = csv_rows(schedule_csv_text(ScheduleKind::FlatOpt, Rho(3), 5));
    CHECK(std::stod(flat[n + 1][1]) == 0.0);
  }
  const auto aff = csv_rows(schedule_csv_text(ScheduleKind::Affine, Rho(0.5), 4));
  CHECK(aff[0] == std::vector<std::string>{"n", "beta", "frozen", "l_star"});
  const double expect[] = {0.5, 1.0, 1.0, 1.0};
  for (std::size_t n = 1; n <= 4; ++n) CHECK(std::stod(aff[n + 1][1]) == expect[n - 1]);
  CHECK_THROWS_AS(schedule_csv_text(ScheduleKind::Ada, Rho(1), 3), UsageError);
  const auto fixed = csv_rows(schedule_csv_text(ScheduleKind::FixedSequence, Rho(1), 2, {0.5, 2.0 / 3.0}));
  CHECK(std::stod(fixed[3][2]) == doctest::Approx(11.0 / 18.0).epsilon(1e-15));
}

TEST_CASE("run is deterministic and bounded") {
  const KeyValues kv{{"operator", "cyclic"}, {"rho", "0.98"}, {"dim", "100"}, {"seed", "42"}, {"n_max", "200"}};
  for (const auto* sched : {"mopt", "flat", "affine", "bp", "ada"}) {
    auto with = kv;
    with["schedule"] = sched;
    const auto a = run_experiment(make_config(with));
    const auto b = run_experiment(make_config(with));
    CHECK(trace_csv_text(a) == trace_csv_text(b));
    REQUIRE(a.bound_rows);
    CHECK(a.violations == 0);
    CHECK(trace_csv_text(a).find("seed=42") != std::string::npos);
    CHECK(bounds_csv_text(a).find("scale_rule=") != std::string::npos);
  }
  const auto goebel = run_experiment(make_config({{"operator", "goebel"}, {"rho", "2"}, {"n_max", "50"}}));
  for (const auto& s : goebel.trace.steps) CHECK(std::abs(s.residual - 0.5) <= 1e-14);
  CHECK(goebel.scale == 1.0);
  CHECK(goebel.violations == 0);

  const auto rot = run_experiment(make_config({{"operator", "rotation"}, {"x0", "1,0"}, {"n_max", "300"}}));
  CHECK(rot.scale == doctest::Approx(1.98));
}

TEST_CASE("run writes files atomically") {
  const auto dir = scratch_dir("run");
  auto cfg = make_config({{"operator", "rotation"}, {"n_max", "20"}});
  cfg.trace_csv = (dir / "trace.csv").string();
  cfg.bounds_csv = (dir / "bounds.csv").string();
  cfg.svg = (dir / "plot.svg").string();
  std::ostringstream out, err;
  CHECK(cmd_run(cfg, out, err) == kExitOk);
  CHECK(fs::exists(dir / "trace.csv"));
  CHECK(slurp(dir / "bounds.csv").find("n,bound,scale,scaled_bound,residual") != std::string::npos);
  CHECK(slurp(dir / "plot.svg").rfind("<svg", 0) == 0);
  for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().filename().string().find(".tmp.") == std::string::npos);
  CHECK_THROWS_AS(write_file_atomic("/proc/definitely/not/here.csv", "x"), std::runtime_error);
}

TEST_CASE("svg log scale switch") {
  PlotSpec spec{"t", "x", "y", {{"a", {0, 1, 2}, {1.0, 0.5, 0.1}}}};
  CHECK_FALSE(wants_log_scale(spec));
  spec.series[0].y[2] = 1e-5;
  CHECK(wants_log_scale(spec));
  CHECK(render_svg(spec).find("(log)") != std::string::npos);
}

TEST_CASE("cobweb figure converges to the marked fixed point") {
  const auto fig = make_figure("fig1");
  const auto rows = csv_rows(fig.csv);
  CHECK(rows[0] == std::vector<std::string>{"series", "rho", "x", "y"});
  for (double r : {0.75, 1.5}) {
    double last = -1.0, fixed = -2.0;
    std::size_t steps = 0;
    for (const auto& row : rows) {
      if (row[0] == "series" || std::stod(row[1]) != r) continue;
      if (row[0] == "cobweb") last = std::stod(row[3]), ++steps;
      if (row[0] == "fixed") fixed = std::stod(row[2]);
    }
    CHECK(fixed == doctest::Approx(r_limit(Rho(r))));
    CHECK(last >= fixed);
    // Geometric for rho < 1, logistic 4 / (rho (n + 3)) above.
    CHECK(last - fixed <= (r < 1.0 ? 1e-3 : 4.0 / (r * (steps + 3.0))));
  }
}

TEST_CASE("ratio figure stays below e squared") {
  const auto fig = make_figure("fig2", {{"points", "200"}});
  double worst = 0.0;
  for (const auto& row : csv_rows(fig.csv)) {
    if (row[0] == "rho") continue;
    worst = std::max({worst, std::stod(row[2]), std::stod(row[3])});
  }
  CHECK(worst <= kESquared + 1e-9);
  CHECK(worst > 5.0);
}

TEST_CASE("residual figures") {
  const auto left = csv_rows(make_figure("fig3-left").csv);
  CHECK(left[0] == std::vector<std::string>{"n", "mopt", "ada", "bp"});
  CHECK(left.size() == 302);
  CHECK(std::stod(left[51][1]) < std::stod(left[51][3]));

  const auto fig4 = make_figure("fig4-left");
  CHECK(fig4.csv.rfind("# x0: rng=splitmix64-ctr seed=42", 0) == 0);
  const auto rows = csv_rows(fig4.csv);
  CHECK(rows[0] == std::vector<std::string>{"n", "aff", "flat", "mopt", "bp"});
  CHECK(std::stod(rows[201][2]) <= 0.1 * std::stod(rows[201][4]));
  CHECK(make_figure("fig4-left").csv == fig4.csv);
  CHECK(make_figure("fig4-right").svg.rfind("<svg", 0) == 0);
  CHECK_THROWS_AS(make_figure("fig9"), UsageError);
}

TEST_CASE("figure jobs in parallel") {
  const auto dir = scratch_dir("figs");
  std::ostringstream err;
  CHECK(cmd_figure({"fig1", "fig3-left", "fig3-right", "fig4-left"}, dir, {}, 4, true, err) == kExitOk);
  for (const auto* id : {"fig1", "fig3-left", "fig3-right", "fig4-left"}) {
    CHECK(fs::exists(dir / (std::string(id) + ".csv")));
    CHECK(fs::exists(dir / (std::string(id) + ".svg")));
  }
  const auto first = slurp(dir / "fig4-left.csv");
  CHECK(cmd_figure({"fig4-left"}, dir, {}, 1, false, err) == kExitOk);
  CHECK(slurp(dir / "fig4-left.csv") == first);
  CHECK_THROWS_AS(cmd_figure({"nope"}, dir, {}, 1, false, err), UsageError);
}

TEST_CASE("verify suites report json lines") {
  VerifyOptions opts;
  opts.budget = 2;
  for (const auto& suite : suite_names()) {
    const auto records = run_suite(suite, opts);
    CHECK_FALSE(records.empty());
    for (const auto& r : records) {
      INFO(r.check);
      CHECK(r.ok);
    }
    std::istringstream in(to_jsonl(records));
    std::string line;
    std::size_t count = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.at("suite") == suite);
      for (const auto* key : {"check", "lhs", "rhs", "abs_diff", "ok"}) CHECK(j.contains(key));
      ++count;
    }
    CHECK(count == records.size());
  }
  std::ostringstream out, err;
  opts.rho = 1.0;
  CHECK(cmd_verify("transport", opts, "", 1, out, err) == kExitOk);
  CHECK_THROWS_AS(cmd_verify("nosuch", opts, "", 1, out, err), UsageError);

  VerifyRecord bad{"x", "y", 1.0, 0.0, false};
  CHECK(to_jsonl({bad}).find("\"ok\":false") != std::string::npos);
}

TEST_CASE("exit codes") {
  const auto dir = scratch_dir("main");
  CHECK(run_main({"schedule", "--kind", "mopt", "--rho", "1", "--n-max", "3", "--out", (dir / "s.csv").string()}) ==
        kExitOk);
  CHECK(slurp(dir / "s.csv").rfind("n,beta,bound\n", 0) == 0);
  CHECK(run_main({"schedule", "--kind", "nosuch", "--rho", "1"}) == kExitUsage);
  CHECK(run_main({"schedule", "--rho", "-1"}) == kExitUsage);
  CHECK(run_main({"schedule"}) == kExitUsage);
  CHECK(run_main({"nosuch"}) == kExitUsage);
  CHECK(run_main({"run", "--set", "colour=blue"}) == kExitUsage);
  CHECK(run_main({"run", "--config", (dir / "missing.cfg").string()}) == kExitUsage);
  std::ofstream(dir / "exp.cfg") << "operator = goebel\nrho = 2\nschedule = mopt\nn_max = 30\n";
  CHECK(run_main({"run", "--config", (dir / "exp.cfg").string(), "--out", (dir / "t.csv").string()}) == kExitOk);
  CHECK(run_main({"verify", "affine", "--out", (dir / "v.jsonl").string()}) == kExitOk);
  CHECK(run_main({"--help"}) == kExitOk);
}
