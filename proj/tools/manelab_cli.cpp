// manelab: scenario runner. Exit 0 when every verdict matches its expected
// value, 2 when some verdict contradicts it, 1 on operational failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cli_config.hpp"
#include "manelab/io.hpp"

namespace fs = std::filesystem;
using namespace manelab;
using manelab::cli::json;

namespace {

struct Section {
  std::string command;
  json verdicts = json::array();
  json constants = json::object();
  json files = json::array();
  json notes = json::array();
  bool mismatch = false;

  explicit Section(std::string name) : command(std::move(name)) {}

  void verdict(const std::string& name, const std::string& value, const std::string& expected = "") {
    json v{{"name", name}, {"value", value}};
    if (!expected.empty()) {
      v["expected"] = expected;
      v["ok"] = value == expected;
      if (value != expected) mismatch = true;
    }
    verdicts.push_back(v);
  }
};

struct Output {
  fs::path dir;
  bool csv = true;

  void write(Section& sec, const std::string& name, const std::string& body) const {
    if (!csv) return;
    fs::create_directories(dir);
    std::ofstream(dir / name, std::ios::binary) << body;
    char h[17];
    std::snprintf(h, sizeof h, "%016llx", static_cast<unsigned long long>(cli::fnv1a64(body)));
    sec.files.push_back({{"file", name}, {"bytes", body.size()}, {"fnv1a", h}});
  }
};

Spectrum make_spectrum(const json& c) {
  const auto& s = c["spectrum"];
  const std::string fam = s["family"];
  const auto n = s["n_max"].get<std::size_t>();
  if (fam == "linear") return Spectrum::linear(s["params"]["c"], n);
  if (fam == "power") return Spectrum::power(s["params"]["kappa"], n);
  if (fam == "quadratic") return Spectrum::quadratic(n);
  return Spectrum::explicit_list(s["params"]["values"].get<std::vector<double>>());
}

double half_period(const json& c) { return c["drive"]["tau"].get<double>() * c["drive"]["T_scale"].get<double>(); }

FloquetOptions floquet_options(const json& c) {
  FloquetOptions f;
  f.amplitude = c["drive"]["amplitude"];
  f.plateau_fraction = c["drive"]["plateau_fraction"];
  return f;
}

std::string expected_at(const json& list, std::size_t i) {
  return i < list.size() ? list[i].get<std::string>() : "";
}

// ------------------------------------------------------------ gap-check

Section cmd_gap_check(const json& c, const Output& out) {
  Section sec("gap-check");
  const auto spec = make_spectrum(c);
  const double L = c["dynamics"]["L"];
  const auto gap = spectral_gap(spec);
  std::ostringstream csv;
  csv << "quantity,value\n";
  csv << "L," << fmt17(L) << "\n";
  csv << "gap_unbounded," << (gap.unbounded ? 1 : 0) << "\n";
  std::string verdict;
  if (gap.unbounded) {
    verdict = "unbounded_gap";
    sec.notes.push_back("unbounded gap, inertial manifold regime at every L beyond gap");
  } else {
    csv << "gap," << fmt17(gap.value) << "\n";
    sec.constants["gap"] = gap.value;
    if (gap.value > 2.0 * L) {
      verdict = "gap_condition_holds";
    } else {
      const auto ob = c1_obstruction_check(spec, L, spec.size());
      csv << "minus_real_count," << ob.minus_real_count << "\n";
      csv << "plus_real_count," << ob.plus_real_count << "\n";
      csv << "plus_real_eigenvalue," << fmt17(ob.plus_real_eigenvalue) << "\n";
      sec.constants["plus_real_eigenvalue"] = ob.plus_real_eigenvalue;
      sec.constants["minus_real_count"] = ob.minus_real_count;
      sec.constants["plus_real_count"] = ob.plus_real_count;
      if (!ob.note.empty()) sec.notes.push_back(ob.note);
      verdict = ob.regime_holds && ob.parity_contradiction ? "obstruction_certified" : "inconclusive";
    }
  }
  csv << "verdict," << verdict << "\n";
  sec.verdict("gap_check", verdict, c["expect"]["gap_check"]);
  out.write(sec, "gap_check.csv", csv.str());
  return sec;
}

// ------------------------------------------------------------ floquet

Section cmd_floquet(const json& c, const Output& out) {
  Section sec("floquet");
  const auto spec = make_spectrum(c);
  const double t = half_period(c);
  const std::string expected = c["expect"]["floquet_pattern"].get<bool>() ? "match" : "mismatch";
  const std::size_t cert_n = 12;
  std::ostringstream decay;
  decay << "N,mode,lognorm\n";
  if (t == 0.0) {
    // zero period: the map is the identity
    for (std::size_t n = 0; n <= cert_n; ++n) decay << n << ",2," << fmt17(0.0) << "\n";
    sec.notes.push_back("T = 0: Poincare map is the identity, every multiplier has magnitude 1");
    sec.verdict("shift_pattern", "mismatch", expected);
    sec.verdict("identity_map", "yes");
    out.write(sec, "floquet_decay.csv", decay.str());
    return sec;
  }
  auto op = PeriodicOperator(spec, t, floquet_options(c));
  if (!c["dynamics"]["rotation"].get<bool>()) op.set_epsilon(0.0);
  const auto pred = poincare_predicted(spec, t);
  const std::size_t nt = std::min(c["dynamics"]["n_trunc"].get<std::size_t>(), spec.size() - 2);
  const auto num = poincare_numeric(op, nt);
  const auto m = compare_shift(num.full, nt, pred.full);
  std::ostringstream shift;
  shift << "column,image,sign,predicted_log_mult,numeric_log_abs\n";
  for (std::size_t j = 1; j <= nt; ++j) {
    if (!pred.full.contains(j)) continue;
    const auto& e = pred.full.at(j);
    if (e.image > nt + 2) continue;
    const double v = num.full(static_cast<Eigen::Index>(e.image - 1), static_cast<Eigen::Index>(j - 1));
    shift << j << ',' << e.image << ',' << e.sign << ',' << fmt17(e.log_mult) << ',' << fmt17(std::log(std::abs(v)))
          << "\n";
  }
  const auto cert = decay_certificate(pred.full, 2, cert_n);
  for (std::size_t n = 0; n <= cert_n; ++n) decay << n << ",2," << fmt17(iterate_norm(pred.full, 2, n).lognorm) << "\n";
  sec.constants["epsilon"] = op.epsilon();
  sec.constants["t0"] = op.t0();
  sec.constants["half_period"] = t;
  sec.constants["max_log_rel_err"] = m.max_log_rel_err;
  sec.constants["max_off_pattern"] = m.max_off_pattern;
  sec.constants["columns_checked"] = m.columns_checked;
  sec.constants["beta"] = cert.beta;
  sec.constants["beta_analytic"] = cert.beta_analytic;
  sec.constants["r2"] = cert.r2;
  sec.verdict("shift_pattern", m.pattern_ok ? "match" : "mismatch", expected);
  sec.verdict("decay_certificate", cert.passed ? "passed" : "failed");
  out.write(sec, "floquet_shift.csv", shift.str());
  out.write(sec, "floquet_decay.csv", decay.str());
  return sec;
}

// ------------------------------------------------------------ dimension

PointCloud fixture_cloud(const json& c, const Spectrum& spec) {
  const std::string kind = c["geometry"]["cloud"];
  const auto n = c["geometry"]["grid_n"].get<std::size_t>();
  PointCloud cloud;
  if (kind == "grid") {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        cloud.add_planar(static_cast<double>(i) / static_cast<double>(n - 1), static_cast<double>(j) / static_cast<double>(n - 1));
  } else if (kind == "segment") {
    for (std::size_t i = 0; i < n * n; ++i) cloud.add_planar(static_cast<double>(i) / static_cast<double>(n * n - 1), 0.0);
  } else {
    const std::string path = c["geometry"]["file"];
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open cloud file '" + path + "'");
    try {
      cloud = read_cloud_csv(is, PointCloud::from_spectrum(spec));
    } catch (const CloudParseError& e) {
      throw std::runtime_error(path + ": " + e.what());
    }
  }
  return cloud;
}

std::vector<double> scales_or(const json& c, double hi, double lo, std::size_t n) {
  const auto& s = c["geometry"]["scales"];
  if (!s.empty()) return s.get<std::vector<double>>();
  return geometric_scales(hi, lo, n);
}

void scan_csv(std::ostringstream& csv, double s, const DimensionEstimate& d) {
  for (std::size_t i = 0; i < d.log_eps.size(); ++i)
    csv << fmt17(s) << ',' << fmt17(d.log_eps[i]) << ',' << d.counts[i] << ','
        << (i == 0 ? std::string() : fmt17(d.local_slopes[i - 1])) << "\n";
}

Section cmd_dimension(const json& c, const Output& out) {
  Section sec("dimension");
  const auto spec = make_spectrum(c);
  const std::string kind = c["geometry"]["cloud"];
  const auto& expect = c["expect"]["dimension"];
  if (kind == "bad_cube") {
    auto levels = c["geometry"]["levels"].get<std::vector<std::size_t>>();
    if (levels.empty()) throw std::invalid_argument("geometry.levels: need at least one level");
    std::sort(levels.begin(), levels.end());
    const auto shift = poincare_predicted(spec, half_period(c)).full;
    const double beta = fitted_beta(shift, levels.front(), levels.back()) * c["dynamics"]["beta_scale"].get<double>();
    std::ostringstream csv;
    csv << "n,k,log_eps,cover_half_eps,log2_doubling,best_scale,min_log_gap,cover_bound,doubling_bound\n";
    std::vector<double> le;
    std::vector<std::size_t> dv;
    bool all = true;
    for (std::size_t n : levels) {
      const auto cube = bad_cube_cloud(shift, n, n, beta);
      const auto r = cube_level_check(cube, cube.levels.front());
      csv << n << ',' << r.k << ',' << fmt17(cube.levels.front().log_eps) << ',' << r.cover_half_eps << ','
          << fmt17(r.log2_doubling) << ',' << fmt17(r.best_scale) << ',' << fmt17(r.min_log_pairwise_gap) << ','
          << r.cover_bound << ',' << r.doubling_bound << "\n";
      all = all && r.cover_bound && r.doubling_bound;
      le.push_back(cube.levels.front().log_eps + std::log(r.best_scale));
      dv.push_back(static_cast<std::size_t>(std::llround(std::exp2(r.log2_doubling))));
    }
    sec.constants["beta"] = beta;
    sec.verdict("cube_bounds", all ? "hold" : "fail");
    if (le.size() >= 2) {
      const auto e = log_doubling_from_values(le, dv);
      sec.constants["log_doubling_slope"] = e.slope;
      sec.verdict("log_doubling", to_string(e.verdict), expected_at(expect, 0));
    } else {
      sec.notes.push_back("log-doubling trend needs at least two levels");
    }
    out.write(sec, "dimension_cube.csv", csv.str());
    return sec;
  }
  if (kind == "cone") {
    const std::string law = c["geometry"]["laws"];
    const auto nm = c["geometry"]["n_max"].get<std::size_t>();
    const auto laws = law == "exp-sqrt" ? exp_sqrt_laws(nm) : log_critical_laws();
    const auto a = cone_attractor(laws, spec, nm, c["dynamics"]["beta_scale"]);
    const auto scan = dimension_vs_s_scan(a.cloud, c["geometry"]["s_list"].get<std::vector<double>>(), scales_or(c, 0.3, 0.07, 6));
    std::ostringstream csv;
    csv << "s,log_eps,count,local_slope\n";
    for (std::size_t i = 0; i < scan.s_list.size(); ++i) {
      scan_csv(csv, scan.s_list[i], scan.estimates[i]);
      sec.constants["slope_s" + fmt17(scan.s_list[i])] = scan.estimates[i].slope;
      sec.verdict("local_slope_trend_s" + fmt17(scan.s_list[i]), to_string(scan.local_slope_trend[i]), expected_at(expect, i));
    }
    std::ostringstream sm;
    sm << "s,k,n_max,verdict\n";
    for (auto [s, k] : {std::pair{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}}) {
      const auto r = smoothness_criterion(laws.log_b, laws.log_a, spec, s, k, spec.size(), laws.n_first);
      sm << fmt17(s) << ',' << fmt17(k) << ',' << spec.size() << ',' << to_string(r.verdict) << "\n";
      sec.verdict("smoothness_s" + fmt17(s) + "_k" + fmt17(k), to_string(r.verdict));
    }
    sec.constants["sum_a"] = a.sum_a;
    sec.constants["max_residual"] = a.max_residual;
    sec.constants["points"] = a.cloud.size();
    out.write(sec, "dimension_scan.csv", csv.str());
    out.write(sec, "dimension_smoothness.csv", sm.str());
    return sec;
  }
  const auto cloud = fixture_cloud(c, spec);
  const auto scales = scales_or(c, 0.3, 0.003, 6);
  const auto d = fractal_dimension_estimate(cloud, scales);
  std::ostringstream csv;
  csv << "s,log_eps,count,local_slope\n";
  scan_csv(csv, cloud.norm().s, d);
  sec.constants["dimension_slope"] = d.slope;
  sec.constants["dimension_r2"] = d.r2;
  sec.constants["points"] = cloud.size();
  out.write(sec, "dimension_scan.csv", csv.str());
  if (std::all_of(scales.begin(), scales.end(), [](double e) { return e < std::exp(-1.0); })) {
    const auto e = log_doubling_estimate(cloud, scales);
    std::ostringstream dcsv;
    dcsv << "log_eps,doubling,ratio\n";
    for (std::size_t i = 0; i < e.log_eps.size(); ++i)
      dcsv << fmt17(e.log_eps[i]) << ',' << e.doubling[i] << ',' << fmt17(e.ratios[i]) << "\n";
    sec.constants["log_doubling_slope"] = e.slope;
    sec.verdict("log_doubling", to_string(e.verdict), expected_at(expect, 0));
    out.write(sec, "dimension_doubling.csv", dcsv.str());
  } else {
    sec.notes.push_back("log-doubling skipped: scales must lie below 1/e");
  }
  return sec;
}

// ------------------------------------------------------------ simulate

Section cmd_simulate(const json& c, const Output& out) {
  Section sec("simulate");
  const auto spec = make_spectrum(c);
  const auto& d = c["dynamics"];
  PairExperimentOptions o;
  o.n_trunc = d["n_trunc"];
  o.periods = d["periods"];
  o.half_period = half_period(c);
  o.rotation = d["rotation"];
  o.zero_separation = d["zero_separation"];
  o.rtol = d["rtol"];
  o.atol = d["atol"];
  o.floquet = floquet_options(c);
  const auto r = trajectory_pair_experiment(spec, o);
  sec.constants["kappa_fit"] = r.kappa_fit;
  sec.constants["kappa_analytic"] = r.kappa_analytic;
  sec.constants["beta"] = r.beta;
  sec.constants["r2"] = r.r2;
  sec.constants["linear_r2"] = r.linear_r2;
  sec.verdict("pair_status", r.status, c["expect"]["simulate"]);

  std::ostringstream dist;
  dist << "t,log_distance\n";
  for (std::size_t i = 0; i < r.v.times.size(); ++i) dist << fmt17(r.v.times[i]) << ',' << fmt17(r.v.log_norm[i]) << "\n";
  out.write(sec, "simulate_distance.csv", dist.str());
  std::ostringstream traj;
  write_trajectory_csv(traj, r.v);
  out.write(sec, "simulate_trajectory.csv", traj.str());

  std::ostringstream mod;
  mod << "gamma,t,log_ratio\n";
  const auto gammas = d["gammas"].get<std::vector<double>>();
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    const auto m = log_lipschitz_modulus(r.u, r.v, spec, gammas[i]);
    for (std::size_t j = 0; j < m.times.size(); ++j)
      mod << fmt17(gammas[i]) << ',' << fmt17(m.times[j]) << ',' << fmt17(m.log_ratio[j]) << "\n";
    const std::string v = m.empty ? "empty" : to_string(m.verdict);
    sec.constants["modulus_log_sup_gamma" + fmt17(gammas[i])] = m.log_sup;
    sec.verdict("modulus_gamma" + fmt17(gammas[i]), v, expected_at(c["expect"]["modulus"], i));
  }
  out.write(sec, "simulate_modulus.csv", mod.str());
  return sec;
}

using Command = Section (*)(const json&, const Output&);

json section_json(const Section& s, double seconds) {
  return {{"command", s.command}, {"verdicts", s.verdicts}, {"constants", s.constants}, {"files", s.files},
          {"notes", s.notes},     {"wall_clock_seconds", seconds}};
}

void print_section(const Section& s) {
  for (const auto& v : s.verdicts) {
    std::cout << s.command << "  " << v["name"].get<std::string>() << " = " << v["value"].get<std::string>();
    if (v.contains("expected"))
      std::cout << "  (expected " << v["expected"].get<std::string>() << ": " << (v["ok"].get<bool>() ? "ok" : "MISMATCH")
                << ")";
    std::cout << "\n";
  }
  for (const auto& n : s.notes) std::cout << s.command << "  note: " << n.get<std::string>() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral gap, Floquet shift and attractor geometry experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir, scales, format;
  unsigned threads = 1;
  auto add_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON scenario file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--threads", threads, "worker threads for report")->check(CLI::Range(1u, 256u));
    sub->add_option("--scales", scales, "geometric scales a:b:n (overrides geometry.scales)");
    sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  };
  const std::vector<std::pair<std::string, Command>> commands{
      {"gap-check", cmd_gap_check}, {"floquet", cmd_floquet}, {"dimension", cmd_dimension}, {"simulate", cmd_simulate}};
  for (const auto& [name, fn] : commands) add_flags(app.add_subcommand(name, "run the " + name + " experiment"));
  add_flags(app.add_subcommand("report", "run every experiment and assemble one report"));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  json resolved;
  try {
    json raw = json::object();
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      try {
        raw = json::parse(is);
      } catch (const json::parse_error& e) {
        throw cli::ConfigError({config_path + ": " + e.what()});
      }
    }
    resolved = cli::resolve_config(raw);
    if (!out_dir.empty()) resolved["output"]["dir"] = out_dir;
    if (!scales.empty()) resolved["geometry"]["scales"] = cli::parse_scales(scales);
    if (!format.empty()) resolved["output"]["formats"] = json::array({format});
  } catch (const cli::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  const std::string hash = cli::config_hash(resolved);
  Output out;
  out.dir = resolved["output"]["dir"].get<std::string>();
  bool want_json = false;
  out.csv = false;
  for (const auto& f : resolved["output"]["formats"]) {
    if (f == "csv") out.csv = true;
    if (f == "json") want_json = true;
  }
  std::cout << "config hash " << hash << "\n";

  std::vector<std::pair<std::string, Command>> run;
  for (const auto& p : commands)
    if (cmd == "report" || p.first == cmd) run.push_back(p);

  const auto t_start = std::chrono::steady_clock::now();
  std::vector<Section> sections;
  std::vector<double> seconds;
  try {
    auto timed = [&](Command fn) {
      const auto t0 = std::chrono::steady_clock::now();
      Section s = fn(resolved, out);
      return std::pair{s, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    };
    for (std::size_t i = 0; i < run.size(); i += threads) {
      std::vector<std::future<std::pair<Section, double>>> batch;
      for (std::size_t j = i; j < std::min(run.size(), i + threads); ++j)
        batch.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred, timed, run[j].second));
      for (auto& f : batch) {
        auto [s, sec] = f.get();
        sections.push_back(std::move(s));
        seconds.push_back(sec);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  bool mismatch = false;
  json report{{"scenario_hash", hash}, {"command", cmd}, {"experiments", json::array()}};
  json manifest = json::array();
  for (std::size_t i = 0; i < sections.size(); ++i) {
    print_section(sections[i]);
    mismatch = mismatch || sections[i].mismatch;
    report["experiments"].push_back(section_json(sections[i], seconds[i]));
    for (const auto& f : sections[i].files) manifest.push_back(f);
  }
  report["manifest"] = manifest;
  report["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  try {
    fs::create_directories(out.dir);
    std::ofstream(out.dir / "resolved_config.json") << resolved.dump(2) << "\n";
    if (want_json) std::ofstream(out.dir / (cmd + "_report.json")) << report.dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return mismatch ? 2 : 0;
}
