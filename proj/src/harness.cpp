#include "smart_rar/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "smart_rar/errors.hpp"

namespace smart_rar {

namespace {

using nlohmann::json;

[[noreturn]] void unknown_key(const std::string& path, const std::string& key) {
  throw ConfigError("unknown key '" + key + "' at " + path);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) unknown_key(path, key);
  }
}

double get_num(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  return obj[key].get<double>();
}

int get_int(const json& obj, const char* key, int fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer())
    throw ConfigError(std::string("'") + key + "' must be an integer");
  return obj[key].get<int>();
}

VectorXd get_vec(const json& obj, const char* key, const VectorXd& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_array()) throw ConfigError(std::string("'") + key + "' must be an array");
  VectorXd v(static_cast<int>(obj[key].size()));
  int i = 0;
  for (const auto& e : obj[key]) v[i++] = e.get<double>();
  return v;
}

ScenarioParams parse_scenario(const json& j) {
  check_keys(j, "scenario",
             {"n_subjects", "enroll_window", "gamma1", "gamma2", "x1_mean", "x1_sd", "eps1_sd",
              "eps2_sd", "response_fraction", "stage_delay", "followup", "reference_values"});
  ScenarioParams p;
  p.n_subjects = get_int(j, "n_subjects", p.n_subjects);
  p.enroll_window = get_int(j, "enroll_window", p.enroll_window);
  const VectorXd g1 = get_vec(j, "gamma1", p.gamma1);
  if (g1.size() != 3) throw ConfigError("'gamma1' must have 3 entries");
  p.gamma1 = g1;
  const VectorXd g2 = get_vec(j, "gamma2", p.gamma2);
  if (g2.size() != 8) throw ConfigError("'gamma2' must have 8 entries");
  p.gamma2 = g2;
  p.x1_mean = get_num(j, "x1_mean", p.x1_mean);
  p.x1_sd = get_num(j, "x1_sd", p.x1_sd);
  p.eps1_sd = get_num(j, "eps1_sd", p.eps1_sd);
  p.eps2_sd = get_num(j, "eps2_sd", p.eps2_sd);
  p.response_fraction = get_num(j, "response_fraction", p.response_fraction);
  p.stage_delay = get_int(j, "stage_delay", p.stage_delay);
  p.followup = get_int(j, "followup", p.followup);
  p.reference_values = get_vec(j, "reference_values", p.reference_values);
  return p;
}

void parse_design(const json& j, TrialDesign& d) {
  check_keys(j, "design",
             {"burn_in_completers", "direction", "clip_lo", "clip_hi", "n_value_draws",
              "beta_draw_sizes", "update_period_weeks"});
  d.burn_in.per_regime_completers = get_int(j, "burn_in_completers", d.burn_in.per_regime_completers);
  if (j.contains("direction")) {
    const std::string dir = j["direction"].get<std::string>();
    if (dir == "minimize")
      d.direction = Direction::minimize;
    else if (dir == "maximize")
      d.direction = Direction::maximize;
    else
      throw ConfigError("'direction' must be 'minimize' or 'maximize'");
  }
  d.ts.clip_lo = get_num(j, "clip_lo", d.ts.clip_lo);
  d.ts.clip_hi = get_num(j, "clip_hi", d.ts.clip_hi);
  d.ts.n_value_draws = get_int(j, "n_value_draws", d.ts.n_value_draws);
  if (j.contains("beta_draw_sizes")) {
    d.ts.beta_draw_sizes.clear();
    for (const auto& e : j["beta_draw_sizes"]) d.ts.beta_draw_sizes.push_back(e.get<int>());
    if (d.ts.beta_draw_sizes.size() != 2)
      throw ConfigError("'beta_draw_sizes' must have 2 entries for a two-stage design");
  }
  d.timeline.update_period_weeks = get_int(j, "update_period_weeks", 1);
}

EstimatorKind parse_estimator(const std::string& name) {
  if (name == "ipw") return EstimatorKind::ipw;
  if (name == "wipw") return EstimatorKind::wipw;
  if (name == "aipw") return EstimatorKind::aipw;
  if (name == "waipw") return EstimatorKind::waipw;
  if (name == "iaipw") return EstimatorKind::iaipw;
  throw ConfigError("unknown estimator '" + name + "'");
}

RandomizationPolicy parse_policy(const json& j, size_t index) {
  const std::string path = "policies[" + std::to_string(index) + "]";
  check_keys(j, path, {"name", "type", "estimator", "damping", "belief_mode"});
  if (!j.contains("type")) throw ConfigError(path + " needs a 'type'");
  const std::string type = j["type"].get<std::string>();
  RandomizationPolicy p;
  if (type == "sr") {
    p = RandomizationPolicy::sr();
  } else if (type == "upfront") {
    const std::string est = j.contains("estimator") ? j["estimator"].get<std::string>() : "waipw";
    p = RandomizationPolicy::upfront(parse_estimator(est), get_num(j, "damping", 1.0));
  } else if (type == "sequential") {
    BeliefMode mode = BeliefMode::individual;
    if (j.contains("belief_mode")) {
      const std::string bm = j["belief_mode"].get<std::string>();
      if (bm == "individual")
        mode = BeliefMode::individual;
      else if (bm == "configuration")
        mode = BeliefMode::configuration;
      else
        throw ConfigError(path + ": unknown belief_mode '" + bm + "'");
    }
    p = RandomizationPolicy::sequential(get_num(j, "damping", 1.0), mode);
  } else {
    throw ConfigError(path + ": unknown type '" + type + "'");
  }
  if (j.contains("name")) p.name = j["name"].get<std::string>();
  return p;
}

}  // namespace

int SimConfig::resolved_threads() const {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

SimConfig config_from_json(const json& j) {
  check_keys(j, "<root>",
             {"scenario", "design", "policies", "n_reps", "master_seed", "threads", "output_dir",
              "oracle_n_mc"});
  SimConfig c;
  c.design = TrialDesign::benchmark_two_stage();
  if (j.contains("scenario")) c.scenario = parse_scenario(j["scenario"]);
  if (j.contains("design")) parse_design(j["design"], c.design);
  // The design timeline mirrors the scenario timing; one source of truth.
  c.design.timeline.enroll_weeks = c.scenario.enroll_window;
  c.design.timeline.stage_delay_weeks = c.scenario.stage_delay;
  c.design.timeline.followup_weeks = c.scenario.followup;
  if (!j.contains("policies") || !j["policies"].is_array() || j["policies"].empty())
    throw ConfigError("config needs a non-empty 'policies' array");
  std::set<std::string> names;
  for (size_t i = 0; i < j["policies"].size(); ++i) {
    RandomizationPolicy p = parse_policy(j["policies"][i], i);
    if (!names.insert(p.name).second) throw ConfigError("duplicate policy name '" + p.name + "'");
    c.policies.push_back(std::move(p));
  }
  c.n_reps = get_int(j, "n_reps", c.n_reps);
  if (c.n_reps < 1) throw ConfigError("'n_reps' must be >= 1");
  if (j.contains("master_seed")) c.master_seed = j["master_seed"].get<std::uint64_t>();
  c.threads = get_int(j, "threads", c.threads);
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  c.oracle_n_mc = j.contains("oracle_n_mc") ? j["oracle_n_mc"].get<long long>() : c.oracle_n_mc;
  if (c.oracle_n_mc < 1) throw ConfigError("'oracle_n_mc' must be >= 1");
  c.scenario.validate();
  c.design.validate();
  return c;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into line/column.
    size_t line = 1, col = 1;
    for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("parse error in " + path + " at line " + std::to_string(line) +
                      ", column " + std::to_string(col) + ": " + e.what());
  }
  return config_from_json(j);
}

ReplicationTable run_monte_carlo(const SimConfig& config) {
  ReplicationTable table;
  table.n_regimes = config.design.n_regimes();
  table.n_reps = config.n_reps;
  for (const auto& p : config.policies) table.policy_names.push_back(p.name);

  const Rng root(config.master_seed);
  table.oracle = oracle_true_values(config.scenario, config.design, config.oracle_n_mc,
                                    root.derive(900), config.resolved_threads());
  table.oracle_optimal = identify_optimal(table.oracle.theta, config.design.direction);
  const int opt = table.oracle_optimal;
  const int opt_a1 = config.design.regimes[static_cast<size_t>(opt)].a1;
  int opt_a1_pos = 0;
  for (size_t k = 0; k < config.design.stage1_options.size(); ++k)
    if (config.design.stage1_options[k] == opt_a1) opt_a1_pos = static_cast<int>(k);

  const int n_tasks = static_cast<int>(config.policies.size()) * config.n_reps;
  table.rows.resize(static_cast<size_t>(n_tasks));

  auto run_task = [&](int task) {
    const int policy_index = task / config.n_reps;
    const int rep = task % config.n_reps;
    ReplicationRow& row = table.rows[static_cast<size_t>(task)];
    row.policy_index = policy_index;
    row.rep = rep;
    try {
      const Rng rep_rng = root.derive(1000 + static_cast<std::uint64_t>(policy_index),
                                      static_cast<std::uint64_t>(rep));
      const TrialRecord trial = run_trial(config.design, config.scenario,
                                          config.policies[static_cast<size_t>(policy_index)],
                                          rep_rng);
      row.mean_y = trial.mean_y;
      row.frac_a1_opt = trial.frac_stage1[opt_a1_pos];
      row.frac_regime_opt = trial.frac_consistent[opt];
      row.t_star = trial.t_star;
      row.burn_in_complete = trial.burn_in_complete;
      row.fallback_count = trial.fallback_count;
      row.inference = post_trial_inference(trial, config.design, table.oracle.theta, 0.95);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  };

  const int n_threads = std::min(config.resolved_threads(), n_tasks);
  if (n_threads <= 1) {
    for (int task = 0; task < n_tasks; ++task) run_task(task);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        for (int task = next.fetch_add(1); task < n_tasks; task = next.fetch_add(1))
          run_task(task);
      });
    for (auto& th : pool) th.join();
  }

  int failures = 0;
  for (const auto& row : table.rows) failures += row.failed ? 1 : 0;
  if (failures * 100 > n_tasks)
    throw StudyAborted(std::to_string(failures) + " of " + std::to_string(n_tasks) +
                       " replications failed (>1%); first error: " +
                       [&]() -> std::string {
                         for (const auto& row : table.rows)
                           if (row.failed) return row.error;
                         return "";
                       }());
  return table;
}

namespace {

struct Welford {
  double sum = 0.0, sum_sq = 0.0;
  long n = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return sum / n; }
  double se() const {
    const double m = mean();
    const double var = std::max(0.0, (sum_sq / n - m * m) * n / std::max<long>(1, n - 1));
    return std::sqrt(var / n);
  }
};

}  // namespace

MetricsReport aggregate(const ReplicationTable& table, const OracleResult& oracle) {
  if (table.rows.empty()) return {};
  MetricsReport report;
  const int opt = table.oracle_optimal;
  const double truth_opt = oracle.theta[opt];
  const std::vector<EstimatorKind> kinds = {EstimatorKind::ipw, EstimatorKind::wipw,
                                            EstimatorKind::aipw, EstimatorKind::waipw};

  for (size_t pi = 0; pi < table.policy_names.size(); ++pi) {
    const std::string& policy = table.policy_names[pi];
    std::vector<const ReplicationRow*> rows;
    for (const auto& row : table.rows)
      if (row.policy_index == static_cast<int>(pi) && !row.failed) rows.push_back(&row);
    if (rows.empty()) continue;

    auto push = [&](const std::string& metric, const std::string& est, double value, double se) {
      report.rows.push_back({policy, metric, est, value, se});
    };

    Welford mean_y, a1_opt, regime_opt, tstar, fallback;
    for (const auto* r : rows) {
      mean_y.add(r->mean_y);
      a1_opt.add(r->frac_a1_opt);
      regime_opt.add(r->frac_regime_opt);
      tstar.add(r->t_star);
      fallback.add(r->fallback_count);
    }
    push("mean_y", "", mean_y.mean(), mean_y.se());
    push("prop_a1_opt", "", a1_opt.mean(), a1_opt.se());
    push("prop_regime_opt", "", regime_opt.mean(), regime_opt.se());

    for (size_t e = 0; e < kinds.size(); ++e) {
      const std::string est = estimator_name(kinds[e]);
      Welford correct, sqerr, cover_ci, cover_lb, cover_ub, zw;
      double z_m2 = 0.0, z_m3 = 0.0;
      std::vector<double> zs;
      zs.reserve(rows.size());
      for (const auto* r : rows) {
        const int ei = static_cast<int>(e);
        correct.add(r->inference.identified_optimal[e] == opt ? 1.0 : 0.0);
        const double err = r->inference.theta(ei, opt) - truth_opt;
        sqerr.add(err * err * 100.0);
        cover_ci.add(r->inference.ci_lo(ei, opt) <= truth_opt &&
                             truth_opt <= r->inference.ci_hi(ei, opt)
                         ? 1.0
                         : 0.0);
        cover_lb.add(r->inference.lb(ei, opt) <= truth_opt ? 1.0 : 0.0);
        cover_ub.add(r->inference.ub(ei, opt) >= truth_opt ? 1.0 : 0.0);
        zs.push_back(r->inference.z(ei, opt));
        zw.add(zs.back());
      }
      const double z_mean = zw.mean();
      for (double z : zs) {
        z_m2 += (z - z_mean) * (z - z_mean);
        z_m3 += (z - z_mean) * (z - z_mean) * (z - z_mean);
      }
      z_m2 /= zs.size();
      z_m3 /= zs.size();
      const double z_sd = std::sqrt(z_m2);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      push("regime_correct", est, correct.mean(), correct.se());
      push("mse_x100_opt", est, sqerr.mean(), sqerr.se());
      push("cover_ci95_opt", est, cover_ci.mean(), cover_ci.se());
      push("cover_lb95_opt", est, cover_lb.mean(), cover_lb.se());
      push("cover_ub95_opt", est, cover_ub.mean(), cover_ub.se());
      push("z_mean_opt", est, z_mean, zw.se());
      push("z_sd_opt", est, z_sd, nan);
      push("z_skew_opt", est, z_m3 / (z_m2 * z_sd), nan);
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    push("fallback_mean", "", fallback.mean(), fallback.se());
    push("t_star_mean", "", tstar.mean(), tstar.se());
    double t_min = rows.front()->t_star, t_max = rows.front()->t_star;
    int incomplete = 0;
    for (const auto* r : rows) {
      t_min = std::min<double>(t_min, r->t_star);
      t_max = std::max<double>(t_max, r->t_star);
      incomplete += r->burn_in_complete ? 0 : 1;
    }
    push("t_star_min", "", t_min, nan);
    push("t_star_max", "", t_max, nan);
    push("burn_in_incomplete", "", static_cast<double>(incomplete), nan);
  }
  return report;
}

std::string render_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_report(const MetricsReport& report, ReportFormat format, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write report to " + path);
  if (format == ReportFormat::csv) {
    out << "policy,metric,estimator,value,mc_se\n";
    for (const auto& row : report.rows) {
      out << row.policy << "," << row.metric << "," << row.estimator << ","
          << render_fixed(row.value) << ","
          << (std::isnan(row.mc_se) ? std::string() : render_fixed(row.mc_se)) << "\n";
    }
  } else {
    json j = json::array();
    for (const auto& row : report.rows) {
      json r;
      r["policy"] = row.policy;
      r["metric"] = row.metric;
      r["estimator"] = row.estimator;
      r["value"] = row.value;
      if (!std::isnan(row.mc_se)) r["mc_se"] = row.mc_se;
      j.push_back(std::move(r));
    }
    out << j.dump(2) << "\n";
  }
  if (!out) throw Error("failed while writing " + path);
}

void write_replications_csv(const ReplicationTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write replication table to " + path);
  out << "policy,rep,failed,mean_y,frac_a1_opt,frac_regime_opt,t_star,fallbacks";
  const std::vector<const char*> kinds = {"IPW", "WIPW", "AIPW", "WAIPW"};
  for (size_t e = 0; e < kinds.size(); ++e) {
    out << "," << kinds[e] << "_theta_opt," << kinds[e] << "_se_opt," << kinds[e] << "_z_opt,"
        << kinds[e] << "_identified";
  }
  out << "\n";
  char buf[64];
  auto full = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  const int opt = table.oracle_optimal;
  for (const auto& row : table.rows) {
    out << table.policy_names[static_cast<size_t>(row.policy_index)] << "," << row.rep << ","
        << (row.failed ? 1 : 0);
    if (row.failed) {
      out << ",,,,,";
      for (size_t e = 0; e < kinds.size(); ++e) out << ",,,,";
      out << "\n";
      continue;
    }
    out << "," << full(row.mean_y) << "," << full(row.frac_a1_opt) << ","
        << full(row.frac_regime_opt) << "," << row.t_star << "," << row.fallback_count;
    for (size_t e = 0; e < kinds.size(); ++e) {
      const int ei = static_cast<int>(e);
      out << "," << full(row.inference.theta(ei, opt)) << "," << full(row.inference.se(ei, opt))
          << "," << full(row.inference.z(ei, opt)) << "," << row.inference.identified_optimal[e];
    }
    out << "\n";
  }
}

void write_replications_binary(const ReplicationTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write binary sidecar to " + path);
  const std::uint32_t magic = 0x53524152;  // "SRAR"
  const std::uint32_t n_rows = static_cast<std::uint32_t>(table.rows.size());
  const std::uint32_t n_est = 4;
  const std::uint32_t m = static_cast<std::uint32_t>(table.n_regimes);
  out.write(reinterpret_cast<const char*>(&magic), 4);
  out.write(reinterpret_cast<const char*>(&n_rows), 4);
  out.write(reinterpret_cast<const char*>(&n_est), 4);
  out.write(reinterpret_cast<const char*>(&m), 4);
  auto put = [&out](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  for (const auto& row : table.rows) {
    put(row.failed ? 1.0 : 0.0);
    put(row.mean_y);
    put(row.frac_a1_opt);
    put(row.frac_regime_opt);
    put(row.t_star);
    if (row.failed) {
      for (std::uint32_t i = 0; i < n_est * m * 3; ++i) put(0.0);
      continue;
    }
    for (std::uint32_t e = 0; e < n_est; ++e)
      for (std::uint32_t j = 0; j < m; ++j) {
        put(row.inference.theta(static_cast<int>(e), static_cast<int>(j)));
        put(row.inference.se(static_cast<int>(e), static_cast<int>(j)));
        put(row.inference.z(static_cast<int>(e), static_cast<int>(j)));
      }
  }
}

std::string oracle_report_csv(const OracleResult& oracle, const ScenarioParams& scenario,
                              const TrialDesign& design) {
  std::string out = "regime_label,theta_hat,mc_se,n_mc,reference_value,diff_vs_reference\n";
  const bool have_ref = scenario.reference_values.size() == design.n_regimes();
  for (int j = 0; j < design.n_regimes(); ++j) {
    out += design.regimes[static_cast<size_t>(j)].label + "," + render_fixed(oracle.theta[j]) +
           "," + render_fixed(oracle.mc_se[j]) + "," + std::to_string(oracle.n_mc);
    if (have_ref) {
      out += "," + render_fixed(scenario.reference_values[j]) + "," +
             render_fixed(oracle.theta[j] - scenario.reference_values[j]);
    } else {
      out += ",,";
    }
    out += "\n";
  }
  if (have_ref) {
    out += "pair,oracle_contrast,reference_contrast,abs_diff,,\n";
    for (int a = 0; a < design.n_regimes(); ++a) {
      for (int b = a + 1; b < design.n_regimes(); ++b) {
        const double oc = oracle.theta[a] - oracle.theta[b];
        const double rc = scenario.reference_values[a] - scenario.reference_values[b];
        out += design.regimes[static_cast<size_t>(a)].label + "-" +
               design.regimes[static_cast<size_t>(b)].label + "," + render_fixed(oc) + "," +
               render_fixed(rc) + "," + render_fixed(std::abs(oc - rc)) + ",,\n";
      }
    }
  }
  return out;
}

}  // namespace smart_rar
