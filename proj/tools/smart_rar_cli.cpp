#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "smart_rar/errors.hpp"
#include "smart_rar/harness.hpp"
#include "smart_rar/inference.hpp"

namespace fs = std::filesystem;
using namespace smart_rar;

namespace {

void apply_thread_env(SimConfig& config) {
  if (const char* env = std::getenv("SMART_RAR_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) config.threads = t;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

int run_simulate(const std::string& config_path, int reps, long long seed, int threads,
                 const std::string& out_dir, bool binary_sidecar) {
  SimConfig config = load_config(config_path);
  apply_thread_env(config);
  if (reps > 0) config.n_reps = reps;
  if (seed >= 0) config.master_seed = static_cast<std::uint64_t>(seed);
  if (threads > 0) config.threads = threads;
  if (!out_dir.empty()) config.output_dir = out_dir;

  fs::create_directories(config.output_dir);
  const ReplicationTable table = run_monte_carlo(config);
  const MetricsReport report = aggregate(table, table.oracle);

  const fs::path dir(config.output_dir);
  write_report(report, ReportFormat::csv, (dir / "metrics.csv").string());
  write_report(report, ReportFormat::json, (dir / "metrics.json").string());
  write_replications_csv(table, (dir / "replications.csv").string());
  if (binary_sidecar) write_replications_binary(table, (dir / "replications.bin").string());
  write_text(dir / "oracle.csv", oracle_report_csv(table.oracle, config.scenario, config.design));

  int failures = 0;
  for (const auto& row : table.rows) failures += row.failed ? 1 : 0;
  std::cout << "policies: " << table.policy_names.size() << ", replications per policy: "
            << config.n_reps << ", failures: " << failures << "\n";
  std::cout << "reports written to " << config.output_dir << "\n";
  return 0;
}

int run_oracle(const std::string& config_path, long long n_mc, long long seed, int threads) {
  SimConfig config = load_config(config_path);
  apply_thread_env(config);
  if (n_mc > 0) config.oracle_n_mc = n_mc;
  if (seed >= 0) config.master_seed = static_cast<std::uint64_t>(seed);
  if (threads > 0) config.threads = threads;
  const Rng root(config.master_seed);
  const OracleResult oracle = oracle_true_values(config.scenario, config.design,
                                                 config.oracle_n_mc, root.derive(900),
                                                 config.resolved_threads());
  std::cout << oracle_report_csv(oracle, config.scenario, config.design);
  return 0;
}

int run_diagnose(const std::string& config_path, const std::string& policy_name,
                 const std::vector<int>& checkpoints, int n_inner, long long seed,
                 const std::string& out_dir) {
  SimConfig config = load_config(config_path);
  apply_thread_env(config);
  if (seed >= 0) config.master_seed = static_cast<std::uint64_t>(seed);

  const RandomizationPolicy* policy = nullptr;
  for (const auto& p : config.policies)
    if (p.name == policy_name) policy = &p;
  if (!policy) throw ConfigError("no policy named '" + policy_name + "' in the config");

  const fs::path dir(out_dir.empty() ? config.output_dir : out_dir);
  fs::create_directories(dir);

  const Rng root(config.master_seed);
  const TrialRecord trial = run_trial(config.design, config.scenario, *policy, root.derive(7));
  const OracleResult oracle = oracle_true_values(config.scenario, config.design,
                                                 config.oracle_n_mc, root.derive(900),
                                                 config.resolved_threads());

  // Subject-level interchange dump.
  {
    std::ofstream out(dir / "subjects.csv");
    out << SubjectRecord::csv_header() << "\n";
    for (const auto& rec : trial.final_data.records) out << rec.to_csv_row() << "\n";
  }
  // Published probability history: week, unit, probability.
  {
    std::ofstream out(dir / "prob_history.csv");
    out << "week,unit,probability\n";
    for (const auto& pub : trial.prob_history) {
      for (int j = 0; j < pub.regime_probs.size(); ++j)
        out << pub.week << "," << config.design.regimes[static_cast<size_t>(j)].label << ","
            << render_fixed(pub.regime_probs[j]) << "\n";
      for (int k = 0; k < pub.stage1_probs.size(); ++k)
        out << pub.week << ",a1=" << config.design.stage1_options[static_cast<size_t>(k)] << ","
            << render_fixed(pub.stage1_probs[k]) << "\n";
      for (const auto& [key, probs] : pub.stage2_probs) {
        const auto& feasible = config.design.feasible_set(key.first, key.second);
        for (int k = 0; k < probs.size(); ++k)
          out << pub.week << ",a1=" << key.first << ";r=" << key.second
              << ";a2=" << feasible[static_cast<size_t>(k)] << "," << render_fixed(probs[k])
              << "\n";
      }
    }
  }
  // Per-subject estimating-function contributions at the final estimates.
  {
    std::ofstream out(dir / "contributions.csv");
    out << "id,regime,M_value,pi1,pi2,W\n";
    const AccruedDataset& data = trial.final_data;
    for (int j = 0; j < config.design.n_regimes(); ++j) {
      const VectorXd w = weights_for_dataset(data, j, EstimatorKind::wipw, trial.weight_state,
                                             trial.mode, config.design);
      const ValueEstimate est = ipw_value(data, j, &w, trial.mode, config.design);
      int pos = 0;
      for (const auto& rec : data.records) {
        if (rec.delta != 1) continue;
        const auto cons =
            consistency_indicators(rec, config.design.regimes[static_cast<size_t>(j)]);
        PropensityPair pi;
        if (cons.c)
          pi = subject_propensities(rec, config.design.regimes[static_cast<size_t>(j)], j,
                                    trial.mode, config.design);
        out << rec.id << "," << config.design.regimes[static_cast<size_t>(j)].label << ","
            << render_fixed(est.contributions[pos]) << "," << render_fixed(pi.pi1) << ","
            << render_fixed(pi.pi2) << "," << render_fixed(w[static_cast<int>(&rec - data.records.data())])
            << "\n";
        ++pos;
      }
    }
  }
  // Weight trajectories: week, regime, xi_hat, weight.
  {
    std::ofstream out(dir / "weights.csv");
    out << "week,regime,estimator,xi_hat,weight\n";
    const WeightState& ws = trial.weight_state;
    for (const auto& [week, infos] : ws.weeks) {
      for (int j = 0; j < config.design.n_regimes(); ++j) {
        const WeekWeightInfo& info = infos[static_cast<size_t>(j)];
        if (info.moments.n_resp == 0 || info.moments.n_nonresp == 0) continue;
        const double xi_w = xi_wipw(info.moments.mu0, info.moments.mu1, info.props.pi1,
                                    info.props.pi2_1, info.props.pi2_0);
        const double xi_a = xi_waipw(info.nus.nu, info.nus.nu1, info.nus.nu2_0, info.nus.nu2_1,
                                     info.props.pi1, info.props.pi2_0, info.props.pi2_1);
        out << week << "," << config.design.regimes[static_cast<size_t>(j)].label << ",WIPW,"
            << render_fixed(xi_w) << "," << render_fixed(wipw_weight(ws.xi_burnin_wipw[j], xi_w))
            << "\n";
        out << week << "," << config.design.regimes[static_cast<size_t>(j)].label << ",WAIPW,"
            << render_fixed(xi_a) << "," << render_fixed(wipw_weight(ws.xi_burnin_waipw[j], xi_a))
            << "\n";
      }
    }
  }
  // Final-estimate table.
  write_text(dir / "inference.csv",
             inference_result_csv(post_trial_inference(trial, config.design, oracle.theta),
                                  config.design));
  // Conditional-moment checks at the requested checkpoints.
  {
    const int n_hist = checkpoints.empty() ? 5 : static_cast<int>(checkpoints.size());
    MartingaleReport rep = martingale_diagnostics(config.design, config.scenario, *policy, n_hist,
                                                  n_inner, root.derive(11), config.oracle_n_mc,
                                                  config.resolved_threads());
    std::ofstream out(dir / "martingale.csv");
    out << "week,regime,form,weighted,weight,mean,mean_se,second_moment,second_moment_se\n";
    for (const auto& cp : rep.checkpoints) {
      if (!checkpoints.empty() &&
          std::find(checkpoints.begin(), checkpoints.end(), cp.week) == checkpoints.end())
        continue;
      for (int j = 0; j < config.design.n_regimes(); ++j) {
        const auto& label = config.design.regimes[static_cast<size_t>(j)].label;
        for (int wflag = 0; wflag < 2; ++wflag) {
          const MartingaleCell& ic = cp.ipw_form[static_cast<size_t>(j)][static_cast<size_t>(wflag)];
          out << cp.week << "," << label << ",ipw," << (1 - wflag) << ","
              << render_fixed(wflag ? 1.0 : cp.weight_ipw[static_cast<size_t>(j)]) << ","
              << render_fixed(ic.mean) << "," << render_fixed(ic.mean_se) << ","
              << render_fixed(ic.second_moment) << "," << render_fixed(ic.second_moment_se)
              << "\n";
          const auto& ac = cp.aipw_form[static_cast<size_t>(j)][static_cast<size_t>(wflag)];
          out << cp.week << "," << label << ",aipw," << (1 - wflag) << ","
              << render_fixed(wflag ? 1.0 : cp.weight_aipw[static_cast<size_t>(j)]) << ","
              << render_fixed(ac.mean) << "," << render_fixed(ac.mean_se) << ","
              << render_fixed(ac.second_moment) << "," << render_fixed(ac.second_moment_se)
              << "\n";
        }
      }
    }
  }
  std::cout << "diagnostics written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Response-adaptive randomization simulator for two-stage sequential trials"};
  app.require_subcommand(1);

  std::string config_path, out_dir, policy_name;
  int reps = 0, threads = 0, n_inner = 100000;
  long long seed = -1, n_mc = 0;
  bool binary_sidecar = false;
  std::vector<int> checkpoints;

  auto* simulate = app.add_subcommand("simulate", "Run the Monte Carlo study");
  simulate->add_option("--config", config_path, "Config file (JSON)")->required();
  simulate->add_option("--reps", reps, "Override replication count");
  simulate->add_option("--seed", seed, "Override master seed");
  simulate->add_option("--threads", threads, "Worker threads");
  simulate->add_option("--out", out_dir, "Output directory");
  simulate->add_flag("--binary-sidecar", binary_sidecar, "Also write replications.bin");

  auto* oracle = app.add_subcommand("oracle", "Print the simulated ground-truth regime values");
  oracle->add_option("--config", config_path, "Config file (JSON)")->required();
  oracle->add_option("--n-mc", n_mc, "Monte Carlo draws");
  oracle->add_option("--seed", seed, "Override master seed");
  oracle->add_option("--threads", threads, "Worker threads");

  auto* diagnose = app.add_subcommand("diagnose", "Dump one trial's internals and moment checks");
  diagnose->add_option("--config", config_path, "Config file (JSON)")->required();
  diagnose->add_option("--policy", policy_name, "Policy name from the config")->required();
  diagnose->add_option("--checkpoints", checkpoints, "Checkpoint weeks");
  diagnose->add_option("--inner", n_inner, "Inner redraws per checkpoint");
  diagnose->add_option("--seed", seed, "Override master seed");
  diagnose->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed())
      return run_simulate(config_path, reps, seed, threads, out_dir, binary_sidecar);
    if (oracle->parsed()) return run_oracle(config_path, n_mc, seed, threads);
    if (diagnose->parsed())
      return run_diagnose(config_path, policy_name, checkpoints, n_inner, seed, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const StudyAborted& e) {
    std::cerr << "study aborted: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
