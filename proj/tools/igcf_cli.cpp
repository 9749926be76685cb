// igcf_cli: pretrain, evaluate, regret and inspect-snapshot entry points.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "igcf/config.hpp"
#include "igcf/errors.hpp"
#include "igcf/experiment.hpp"
#include "igcf/ingest.hpp"
#include "igcf/regret_lab.hpp"
#include "igcf/report.hpp"
#include "igcf/snapshot.hpp"

namespace fs = std::filesystem;
using namespace igcf;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> set;
  std::string policies;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> slate;
  std::optional<double> subsample;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "INI config file");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--set", f.set, "override as section.key=value (repeatable)");
}

void add_replay(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--policies", f.policies, "comma-separated policy names");
  cmd->add_option("--T", f.rounds, "rounds per episode");
  cmd->add_option("--k", f.slate, "slate size");
  cmd->add_option("--subsample", f.subsample, "fraction of users kept");
}

boost::property_tree::ptree resolve_tree(const CommonFlags& f) {
  auto tree = load_config_tree(f.config);
  std::vector<std::string> pairs = f.set;
  if (f.seed) pairs.push_back("run.seed=" + std::to_string(*f.seed));
  if (!f.out.empty()) pairs.push_back("run.out=" + f.out);
  if (!f.policies.empty()) pairs.push_back("policies.list=" + f.policies);
  if (f.rounds) pairs.push_back("protocol.rounds=" + std::to_string(*f.rounds));
  if (f.slate) pairs.push_back("protocol.slate=" + std::to_string(*f.slate));
  if (f.subsample) pairs.push_back("data.subsample=" + format_double(*f.subsample));
  apply_overrides(tree, pairs);
  return tree;
}

std::vector<std::string> data_inputs(const ExperimentConfig& c) {
  std::vector<std::string> in;
  if (!c.data_path.empty()) in.push_back(c.data_path);
  if (!c.genres_path.empty()) in.push_back(c.genres_path);
  return in;
}

class Run {
 public:
  Run(std::string command, const boost::property_tree::ptree& tree, const ExperimentConfig& c)
      : dir_(c.out) {
    manifest_.command = std::move(command);
    manifest_.seed = c.seed;
    manifest_.config = tree;
    manifest_.inputs = data_inputs(c);
    fs::create_directories(dir_);
  }

  std::string path(const std::string& name) {
    manifest_.outputs.push_back(name);
    return (dir_ / name).string();
  }
  void input(const std::string& p) { manifest_.inputs.push_back(p); }

  void finish() { write("complete", ""); }
  void fail(const std::string& error) { write("partial", error); }

 private:
  void write(const std::string& status, const std::string& error) {
    manifest_.status = status;
    manifest_.error = error;
    write_text((dir_ / "manifest.json").string(), manifest_.to_json().dump(2) + "\n");
  }

  fs::path dir_;
  Manifest manifest_;
};

int exit_code(ExitCode c) { return static_cast<int>(c); }

template <class F>
int guarded(Run* run, F&& body) {
  auto fail = [&](const std::exception& e, ExitCode code) {
    std::cerr << "igcf_cli: " << e.what() << '\n';
    if (run) {
      try {
        run->fail(e.what());
      } catch (const std::exception&) {
      }
    }
    return exit_code(code);
  };
  try {
    body();
    if (run) run->finish();
    return 0;
  } catch (const ConfigError& e) {
    return fail(e, ExitCode::kConfig);
  } catch (const DataError& e) {
    return fail(e, ExitCode::kData);
  } catch (const NumericalError& e) {
    return fail(e, ExitCode::kNumerical);
  }
}

void print_pretrain(const PretrainedModel& m) {
  std::cout << "pretrained " << m.num_users << " users x " << m.num_items << " items, d=" << m.dim() << ", "
            << m.epoch_losses.size() << " epochs, final objective " << format_double(m.epoch_losses.back())
            << (m.converged ? " (converged)" : "") << '\n';
}

int cmd_pretrain(const CommonFlags& f) {
  const auto tree = resolve_tree(f);
  const auto c = parse_config(tree);
  Run run("pretrain", tree, c);
  return guarded(&run, [&] {
    const auto data = load_dataset(c);
    const auto split = make_split(data, c.protocol, c.seed);
    const auto adj = adjacency_from_observations(split.train, split.num_users, split.num_items);
    const auto model = pretrain(split.train, adj, c.model.propagation, c.model.pretrain);
    print_pretrain(model);
    const auto snap = make_snapshot(model);
    save_snapshot(run.path("snapshot.igcf"), snap);
    {
      std::ofstream csv(run.path("embeddings.csv"));
      write_snapshot_csv(csv, snap);
    }
    if (!data.user_ids.empty()) {
      std::ofstream ids(run.path("id_map.csv"));
      write_id_map(ids, data);
    }
    nlohmann::ordered_json info;
    info["provenance"] = model.provenance;
    info["epochs"] = model.epoch_losses.size();
    info["converged"] = model.converged;
    info["epoch_objective"] = model.epoch_losses;
    write_text(run.path("pretrain.json"), info.dump(2) + "\n");
  });
}

int cmd_evaluate(const CommonFlags& f, const std::string& snapshot, bool fit) {
  const auto tree = resolve_tree(f);
  const auto c = parse_config(tree);
  if (snapshot.empty() && !fit) {
    std::cerr << "igcf_cli: evaluate needs --snapshot <file> or --pretrain\n";
    return exit_code(ExitCode::kConfig);
  }
  if (!snapshot.empty() && fit) {
    std::cerr << "igcf_cli: --snapshot and --pretrain are mutually exclusive\n";
    return exit_code(ExitCode::kConfig);
  }
  if (c.protocol_name == "regret") {
    std::cerr << "igcf_cli: protocol 'regret' runs through the regret subcommand\n";
    return exit_code(ExitCode::kConfig);
  }
  Run run("evaluate", tree, c);
  return guarded(&run, [&] {
    const auto data = load_dataset(c);
    const auto split = make_split(data, c.protocol, c.seed);
    std::optional<PretrainedModel> preloaded;
    if (!snapshot.empty()) {
      run.input(snapshot);
      const auto adj = adjacency_from_observations(split.train, split.num_users, split.num_items);
      preloaded = model_from_snapshot(load_snapshot(snapshot), adj, c.model.propagation);
    }
    const auto fitted = fit_models(split, c.model, c.policies, preloaded);
    std::ofstream csv(run.path("interactions.csv"));
    write_episode_csv_header(csv);
    std::vector<PolicyResult> results;
    for (const auto& name : c.policies) {
      auto policy = make_policy(name, fitted, c.model);
      const auto logs = run_policy(split, *policy, c.protocol.rounds, c.protocol.slate, c.protocol.signal);
      write_episode_csv(csv, c.experiment, name, logs);
      results.push_back({name, checkpoints(logs, split, c.checkpoints, c.protocol.slate)});
      std::cout << name;
      for (const auto& cp : results.back().checkpoints) {
        std::cout << "  precision@" << cp.t << '=' << format_double(cp.precision);
      }
      std::cout << '\n';
    }
    csv.close();
    write_text(run.path("summary.json"), summary_json(c.experiment, c.seed, c.protocol.slate, results).dump(2) + "\n");
  });
}

int cmd_regret(const CommonFlags& f, std::optional<std::size_t> reps) {
  const auto tree = resolve_tree(f);
  auto c = parse_config(tree);
  if (f.rounds) c.regret_rounds = *f.rounds;
  if (reps) c.regret_reps = *reps;
  Run run("regret", tree, c);
  return guarded(&run, [&] {
    const auto env = sample_env(make_lab_config(c.lab, c.seed), c.seed + 1);
    PolicyConfig policy;
    policy.mode = c.regret_mode;
    policy.delta = c.regret_delta;
    policy.sigma_noise = c.lab.sigma_noise;
    policy.seed = c.seed;
    const auto d = static_cast<Eigen::Index>(c.lab.dim);

    BayesAgent correct(env.config.prior_mean, env.config.prior_cov, policy);
    const auto curve = empirical_regret(env, correct, c.regret_rounds, c.regret_reps, c.seed);
    {
      std::ofstream csv(run.path("regret.csv"));
      write_regret_csv(csv, curve);
    }
    Theorem2Params bound;
    bound.dim = c.lab.dim;
    bound.num_items = static_cast<double>(c.lab.num_items);
    bound.num_tasks = static_cast<double>(c.regret_tasks);
    bound.lambda_bar = c.lab.lambda_bar;
    bound.sigma_noise = c.lab.sigma_noise;
    bound.item_bound = c.lab.item_bound;
    bound.mean_bound = c.lab.mean_norm;
    bound.k1 = c.regret_k1;
    bound.delta = c.regret_delta;
    std::size_t worst_tau = 0;
    bool all_reached = true;
    for (const auto& t : curve.tau) {
      all_reached = all_reached && t.has_value();
      if (t) worst_tau = std::max(worst_tau, *t);
    }
    bound.tau = all_reached ? static_cast<double>(worst_tau) : std::numeric_limits<double>::infinity();

    nlohmann::json summary;
    summary["seed"] = c.seed;
    summary["acceptance_rate"] = env.acceptance_rate;
    summary["lambda_sigma_a"] = env.lambda_sigma_a();
    summary["correct_prior"] = regret_summary(curve, c.regret_checkpoints, bound);
    if (c.regret_tasks >= 2) {
      const auto meta = build_meta_prior(sample_tasks(env.config, c.regret_tasks, c.seed + 2), c.regret_gamma);
      BayesAgent with_meta(meta.mu_meta, meta.prior_covariance(), policy);
      BayesAgent wide(Eigen::VectorXd::Zero(d), c.regret_wide_variance * Eigen::MatrixXd::Identity(d, d), policy);
      summary["meta_prior"] = regret_summary(empirical_regret(env, with_meta, c.regret_rounds, c.regret_reps, c.seed),
                                             c.regret_checkpoints, bound);
      summary["wide_prior"] = regret_summary(empirical_regret(env, wide, c.regret_rounds, c.regret_reps, c.seed),
                                             c.regret_checkpoints, bound);
    }
    write_text(run.path("regret_summary.json"), summary.dump(2) + "\n");
    std::cout << "cumulative regret at T=" << c.regret_rounds << ": " << format_double(curve.cum.back()) << '\n';
  });
}

int cmd_inspect(const std::string& path, const std::string& csv) {
  return guarded(nullptr, [&] {
    const auto snap = load_snapshot(path);
    nlohmann::ordered_json j;
    j["path"] = path;
    j["version"] = kSnapshotVersion;
    j["num_users"] = snap.num_users;
    j["num_items"] = snap.num_items;
    j["dim"] = snap.dim;
    j["depth"] = snap.depth;
    j["scheme"] = to_string(snap.scheme);
    j["mu_abs_max"] = snap.params.mu.size() ? snap.params.mu.cwiseAbs().maxCoeff() : 0.0;
    j["scale_mean"] = snap.params.rho.size() ? snap.params.scale().mean() : 0.0;
    j["git_sha1"] = git_blob_sha1(read_bytes(path));
    std::cout << j.dump(2) << '\n';
    if (!csv.empty()) {
      std::ofstream out(csv);
      if (!out) throw DataError("cannot write '" + csv + "'");
      write_snapshot_csv(out, snap);
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-pretrained Bayesian bandit recommender: pretraining, replay evaluation, regret lab"};
  app.require_subcommand(1);

  CommonFlags pre_flags, eval_flags, regret_flags;
  auto* pre = app.add_subcommand("pretrain", "fit variational embeddings and write a snapshot");
  add_common(pre, pre_flags);
  add_replay(pre, pre_flags);

  auto* eval = app.add_subcommand("evaluate", "replay policies under the configured protocol");
  add_common(eval, eval_flags);
  add_replay(eval, eval_flags);
  std::string snapshot;
  bool fit = false;
  eval->add_option("--snapshot", snapshot, "pretrained snapshot to load")->check(CLI::ExistingFile);
  eval->add_flag("--pretrain", fit, "pretrain from the training split instead of loading a snapshot");

  auto* regret = app.add_subcommand("regret", "empirical regret in the synthetic Gaussian bandit");
  add_common(regret, regret_flags);
  regret->add_option("--T", regret_flags.rounds, "rounds per replication");
  std::optional<std::size_t> reps;
  regret->add_option("--reps", reps, "replications");

  auto* inspect = app.add_subcommand("inspect-snapshot", "print a snapshot header");
  std::string inspect_path, inspect_csv;
  inspect->add_option("snapshot", inspect_path, "snapshot file")->required()->check(CLI::ExistingFile);
  inspect->add_option("--csv", inspect_csv, "also write the CSV export here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ExitCode::kConfig);
  }

  try {
    if (*pre) return cmd_pretrain(pre_flags);
    if (*eval) return cmd_evaluate(eval_flags, snapshot, fit);
    if (*regret) return cmd_regret(regret_flags, reps);
    return cmd_inspect(inspect_path, inspect_csv);
  } catch (const ConfigError& e) {
    std::cerr << "igcf_cli: " << e.what() << '\n';
    return exit_code(ExitCode::kConfig);
  } catch (const DataError& e) {
    std::cerr << "igcf_cli: " << e.what() << '\n';
    return exit_code(ExitCode::kData);
  } catch (const NumericalError& e) {
    std::cerr << "igcf_cli: " << e.what() << '\n';
    return exit_code(ExitCode::kNumerical);
  }
}
