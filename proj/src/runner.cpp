#include "bellsim/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bellsim/config.hpp"
#include "bellsim/harness.hpp"
#include "bellsim/observers.hpp"
#include "json.hpp"

namespace bellsim {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct IoFailure : Error {
  using Error::Error;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoFailure("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string pair_key(const Behavior& b, std::size_t x, std::size_t y) {
  return b.alice_settings()[x].label + "," + b.bob_settings()[y].label;
}

std::string dataset_csv(const Dataset& d) {
  std::ostringstream os;
  os.precision(17);
  os << "trial,x,y,theta_a,theta_b,a,b,"
        "alice_own_setting_t,alice_own_detection_t,alice_remote_setting_t,alice_remote_outcome_t,"
        "bob_own_setting_t,bob_own_detection_t,bob_remote_setting_t,bob_remote_outcome_t,substream\n";
  auto times = [&](const ReceptionTimes& t) {
    os << t.own_setting << ',' << t.own_detection << ',' << t.remote_setting << ',' << t.remote_outcome;
  };
  for (const auto& r : d.records) {
    os << r.trial << ',' << r.x << ',' << r.y << ',' << d.alice_settings[r.x].label << ','
       << d.bob_settings[r.y].label << ',' << sign_of(r.a) << ',' << sign_of(r.b) << ',';
    times(r.alice);
    os << ',';
    times(r.bob);
    os << ',' << r.substream << '\n';
  }
  return os.str();
}

ordered_json behavior_json(const Behavior& b, const std::vector<double>* se) {
  ordered_json rows = ordered_json::array();
  for (std::size_t x = 0; x < b.alice_count(); ++x) {
    for (std::size_t y = 0; y < b.bob_count(); ++y) {
      const auto s = b.slice(x, y);
      ordered_json row;
      row["x"] = x;
      row["y"] = y;
      row["settings"] = pair_key(b, x, y);
      row["p"] = {s[0], s[1], s[2], s[3]};
      if (se) {
        const std::size_t base = (x * b.bob_count() + y) * 4;
        row["standard_error"] = {(*se)[base], (*se)[base + 1], (*se)[base + 2], (*se)[base + 3]};
      }
      row["correlator"] = correlator(b, x, y);
      rows.push_back(row);
    }
  }
  return rows;
}

ordered_json no_signaling_json(const NoSignalingReport& r, double tol) {
  ordered_json j;
  j["passes"] = r.passes;
  j["tolerance"] = tol;
  j["worst_deviation"] = r.worst_deviation;
  j["alice_deviation"] = r.alice_deviation;
  j["bob_deviation"] = r.bob_deviation;
  return j;
}

ordered_json factorizability_json(const Behavior& b) {
  ordered_json j;
  try {
    const FactorizabilityReport f = check_factorizable(b);
    j["supported"] = true;
    j["verdict"] = f.local ? "local" : "nonlocal";
    j["no_signaling"] = f.no_signaling;
    j["max_abs_s"] = f.max_abs_s;
    j["facets"] = f.facets;
  } catch (const UnsupportedScenario& e) {
    j["supported"] = false;
    j["verdict"] = "unsupported";
    j["note"] = e.what();
  }
  return j;
}

ordered_json violation_json(const ViolationReport& r) {
  ordered_json j;
  j["observer"] = short_name(r.observer);
  j["stage"] = label(r.stage);
  j["s"] = r.s;
  j["standard_error"] = r.standard_error;
  j["exceeds_bound"] = r.exceeds_bound;
  j["classification"] = to_string(r.classification);
  j["counterfactual"] = r.counterfactual;
  j["nonlocal"] = r.nonlocal;
  j["inquiry"] = r.inquiry;
  return j;
}

ordered_json event_json(const SpacetimeEvent& e, const Schedule& s) {
  ordered_json j;
  j["index"] = e.index;
  j["t"] = e.t;
  j["x"] = e.x;
  j["kind"] = to_string(e.payload.kind);
  j["observer"] = short_name(e.payload.observer);
  j["variable"] = e.payload.variable;
  if (e.payload.recipient) j["recipient"] = short_name(*e.payload.recipient);
  j["emission_speed"] = e.emission_speed;
  j["received_by_A_at"] = reception_time(e, s.worldline(ObserverId::alice));
  j["received_by_B_at"] = reception_time(e, s.worldline(ObserverId::bob));
  return j;
}

ordered_json history_json(const ObserverHistory& h) {
  ordered_json stages = ordered_json::array();
  for (const auto& s : h) {
    ordered_json j;
    j["stage"] = label(s.stage());
    j["clock"] = s.clock();
    ordered_json received = ordered_json::array();
    for (const auto& e : s.received()) received.push_back(e.index);
    j["received_events"] = received;
    j["ledger"] = render(s.ledger());
    j["information_local"] = information_local(s);
    stages.push_back(j);
  }
  return stages;
}

std::string correlator_data(const ExperimentConfig& cfg, const Behavior& model, const EstimatedBehavior& est,
                            const Dataset& d) {
  std::ostringstream os;
  os.precision(17);
  if (cfg.model == ModelKind::singlet && cfg.curve_points > 1) {
    os << "# analytic singlet correlator against delta = theta_a - theta_b\n";
    os << "# delta_rad E\n";
    const auto n = static_cast<std::int64_t>(cfg.curve_points - 1);
    for (std::int64_t k = 0; k <= n; ++k) {
      const Angle delta(k, n);
      const Behavior b = singlet_behavior({Angle(0, 1)}, {Angle(0, 1) - delta});
      os << delta.radians() << ' ' << correlator(b, 0, 0) << '\n';
    }
    os << "\n\n";
  }
  os << "# empirical correlators per setting pair\n";
  os << "# x y delta_rad E_hat standard_error E_model trials\n";
  for (std::size_t x = 0; x < model.alice_count(); ++x) {
    for (std::size_t y = 0; y < model.bob_count(); ++y) {
      const auto& sa = model.alice_settings()[x];
      const auto& sb = model.bob_settings()[y];
      const double e = correlator(est.behavior, x, y);
      const double n = static_cast<double>(d.trials(x, y));
      os << x << ' ' << y << ' ';
      if (sa.angle && sb.angle) {
        os << (*sa.angle - *sb.angle).radians();
      } else {
        os << "nan";
      }
      os << ' ' << e << ' ' << std::sqrt(std::max(0.0, 1.0 - e * e) / n) << ' ' << correlator(model, x, y) << ' '
         << d.trials(x, y) << '\n';
    }
  }
  return os.str();
}

}  // namespace

ExitCode run(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log, int verbosity) {
  auto info = [&](const std::string& msg) {
    if (verbosity >= 1) log << msg << '\n';
  };
  try {
    const Behavior model = cfg.behavior();
    const Schedule schedule = build_schedule(cfg.schedule);
    const TrialSetup setup(model, schedule, cfg.q);

    ExperimentOptions opts;
    opts.trials_per_pair = cfg.trials_per_pair;
    opts.seed = cfg.seed;
    opts.preset = cfg.preset_settings;
    opts.threads = cfg.threads;
    opts.keep_records = true;
    opts.track_beliefs = true;

    info("model " + std::string(to_string(cfg.model)) + ", " + std::to_string(cfg.trials_per_pair) +
         " trials per setting pair, seed " + std::to_string(cfg.seed));
    const auto start = std::chrono::steady_clock::now();
    const ExperimentResult result = run_experiment(setup, opts);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    info("sampled " + std::to_string(result.dataset.total()) + " trials in " + std::to_string(elapsed) + " s");

    const EstimatedBehavior est = estimate_behavior(result.dataset);
    const ChshEstimate chsh = estimate_chsh(result.dataset, cfg.chsh);
    const double analytic_s = chsh_value(model, cfg.chsh);
    const double empirical_tol = 5.0 / std::sqrt(static_cast<double>(cfg.trials_per_pair));

    ordered_json summary;
    summary["model"] = to_string(cfg.model);
    summary["seed"] = cfg.seed;
    summary["trials_per_pair"] = cfg.trials_per_pair;
    summary["preset_settings"] = cfg.preset_settings;
    summary["chsh_settings"] = {{"x0", cfg.chsh.x0}, {"x1", cfg.chsh.x1}, {"y0", cfg.chsh.y0}, {"y1", cfg.chsh.y1}};

    ordered_json& estimates = summary["estimates"];
    estimates["analytic_s"] = analytic_s;
    estimates["s_hat"] = chsh.value;
    estimates["s_standard_error"] = chsh.standard_error;
    estimates["model_behavior"] = behavior_json(model, nullptr);
    estimates["behavior"] = behavior_json(est.behavior, &est.standard_error);

    summary["no_signaling"]["analytic"] = no_signaling_json(check_no_signaling(model), 1e-12);
    summary["no_signaling"]["empirical"] =
        no_signaling_json(check_no_signaling(est.behavior, empirical_tol), empirical_tol);

    summary["factorizability"] = factorizability_json(model);

    ordered_json classification = ordered_json::array();
    const TrialResult& first = *result.first_trial;
    const ChshEvidence ensemble{chsh.value, chsh.standard_error, result.dataset.total(), false};
    for (const ObserverHistory* h : {&first.alice, &first.bob}) {
      for (const auto& snap : *h) classification.push_back(violation_json(classify_violation(*h, snap.stage(), ensemble)));
    }
    // The same statement backed by one experiment only.
    ordered_json single =
        violation_json(classify_violation(first.alice, Stage::t_c, ChshEvidence{chsh.value, chsh.standard_error, 1, false}));
    single["evidence"] = "single experiment";
    classification.push_back(single);
    summary["classification"] = classification;

    const StageTable table = stage_table(first.alice, first.bob);
    ordered_json rows = ordered_json::array();
    for (const auto& r : table.rows) {
      rows.push_back({{"stage", label(r.stage)}, {"alice", r.alice}, {"bob", r.bob}, {"equal", r.equal ? "y" : "n"}});
    }
    summary["stage_table"]["rows"] = rows;
    summary["stage_table"]["pattern"] = table.pattern();

    ordered_json trace;
    trace["trial"] = first.record.trial;
    trace["settings"] = {{"x", first.record.x}, {"y", first.record.y}};
    trace["outcomes"] = {{"a", sign_of(first.record.a)}, {"b", sign_of(first.record.b)}};
    ordered_json events = ordered_json::array();
    for (const auto& e : schedule.events()) events.push_back(event_json(e, schedule));
    trace["events"] = events;
    trace["alice"] = history_json(first.alice);
    trace["bob"] = history_json(first.bob);
    trace["pooled"] = {{"x", first.pooled.x},
                       {"y", first.pooled.y},
                       {"a", sign_of(first.pooled.a)},
                       {"b", sign_of(first.pooled.b)}};
    try {
      trace["retrodiction"] = render(retrodict(first.alice, "±a", Stage::t_theta));
    } catch (const Error& e) {
      trace["retrodiction"] = std::string("unavailable: ") + e.what();
    }

    fs::create_directories(out_dir);
    write_file(out_dir / "dataset.csv", dataset_csv(result.dataset));
    write_file(out_dir / "summary.json", summary.dump(2) + "\n");
    write_file(out_dir / "trace.json", trace.dump(2) + "\n");
    write_file(out_dir / "model_behavior.csv", format_behavior_table(model));
    write_file(out_dir / "correlators.dat", correlator_data(cfg, model, est, result.dataset));

    std::ostringstream msg;
    msg.precision(6);
    msg << "S = " << chsh.value << " +/- " << chsh.standard_error << " (analytic " << analytic_s << "), stage pattern "
        << table.pattern();
    info(msg.str());
    if (verbosity >= 2) {
      for (const auto& r : table.rows) {
        log << "  " << label(r.stage) << "  " << r.alice << "  " << r.bob << "  " << (r.equal ? "y" : "n") << '\n';
      }
      for (const auto& c : classification) {
        log << "  " << c["observer"].get<std::string>() << ' ' << c["stage"].get<std::string>() << "  "
            << c["classification"].get<std::string>() << "  " << c["inquiry"].get<std::string>() << '\n';
      }
    }
    info("wrote " + out_dir.string());
    return ExitCode::ok;
  } catch (const IoFailure& e) {
    log << "error: " << e.what() << '\n';
    return ExitCode::io_error;
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << '\n';
    return ExitCode::io_error;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return ExitCode::config_error;
  } catch (const RealismViolation& e) {
    log << "realism violation: " << e.what() << '\n';
    return ExitCode::runtime_error;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return ExitCode::runtime_error;
  }
}

ExitCode run_from_file(const fs::path& config_path, const fs::path& out_dir, const RunOptions& options,
                       std::ostream& log) {
  std::string text;
  try {
    text = read_file(config_path);
  } catch (const IoFailure& e) {
    log << "error: " << e.what() << '\n';
    return ExitCode::io_error;
  }
  ExperimentConfig cfg;
  try {
    cfg = parse_config(text, config_path.parent_path());
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return ExitCode::config_error;
  }
  if (options.seed) cfg.seed = *options.seed;
  if (options.trials_per_pair) {
    if (*options.trials_per_pair == 0) {
      log << "error: invalid configuration:\n  trials_per_pair: must be a positive integer\n";
      return ExitCode::config_error;
    }
    cfg.trials_per_pair = *options.trials_per_pair;
  }
  return run(cfg, out_dir, log, options.verbosity);
}

ExitCode validate_file(const fs::path& config_path, std::ostream& log) {
  try {
    parse_config(read_file(config_path), config_path.parent_path());
  } catch (const IoFailure& e) {
    log << "error: " << e.what() << '\n';
    return ExitCode::io_error;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return ExitCode::config_error;
  }
  log << "ok\n";
  return ExitCode::ok;
}

}  // namespace bellsim
