#include "mmspoof/scenario.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace mmspoof;

namespace {

std::vector<ConfigOverride> parse_overrides(const std::vector<std::string>& params) {
  std::vector<ConfigOverride> out;
  for (const std::string& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--param expects path=value, got '" + p + "'");
    out.emplace_back(p.substr(0, eq), p.substr(eq + 1));
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmWave radar spoofing attack and defense simulator"};
  app.require_subcommand(1);

  std::string config, out_dir, defense, capture, model_path, sweep_out;
  std::vector<std::string> params;
  std::uint64_t seed = 0;
  bool baseline = false;
  double capture_at = -1.0;
  int threads = 0, vectors = 1000;
  double nu = 0.02;

  auto* run_cmd = app.add_subcommand("run", "Run one scenario and export its log");
  run_cmd->add_option("config", config, "Scenario JSON")->required();
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Override the scenario seed");
  run_cmd->add_option("--out", out_dir, "Export directory");
  run_cmd->add_option("--defense", defense, "cr, fp, both or none")
      ->check(CLI::IsMember({"cr", "fp", "both", "none"}));
  run_cmd->add_flag("--baseline", baseline, "Deactivate all attackers");
  run_cmd->add_option("--param", params, "Override path=value (repeatable)");
  run_cmd->add_option("--capture-at", capture_at, "Save the IQ cube of the first frame at or after this time (s)");
  run_cmd->add_option("--fp-model", model_path, "Fingerprint model file (skips training)");

  auto* verify_cmd = app.add_subcommand("verify", "Run the defenses on a recorded frame");
  verify_cmd->add_option("capture", capture, "Capture file")->required();
  verify_cmd->add_option("--fp-model", model_path, "Fingerprint model file (default: train one)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo grid over config parameters");
  sweep_cmd->add_option("config", config, "Scenario JSON")->required();
  sweep_cmd->add_option("--param", params, "path=a,b,c (repeatable)")->required();
  auto* sweep_seed = sweep_cmd->add_option("--seed", seed, "Override the scenario seed");
  sweep_cmd->add_option("--defense", defense, "cr, fp, both or none")
      ->check(CLI::IsMember({"cr", "fp", "both", "none"}));
  sweep_cmd->add_flag("--baseline", baseline, "Deactivate all attackers");
  sweep_cmd->add_option("--threads", threads, "Concurrent runs (default: all cores)");
  sweep_cmd->add_option("--out", sweep_out, "CSV file (default: stdout)");

  auto* train_cmd = app.add_subcommand("train-fp", "Train and save a fingerprint model");
  train_cmd->add_option("--out", model_path, "Model file")->required();
  train_cmd->add_option("--vectors", vectors, "Clean training vectors");
  train_cmd->add_option("--nu", nu, "One-class SVM nu");
  auto* train_seed = train_cmd->add_option("--seed", seed, "Training seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      const ScenarioConfig cfg = load_config(config, parse_overrides(params));
      RunOptions opt;
      opt.baseline = baseline;
      if (*seed_opt) opt.seed = seed;
      if (!defense.empty()) opt.defense = defense;
      if (capture_at >= 0.0) opt.capture_at = capture_at;
      if (!model_path.empty()) {
        std::ifstream in(model_path);
        if (!in) throw std::runtime_error(model_path + ": cannot open");
        opt.fp_model = AnomalyModel::load(in);
      }
      const RunResult r = run_scenario(cfg, opt);
      const RunSummary& s = r.log.summary;
      std::cout << cfg.name << " seed " << r.log.seed << (baseline ? " baseline" : "") << " defense "
                << r.log.defense << ": " << to_string(s.outcome) << " (min TTC " << opt_str(s.min_ttc)
                << " s, hard brake at " << opt_str(s.hard_brake_time) << " s, lane change at "
                << opt_str(s.lane_change_time) << " s, collision at " << opt_str(s.collision_time) << " s)\n";
      if (!out_dir.empty()) {
        export_log(r.log, out_dir);
        if (r.capture) save_capture(std::filesystem::path(out_dir) / "capture.iq", *r.capture, r.capture_tx);
      }
      return 0;
    }

    if (*verify_cmd) {
      const auto [cube, tx] = load_capture(capture);
      RadarConfig rc;
      rc.tx = tx;
      const FrameResult fr = process_frame(cube, rc);
      std::optional<ConcentrationCalibration> cal;
      if (!tx.phi_init.empty()) cal = calibrate_concentration(rc.tx, rc.geometry);
      AnomalyModel model;
      if (!model_path.empty()) {
        std::ifstream in(model_path);
        if (!in) throw std::runtime_error(model_path + ": cannot open");
        model = AnomalyModel::load(in);
      } else {
        ScenarioConfig cfg;
        cfg.radar.tx = tx;
        model = default_fp_model(cfg);
      }
      std::cout << "frame " << cube.frame_id << ": " << fr.cloud.detections.size() << " detections\n";
      std::cout << "range,velocity,angle,power,cr_verdict,cr_concentration_db,fp_verdict,fp_spoofed_fraction\n";
      for (const Detection& d : fr.cloud.detections) {
        std::string cr = "-", crc = "-";
        if (cal) {
          const double c = doppler_concentration(fr.rd, d.range_bin);
          cr = to_string(c < cal->threshold ? Verdict::spoofed : Verdict::genuine);
          crc = opt_str(linear_to_db(c));
        }
        const FingerprintVerdict fv = fingerprint_detection(model, cube, d.range_bin);
        std::printf("%.3f,%.3f,%.2f,%.2f,%s,%s,%s,%.3f\n", d.range, d.velocity, d.angle, d.power, cr.c_str(),
                    crc.c_str(), to_string(fv.verdict).c_str(), fv.spoofed_fraction);
      }
      if (!cal) std::cout << "no per-chirp phase challenge in this capture; challenge-response not applicable\n";
      return 0;
    }

    if (*sweep_cmd) {
      std::vector<std::pair<std::string, std::vector<std::string>>> grid;
      for (const ConfigOverride& ov : parse_overrides(params)) grid.emplace_back(ov.first, split(ov.second, ','));
      RunOptions opt;
      opt.baseline = baseline;
      if (*sweep_seed) opt.seed = seed;
      if (!defense.empty()) opt.defense = defense;
      const std::vector<SweepPoint> pts = sweep(config, grid, opt, threads);
      std::ofstream file;
      if (!sweep_out.empty()) {
        file.open(sweep_out, std::ios::binary);
        if (!file) throw std::runtime_error(sweep_out + ": cannot open for writing");
      }
      std::ostream& os = sweep_out.empty() ? std::cout : file;
      for (const auto& g : grid) os << g.first << ",";
      os << "outcome,min_ttc_s,hard_brake_time_s,lane_change_time_s,collision_time_s,detection_latency_s\n";
      for (const SweepPoint& p : pts) {
        for (const auto& ov : p.overrides) os << ov.second << ",";
        const RunSummary& s = p.summary;
        os << to_string(s.outcome) << "," << opt_str(s.min_ttc) << "," << opt_str(s.hard_brake_time) << ","
           << opt_str(s.lane_change_time) << "," << opt_str(s.collision_time) << ","
           << opt_str(s.detection_latency()) << "\n";
      }
      return 0;
    }

    if (*train_cmd) {
      ScenarioConfig cfg;
      cfg.defense.fp_training_vectors = vectors;
      cfg.defense.fp_nu = nu;
      if (*train_seed) cfg.defense.fp_seed = seed;
      const AnomalyModel m = default_fp_model(cfg);
      std::ofstream out(model_path);
      if (!out) throw std::runtime_error(model_path + ": cannot open for writing");
      m.save(out);
      std::cout << "wrote " << model_path << " (" << m.support.rows() << " support vectors)\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
