#include "doctest.h"
#include "mmspoof/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace mmspoof;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text, const std::vector<ConfigOverride>& ov = {}) {
  try {
    parse_config(text, "cfg.json", ov);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const std::string kMinimal = R"({
  "name": "mini",
  "duration_s": 1.0,
  "road": {"lanes": 2, "lane_width_m": 3.7},
  "victim": {"speed_mps": 5.0, "set_speed_mps": 5.0}
})";

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mmspoof_test_" + name);
  fs::remove_all(d);
  return d;
}

// Scenario 1 cut to its first second so runs stay quick.
ScenarioConfig short_s1(std::vector<ConfigOverride> extra = {}) {
  std::vector<ConfigOverride> ov{{"duration_s", "1.2"}, {"attacks.0.end_s", "1.2"}, {"traffic_light.green_at_s", "0.6"}};
  ov.insert(ov.end(), extra.begin(), extra.end());
  return load_config(bundled_scenario("scenario1"), ov);
}

}  // namespace

TEST_CASE("bundled scenario 1 places one attacker at 20 m spoofing 13 m") {
  const ScenarioConfig cfg = load_config(bundled_scenario("scenario1"));
  REQUIRE(cfg.attacks.size() == 1);
  REQUIRE(cfg.attacks[0].nodes.size() == 1);
  CHECK(cfg.attacks[0].nodes[0].position.range == 20.0);
  CHECK(cfg.attacks[0].target.initial_gap == 13.0);
  CHECK(cfg.traffic_light.has_value());
}

TEST_CASE("every bundled scenario loads") {
  for (int i = 1; i <= 5; ++i) CHECK_NOTHROW(load_config(bundled_scenario("scenario" + std::to_string(i))));
}

TEST_CASE("config errors name the line or field") {
  CHECK(error_of(kMinimal).empty());
  SUBCASE("negative lane width") {
    const std::string e = error_of(kMinimal, {{"road.lane_width_m", "-3.7"}});
    CHECK(e.find("road.lane_width_m") != std::string::npos);
  }
  SUBCASE("unknown key") {
    const std::string e = error_of(kMinimal, {{"victim.speed_kmh", "5"}});
    CHECK(e.find("victim.speed_kmh") != std::string::npos);
    CHECK(e.find("unknown key") != std::string::npos);
  }
  SUBCASE("syntax error reports its line") {
    const std::string e = error_of("{\n  \"name\": \"x\",\n  \"duration_s\": ,\n}");
    CHECK(e.find("cfg.json:3:") != std::string::npos);
  }
  SUBCASE("wrong type") {
    CHECK(error_of(kMinimal, {{"road.lanes", "\"two\""}}).find("road.lanes") != std::string::npos);
  }
  SUBCASE("victim lane must exist") {
    CHECK(error_of(kMinimal, {{"victim.lane", "2"}}).find("victim.lane") != std::string::npos);
  }
  SUBCASE("attack window inside the run") {
    const std::string with_attack = R"({
      "name": "a", "duration_s": 2.0,
      "victim": {"speed_mps": 5.0},
      "attacks": [{"start_s": 0.0, "end_s": 3.0, "nodes": [{"range_m": 20.0, "angle_deg": 0.0}],
                   "strategy": {"kind": "add_obstacle"}, "target": {"kind": "virtual"}}]
    })";
    CHECK(error_of(with_attack).find("attacks.0.end_s") != std::string::npos);
  }
  SUBCASE("pair strategies need two nodes") {
    const std::string pair = R"({
      "name": "a", "duration_s": 2.0,
      "victim": {"speed_mps": 5.0},
      "attacks": [{"start_s": 0.0, "end_s": 1.0, "nodes": [{"range_m": 20.0, "angle_deg": 0.0}],
                   "strategy": {"kind": "asynchronous_pair"}, "target": {"kind": "virtual"}}]
    })";
    CHECK(error_of(pair).find("attacks.0.nodes") != std::string::npos);
  }
  SUBCASE("override path must exist in arrays") {
    CHECK_FALSE(error_of(kMinimal, {{"attacks.3.start_s", "1"}}).empty());
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError); }
}

TEST_CASE("overrides take JSON literals") {
  const ScenarioConfig cfg = parse_config(kMinimal, "cfg.json", {{"victim.speed_mps", "7.5"}, {"name", "renamed"}});
  CHECK(cfg.victim.speed == 7.5);
  CHECK(cfg.name == "renamed");
}

TEST_CASE("both defenses enabled is valid and logs verdicts from both") {
  const ScenarioConfig cfg = short_s1(
      {{"defense.challenge_response", "true"}, {"defense.fingerprint", "true"}, {"defense.fp_training_vectors", "300"},
       {"vehicles", R"([{"id": "parked", "x_m": 9.0, "lane": 0, "speed_mps": 0.0}])"}});
  CHECK(cfg.defense.challenge_response);
  CHECK(cfg.defense.fingerprint);
  const RunLog log = run(cfg);
  CHECK(log.defense == "both");
  bool cr = false, fp = false;
  for (const FrameRecord& f : log.frames)
    for (const DefenseRecord& v : f.verdicts) {
      cr = cr || v.defense == DefenseKind::challenge_response;
      fp = fp || v.defense == DefenseKind::fingerprint;
    }
  CHECK(cr);
  CHECK(fp);
}

TEST_CASE("run log has one record per processed frame in time order") {
  const ScenarioConfig cfg = short_s1();
  const RunLog log = run(cfg);
  const int frames = static_cast<int>(cfg.duration / cfg.tick() + 1e-9);
  CHECK(static_cast<int>(log.frames.size()) == (frames + cfg.radar_frame_stride - 1) / cfg.radar_frame_stride);
  for (std::size_t i = 1; i < log.frames.size(); ++i) {
    CHECK(log.frames[i].timestamp > log.frames[i - 1].timestamp);
    CHECK(log.frames[i].frame_id == log.frames[i - 1].frame_id + cfg.radar_frame_stride);
  }
  CHECK(log.summary.first_attack_time.has_value());
}

TEST_CASE("same seed gives byte-identical exports, another seed does not") {
  const ScenarioConfig cfg = short_s1();
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b"), c = fresh_dir("det_c");
  export_log(run(cfg), a);
  export_log(run(cfg), b);
  RunOptions other;
  other.seed = 99;
  export_log(run(cfg, other), c);
  for (const char* f : {"pointclouds.csv", "decisions.csv", "speed_timeline.csv", "summary.json"}) {
    CHECK(slurp(a / f) == slurp(b / f));
    CHECK(slurp(a / f).find('\r') == std::string::npos);
  }
  CHECK(slurp(a / "pointclouds.csv") != slurp(c / "pointclouds.csv"));
}

TEST_CASE("an empty log exports headers only") {
  const fs::path d = fresh_dir("empty");
  export_log(RunLog{}, d);
  CHECK(slurp(d / "pointclouds.csv") == "frame_id,timestamp,range,velocity,angle,power,flagged\n");
  CHECK(slurp(d / "decisions.csv") == "timestamp,kind,cause,target_lane,ttc\n");
  CHECK(slurp(d / "speed_timeline.csv") == "timestamp,x,y,speed,accel,lane,mode\n");
  CHECK(slurp(d / "summary.json").find("\"outcome\"") != std::string::npos);
}

TEST_CASE("export reports an unwritable path") {
  CHECK_THROWS(export_log(RunLog{}, "/proc/mmspoof_no_such_dir"));
}

TEST_CASE("outcome precedence") {
  auto frame = [](DecisionKind k, double t, double speed) {
    FrameRecord f;
    f.timestamp = t;
    f.decision.kind = k;
    f.victim.speed = speed;
    return f;
  };
  RunLog log;
  log.frames = {frame(DecisionKind::accelerate, 0.0, 5.0), frame(DecisionKind::accelerate, 0.1, 5.0)};
  CHECK(classify_outcome(log) == Outcome::no_effect);

  log.green_at = 0.05;
  log.frames = {frame(DecisionKind::hold_stop, 0.0, 0.0), frame(DecisionKind::hold_stop, 0.1, 0.0)};
  CHECK(classify_outcome(log) == Outcome::stalled);
  log.frames[1].alert = true;
  CHECK(classify_outcome(log) == Outcome::attack_detected);
  log.frames[0].decision.kind = DecisionKind::lane_change;
  CHECK(classify_outcome(log) == Outcome::lane_changed);
  log.frames[1].decision.kind = DecisionKind::hard_brake;
  CHECK(classify_outcome(log) == Outcome::hard_braked);
  log.summary.collision_time = 0.1;
  CHECK(classify_outcome(log) == Outcome::collision);

  CHECK(severity(Outcome::no_effect) == severity(Outcome::attack_detected));
  CHECK(severity(Outcome::attack_detected) < severity(Outcome::stalled));
  CHECK(severity(Outcome::stalled) < severity(Outcome::lane_changed));
  CHECK(severity(Outcome::lane_changed) < severity(Outcome::hard_braked));
  CHECK(severity(Outcome::hard_braked) < severity(Outcome::collision));
}

TEST_CASE("capture round trip") {
  RunOptions opt;
  opt.capture_at = 0.5;
  const RunResult r = run_scenario(short_s1({{"defense.challenge_response", "true"}}), opt);
  REQUIRE(r.capture.has_value());
  const fs::path d = fresh_dir("capture");
  fs::create_directories(d);
  save_capture(d / "frame.iq", *r.capture, r.capture_tx);
  const auto [cube, tx] = load_capture(d / "frame.iq");
  CHECK(cube.frame_id == r.capture->frame_id);
  CHECK(cube.n_rx() == r.capture->n_rx());
  for (int a = 0; a < cube.n_rx(); ++a) CHECK(cube.data[static_cast<std::size_t>(a)] == r.capture->data[static_cast<std::size_t>(a)]);
  CHECK(tx.f_start == r.capture_tx.f_start);
  CHECK(tx.phi_init == r.capture_tx.phi_init);

  const std::string bytes = slurp(d / "frame.iq");
  std::ofstream(d / "cut.iq", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS(load_capture(d / "cut.iq"));
}

TEST_CASE("sweep returns one summary per grid point in grid order") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> grid{
      {"duration_s", {"0.5", "0.6"}}, {"attacks.0.end_s", {"0.5"}}, {"traffic_light.green_at_s", {"0.3"}}, {"victim.set_speed_mps", {"4.5", "6"}}};
  const auto pts = sweep(bundled_scenario("scenario1"), grid, {}, 2);
  REQUIRE(pts.size() == 4);
  CHECK(pts[0].overrides[0].second == "0.5");
  CHECK(pts[0].overrides[3].second == "4.5");
  CHECK(pts[1].overrides[3].second == "6");
  CHECK(pts[3].overrides[0].second == "0.6");
  CHECK(pts[3].overrides[3].second == "6");
}

TEST_CASE("fingerprinting never worsens a bundled scenario") {
  for (int i = 1; i <= 5; ++i) {
    const ScenarioConfig cfg = load_config(bundled_scenario("scenario" + std::to_string(i)));
    RunOptions fp;
    fp.defense = "fp";
    const Outcome none = classify_outcome(run(cfg));
    const Outcome with = classify_outcome(run(cfg, fp));
    CAPTURE(i);
    CHECK(severity(with) <= severity(none));
  }
}

TEST_CASE("scenario 1: the attacked victim never moves, the baseline leaves within 1 s of green") {
  const ScenarioConfig cfg = load_config(bundled_scenario("scenario1"));
  REQUIRE(cfg.traffic_light.has_value());
  const double green = cfg.traffic_light->green_at;
  const RunLog attacked = run(cfg);
  for (const FrameRecord& f : attacked.frames) CHECK(f.victim.speed == 0.0);
  RunOptions base;
  base.baseline = true;
  const RunLog clean = run(cfg, base);
  std::optional<double> moved;
  for (const FrameRecord& f : clean.frames)
    if (f.victim.speed > 0.0) {
      moved = f.timestamp;
      break;
    }
  REQUIRE(moved.has_value());
  CHECK(*moved >= green);
  CHECK(*moved <= green + 1.0);
}
