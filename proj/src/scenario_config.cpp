#include "mmspoof/scenario.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mmspoof {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) fail(path, what);
}

// An object view that records which keys were read, so leftovers can be rejected.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  double num(const std::string& key, double def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number()) fail(at(key), "expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) fail(at(key), "must be finite");
    return x;
  }
  double num_required(const std::string& key) {
    if (!has(key)) fail(at(key), "required");
    return num(key, 0.0);
  }
  long integer(const std::string& key, long def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number_integer()) fail(at(key), "expected an integer");
    return v->get<long>();
  }
  std::uint64_t seed(const std::string& key, std::uint64_t def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long>() >= 0))
      fail(at(key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }
  bool boolean(const std::string& key, bool def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(at(key), "expected true or false");
    return v->get<bool>();
  }
  std::string str(const std::string& key, const std::string& def) {
    const json* v = get(key);
    if (!v) return def;
    if (!v->is_string()) fail(at(key), "expected a string");
    return v->get<std::string>();
  }
  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    const json* v = get(key);
    if (!v) return out;
    if (!v->is_array()) fail(at(key), "expected an array of numbers");
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) fail(at(key) + "." + std::to_string(i), "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }
  std::optional<Obj> child(const std::string& key) {
    const json* v = get(key);
    if (!v) return std::nullopt;
    return Obj(*v, at(key));
  }
  std::vector<Obj> children(const std::string& key) {
    std::vector<Obj> out;
    const json* v = get(key);
    if (!v) return out;
    if (!v->is_array()) fail(at(key), "expected an array");
    for (std::size_t i = 0; i < v->size(); ++i) out.emplace_back((*v)[i], at(key) + "." + std::to_string(i));
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

StrategyKind strategy_kind(const std::string& s, const std::string& path) {
  if (s == "add_obstacle") return StrategyKind::add_obstacle;
  if (s == "multi_obstacle") return StrategyKind::multi_obstacle;
  if (s == "random_gaussian") return StrategyKind::random_gaussian;
  if (s == "synchronous_pair") return StrategyKind::synchronous_pair;
  if (s == "asynchronous_pair") return StrategyKind::asynchronous_pair;
  fail(path, "unknown strategy '" + s + "'");
}

HardwareFingerprint impairment(Obj& node) {
  const std::string path = node.at("impairment");
  const json* v = node.get("impairment");
  if (!v) return HardwareFingerprint::commodity_sdr();
  if (v->is_string()) {
    const std::string s = v->get<std::string>();
    if (s == "commodity_sdr") return HardwareFingerprint::commodity_sdr();
    if (s == "ideal") return {};
    fail(path, "expected commodity_sdr, ideal or an object");
  }
  Obj o(*v, path);
  HardwareFingerprint fp;
  fp.iq_gain_imbalance = o.num("iq_gain_imbalance_db", 0.0);
  fp.iq_phase_skew = o.num("iq_phase_skew_rad", 0.0);
  fp.phase_noise_std = o.num("phase_noise_std_rad", 0.0);
  fp.nonlinearity_coeff = o.num("nonlinearity_coeff", 0.0);
  const std::vector<double> dc = o.numbers("dc_offset");
  if (!dc.empty()) {
    check(dc.size() == 2, o.at("dc_offset"), "expected [re, im]");
    fp.dc_offset = {dc[0], dc[1]};
  }
  o.finish();
  return fp;
}

AttackSpec parse_attack(Obj& a) {
  AttackSpec s;
  s.name = a.str("name", "");
  s.start = a.num("start_s", 0.0);
  s.end = a.num_required("end_s");
  for (Obj& n : a.children("nodes")) {
    AttackerNode node;
    node.position.range = n.num_required("range_m");
    node.position.angle = n.num_required("angle_deg");
    node.tx_power = n.num("tx_power_w", node.tx_power);
    node.antenna_gain = n.num("antenna_gain_dbi", node.antenna_gain);
    node.cfo = n.num("cfo_hz", 0.0);
    node.phase_offset = n.num("phase_offset_rad", 0.0);
    node.clock_skew = n.num("clock_skew", 0.0);
    node.sensing_latency = n.num("sensing_latency_s", node.sensing_latency);
    node.switch_latency = n.num("switch_latency_s", node.switch_latency);
    node.impairment = impairment(n);
    n.finish();
    s.nodes.push_back(node);
  }
  if (auto st = a.child("strategy")) {
    StrategyConfig& c = s.strategy;
    c.kind = strategy_kind(st->str("kind", "add_obstacle"), st->at("kind"));
    c.frame_lag = static_cast<int>(st->integer("frame_lag", c.frame_lag));
    c.max_lag = static_cast<int>(st->integer("max_lag", c.max_lag));
    c.gaussian_margin_db = st->num("gaussian_margin_db", c.gaussian_margin_db);
    c.noise_to_tone_db = st->num("noise_to_tone_db", c.noise_to_tone_db);
    c.noise_cutoff = st->num("noise_cutoff_hz", c.noise_cutoff);
    c.jam_margin_db = st->num("jam_margin_db", c.jam_margin_db);
    c.noise_seed = st->seed("noise_seed", c.noise_seed);
    const std::vector<double> split = st->numbers("power_split");
    if (!split.empty()) {
      check(split.size() == 2, st->at("power_split"), "expected [P1, P2]");
      c.power_split = std::make_pair(split[0], split[1]);
    }
    st->finish();
  } else {
    fail(a.at("strategy"), "required");
  }
  if (auto t = a.child("target")) {
    TargetSpec& g = s.target;
    const std::string kind = t->str("kind", "virtual");
    if (kind == "virtual") {
      g.kind = TargetKind::virtual_obstacle;
    } else if (kind == "vehicle") {
      g.kind = TargetKind::vehicle;
    } else {
      fail(t->at("kind"), "expected virtual or vehicle");
    }
    g.initial_gap = t->num("initial_gap_m", g.initial_gap);
    g.speed = t->num("speed_mps", g.speed);
    g.min_range = t->num("min_range_m", g.min_range);
    g.extra_gaps = t->numbers("extra_gaps_m");
    g.vehicle = t->str("vehicle", "");
    if (t->has("theta_deg")) g.theta = t->num("theta_deg", 0.0);
    g.lateral_offset = t->num("lateral_offset_m", g.lateral_offset);
    g.max_angle = t->num("max_angle_deg", g.max_angle);
    t->finish();
  } else {
    fail(a.at("target"), "required");
  }
  a.finish();
  return s;
}

ScenarioConfig parse_root(const json& root) {
  Obj r(root, "");
  ScenarioConfig c;
  c.name = r.str("name", "");
  c.description = r.str("description", "");
  c.seed = r.seed("seed", c.seed);
  c.duration = r.num_required("duration_s");
  c.radar_frame_stride = static_cast<int>(r.integer("radar_frame_stride", c.radar_frame_stride));
  c.vehicle_width = r.num("vehicle_width_m", c.vehicle_width);

  if (auto o = r.child("road")) {
    c.road.lanes = static_cast<int>(o->integer("lanes", c.road.lanes));
    c.road.lane_width = o->num("lane_width_m", c.road.lane_width);
    c.road.length = o->num("length_m", c.road.length);
    o->finish();
  }
  if (auto o = r.child("victim")) {
    c.victim.x = o->num("x_m", 0.0);
    c.victim.lane = static_cast<int>(o->integer("lane", 0));
    c.victim.speed = o->num("speed_mps", 0.0);
    c.victim.set_speed = o->num("set_speed_mps", c.victim.speed);
    o->finish();
  } else {
    fail("victim", "required");
  }
  for (Obj& o : r.children("vehicles")) {
    VehicleSpec v;
    v.id = o.str("id", "");
    v.x = o.num_required("x_m");
    v.lane = static_cast<int>(o.integer("lane", 0));
    v.speed = o.num("speed_mps", 0.0);
    v.rcs = o.num("rcs_m2", v.rcs);
    v.length = o.num("length_m", v.length);
    o.finish();
    c.vehicles.push_back(v);
  }
  if (auto o = r.child("traffic_light")) {
    c.traffic_light = TrafficLight{o->num_required("green_at_s")};
    o->finish();
  }
  if (auto o = r.child("radar")) {
    ChirpParams& tx = c.radar.tx;
    tx.f_start = o->num("f_start_hz", tx.f_start);
    tx.bandwidth = o->num("bandwidth_hz", tx.bandwidth);
    tx.t_chirp = o->num("t_chirp_s", tx.t_chirp);
    tx.inter_chirp = o->num("inter_chirp_s", tx.inter_chirp);
    tx.n_chirps = static_cast<int>(o->integer("n_chirps", tx.n_chirps));
    tx.frame_period = o->num("frame_period_s", tx.frame_period);
    c.radar.cfar.threshold_factor = o->num("cfar_threshold_factor", c.radar.cfar.threshold_factor);
    c.radar.cfar.training = static_cast<int>(o->integer("cfar_training", c.radar.cfar.training));
    c.radar.cfar.guard = static_cast<int>(o->integer("cfar_guard", c.radar.cfar.guard));
    c.radar.music.grid_step = o->num("music_grid_step_deg", c.radar.music.grid_step);
    o->finish();
  }
  c.link = LinkBudget::calibrated(c.radar.tx.wavelength());
  if (auto o = r.child("link")) {
    c.link.radar_tx_power = o->num("radar_tx_power_w", c.link.radar_tx_power);
    c.link.radar_gain = o->num("radar_gain_dbi", c.link.radar_gain);
    c.link.noise_floor = o->num("noise_floor_w", c.link.noise_floor);
    c.link.fov_half_angle = o->num("fov_half_angle_deg", c.link.fov_half_angle);
    c.link.fov_penalty_db = o->num("fov_penalty_db", c.link.fov_penalty_db);
    o->finish();
  }
  if (auto o = r.child("planner")) {
    PlannerParams& p = c.planner;
    p.hard_brake_ttc = o->num("hard_brake_ttc_s", p.hard_brake_ttc);
    p.stop_hold_range = o->num("stop_hold_range_m", p.stop_hold_range);
    p.roi_horizon = o->num("roi_horizon_m", p.roi_horizon);
    p.max_accel = o->num("max_accel_mps2", p.max_accel);
    p.soft_decel = o->num("soft_decel_mps2", p.soft_decel);
    p.hard_decel = o->num("hard_decel_mps2", p.hard_decel);
    p.follow_headway = o->num("follow_headway_s", p.follow_headway);
    p.lane_change_duration = o->num("lane_change_duration_s", p.lane_change_duration);
    p.lane_change_scale = o->num("lane_change_scale", p.lane_change_scale);
    o->finish();
  }
  if (auto o = r.child("tracker")) {
    c.tracker.gate = o->num("gate_m", c.tracker.gate);
    c.tracker.confirm_hits = static_cast<int>(o->integer("confirm_hits", c.tracker.confirm_hits));
    c.tracker.prune_frames = static_cast<int>(o->integer("prune_frames", c.tracker.prune_frames));
    o->finish();
  }
  for (Obj& o : r.children("attacks")) c.attacks.push_back(parse_attack(o));
  if (auto o = r.child("defense")) {
    DefenseConfig& d = c.defense;
    d.challenge_response = o->boolean("challenge_response", false);
    d.fingerprint = o->boolean("fingerprint", false);
    d.policy.randomize_phi = o->boolean("randomize_phi", d.policy.randomize_phi);
    d.policy.randomize_f_start = o->boolean("randomize_f_start", d.policy.randomize_f_start);
    d.policy.hop_set = o->numbers("hop_set_hz");
    d.policy.seed = o->seed("policy_seed", d.policy.seed);
    d.cr_margin_db = o->num("cr_margin_db", d.cr_margin_db);
    d.cr_calibration_snr_db = o->num("cr_calibration_snr_db", d.cr_calibration_snr_db);
    d.fp_model_path = o->str("fp_model_path", "");
    d.fp_training_vectors = static_cast<int>(o->integer("fp_training_vectors", d.fp_training_vectors));
    d.fp_nu = o->num("fp_nu", d.fp_nu);
    d.fp_seed = o->seed("fp_seed", d.fp_seed);
    d.fp_min_snr_db = o->num("fp_min_snr_db", d.fp_min_snr_db);
    d.alert_window_frames = static_cast<int>(o->integer("alert_window_frames", d.alert_window_frames));
    d.alert_min_flags = static_cast<int>(o->integer("alert_min_flags", d.alert_min_flags));
    d.alert_hold = o->num("alert_hold_s", d.alert_hold);
    o->finish();
  }
  r.finish();
  return c;
}

// Assigns a JSON literal at a dotted path; a value that is not valid JSON is taken as a string.
void apply_override(json& root, const ConfigOverride& ov) {
  json* node = &root;
  std::string done;
  std::stringstream ss(ov.first);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override: empty path");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string& p = parts[i];
    const bool last = i + 1 == parts.size();
    done += (done.empty() ? "" : ".") + p;
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(p);
      } catch (const std::exception&) {
        fail(done, "expected an array index");
      }
      if (idx >= node->size()) fail(done, "index out of range");
      node = &(*node)[idx];
    } else if (node->is_object()) {
      // Missing intermediate objects are created; the schema check rejects unknown names.
      if (!last && !node->contains(p)) (*node)[p] = json::object();
      node = &(*node)[p];
    } else {
      fail(done, "cannot descend into a scalar");
    }
  }
  json value = json::parse(ov.second, nullptr, false);
  if (value.is_discarded()) value = ov.second;
  *node = value;
}

}  // namespace

void ScenarioConfig::validate() const {
  check(duration > 0.0, "duration_s", "must be > 0");
  check(radar_frame_stride >= 1, "radar_frame_stride", "must be >= 1");
  check(vehicle_width > 0.0, "vehicle_width_m", "must be > 0");
  check(road.lanes >= 1, "road.lanes", "must be >= 1");
  check(road.lane_width > 0.0, "road.lane_width_m", "must be > 0");
  check(road.length > 0.0, "road.length_m", "must be > 0");
  check(road.has_lane(victim.lane), "victim.lane", "lane does not exist");
  check(victim.speed >= 0.0, "victim.speed_mps", "must be >= 0");
  check(victim.set_speed >= 0.0, "victim.set_speed_mps", "must be >= 0");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    const VehicleSpec& v = vehicles[i];
    const std::string p = "vehicles." + std::to_string(i);
    check(!v.id.empty(), p + ".id", "required");
    check(ids.insert(v.id).second, p + ".id", "duplicate id '" + v.id + "'");
    check(road.has_lane(v.lane), p + ".lane", "lane does not exist");
    check(v.speed >= 0.0, p + ".speed_mps", "must be >= 0");
    check(v.rcs > 0.0, p + ".rcs_m2", "must be > 0");
    check(v.length > 0.0, p + ".length_m", "must be > 0");
  }
  if (traffic_light) {
    check(traffic_light->green_at >= 0.0 && traffic_light->green_at < duration, "traffic_light.green_at_s",
          "must lie within the run");
  }
  try {
    radar.tx.validate();
  } catch (const std::invalid_argument& e) {
    fail("radar", e.what());
  }
  check(link.noise_floor > 0.0, "link.noise_floor_w", "must be > 0");
  try {
    planner.validate();
  } catch (const std::invalid_argument& e) {
    fail("planner", e.what());
  }
  check(tracker.gate > 0.0, "tracker.gate_m", "must be > 0");
  check(tracker.confirm_hits >= 1, "tracker.confirm_hits", "must be >= 1");
  check(tracker.prune_frames >= 1, "tracker.prune_frames", "must be >= 1");
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    const AttackSpec& a = attacks[i];
    const std::string p = "attacks." + std::to_string(i);
    check(a.start >= 0.0 && a.start < a.end, p + ".start_s", "window must satisfy 0 <= start < end");
    check(a.end <= duration, p + ".end_s", "window must end within duration_s");
    check(!a.nodes.empty(), p + ".nodes", "at least one node required");
    for (std::size_t k = 0; k < a.nodes.size(); ++k) {
      try {
        a.nodes[k].validate();
      } catch (const std::invalid_argument& e) {
        fail(p + ".nodes." + std::to_string(k), e.what());
      }
    }
    try {
      a.strategy.validate();
    } catch (const std::invalid_argument& e) {
      fail(p + ".strategy", e.what());
    }
    const bool pair = a.strategy.kind == StrategyKind::synchronous_pair ||
                      a.strategy.kind == StrategyKind::asynchronous_pair;
    check(!pair || a.nodes.size() == 2, p + ".nodes", "pair strategies need exactly two nodes");
    check(pair || a.nodes.size() == 1, p + ".nodes", "single-node strategies need exactly one node");
    const TargetSpec& t = a.target;
    if (t.kind == TargetKind::virtual_obstacle) {
      check(t.initial_gap > 0.0, p + ".target.initial_gap_m", "must be > 0");
      check(t.speed >= 0.0, p + ".target.speed_mps", "must be >= 0");
      check(t.min_range >= 0.0, p + ".target.min_range_m", "must be >= 0");
      for (double g : t.extra_gaps) check(g > 0.0, p + ".target.extra_gaps_m", "entries must be > 0");
    } else {
      check(!t.vehicle.empty() && ids.count(t.vehicle), p + ".target.vehicle", "unknown vehicle '" + t.vehicle + "'");
      check(t.lateral_offset > 0.0, p + ".target.lateral_offset_m", "must be > 0");
      check(t.max_angle > 0.0 && t.max_angle < 60.0, p + ".target.max_angle_deg", "must lie in (0, 60)");
      check(pair || a.strategy.kind == StrategyKind::random_gaussian, p + ".strategy.kind",
            "a vehicle target needs a pair or Gaussian strategy");
    }
  }
  const DefenseConfig& d = defense;
  if (d.challenge_response) {
    try {
      d.policy.validate(radar.tx);
    } catch (const std::invalid_argument& e) {
      fail("defense", e.what());
    }
  }
  check(d.fp_training_vectors >= 100, "defense.fp_training_vectors", "must be >= 100");
  check(d.fp_nu > 0.0 && d.fp_nu < 1.0, "defense.fp_nu", "must lie in (0, 1)");
  check(d.alert_window_frames >= 1, "defense.alert_window_frames", "must be >= 1");
  check(d.alert_min_flags >= 1 && d.alert_min_flags <= d.alert_window_frames, "defense.alert_min_flags",
        "must lie in [1, alert_window_frames]");
  check(d.alert_hold >= 0.0, "defense.alert_hold_s", "must be >= 0");
}

ScenarioConfig parse_config(const std::string& text, const std::string& origin,
                            const std::vector<ConfigOverride>& overrides) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // Convert the byte offset to line and column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": parse error: " +
                      e.what());
  }
  try {
    for (const ConfigOverride& ov : overrides) apply_override(root, ov);
    ScenarioConfig cfg = parse_root(root);
    cfg.validate();
    return cfg;
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

ScenarioConfig load_config(const std::filesystem::path& path, const std::vector<ConfigOverride>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), overrides);
}

std::filesystem::path bundled_scenario(const std::string& name) {
  return std::filesystem::path(MMSPOOF_SCENARIO_DIR) / (name + ".json");
}

}  // namespace mmspoof
