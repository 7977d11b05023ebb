#include "mmspoof/scenario.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mmspoof {

static_assert(std::endian::native == std::endian::little, "captures are written little-endian");

void save_capture(const std::filesystem::path& path, const IQCube& cube, const ChirpParams& tx) {
  nlohmann::ordered_json h;
  h["format"] = "mmspoof-capture";
  h["version"] = 1;
  h["n_rx"] = cube.n_rx();
  h["n_chirps"] = cube.n_chirps();
  h["n_samples"] = cube.n_samples();
  h["sample_rate_hz"] = cube.sample_rate;
  h["frame_id"] = cube.frame_id;
  h["timestamp_s"] = cube.timestamp;
  h["f_start_hz"] = tx.f_start;
  h["bandwidth_hz"] = tx.bandwidth;
  h["t_chirp_s"] = tx.t_chirp;
  h["inter_chirp_s"] = tx.inter_chirp;
  h["frame_period_s"] = tx.frame_period;
  h["phi_init_rad"] = tx.phi_init;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << h.dump() << '\n';
  for (const auto& m : cube.data)
    for (Eigen::Index c = 0; c < m.rows(); ++c)
      for (Eigen::Index k = 0; k < m.cols(); ++k) {
        const double iq[2] = {m(c, k).real(), m(c, k).imag()};
        out.write(reinterpret_cast<const char*>(iq), sizeof iq);
      }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::pair<IQCube, ChirpParams> load_capture(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::string line;
  std::getline(in, line);
  nlohmann::json h = nlohmann::json::parse(line, nullptr, false);
  if (h.is_discarded() || h.value("format", "") != "mmspoof-capture")
    throw std::runtime_error(path.string() + ": not a capture file");
  if (h.value("version", 0) != 1) throw std::runtime_error(path.string() + ": unsupported capture version");
  try {
    ChirpParams tx = ChirpParams::long_range();
    tx.f_start = h.at("f_start_hz").get<double>();
    tx.bandwidth = h.at("bandwidth_hz").get<double>();
    tx.t_chirp = h.at("t_chirp_s").get<double>();
    tx.inter_chirp = h.at("inter_chirp_s").get<double>();
    tx.frame_period = h.at("frame_period_s").get<double>();
    tx.n_chirps = h.at("n_chirps").get<int>();
    tx.phi_init = h.at("phi_init_rad").get<std::vector<double>>();
    tx.validate();
    IQCube cube(h.at("n_rx").get<int>(), tx.n_chirps, h.at("n_samples").get<int>(), h.at("sample_rate_hz").get<double>());
    cube.frame_id = h.at("frame_id").get<long>();
    cube.timestamp = h.at("timestamp_s").get<double>();
    for (auto& m : cube.data)
      for (Eigen::Index c = 0; c < m.rows(); ++c)
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
          double iq[2];
          if (!in.read(reinterpret_cast<char*>(iq), sizeof iq))
            throw std::runtime_error(path.string() + ": truncated sample data");
          m(c, k) = {iq[0], iq[1]};
        }
    return {std::move(cube), std::move(tx)};
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": bad header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace mmspoof
