#pragma once

#include "polcpmg/dynamics.hpp"
#include "polcpmg/sequences.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace polcpmg {

// JSON run configuration. Every block uses user-facing units (MHz, kHz, ns,
// us, degrees); conversion to rad/s and seconds happens in the to_* helpers.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& msg);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct SystemBlock {
  std::optional<double> larmor_mhz;  // required
  double a_perp_khz = 180.0;
  std::vector<double> a_perp_list_khz;  // optional bath of independent couplings
  double a_par_khz = 0.0;
  double rabi_mhz = 12.5;
  std::optional<double> detuning_mhz;
  double rabi_error = 0.0;
  double phase_error_deg = 0.0;
  bool operator==(const SystemBlock&) const = default;
};

struct NvBlock {
  double field_gauss = 0.0;
  double zero_field_mhz = 2870.0;
  double gamma_mhz_per_gauss = 2.8;
  std::optional<double> drive_mhz;  // sets Δω = ω_NV − ω_drive
  bool operator==(const NvBlock&) const = default;
};

struct LineSpec {
  double offset_mhz = 0.0;
  double weight = 1.0;
  bool operator==(const LineSpec&) const = default;
};

struct EnsembleBlock {
  std::string preset = "none";  // none | n14 | custom
  std::vector<LineSpec> lines;
  std::optional<double> fwhm_mhz;  // n14 default 1 MHz
  std::optional<int> nodes;        // n14 default 7
  std::string n14_mapping = "minus_positive";  // or minus_negative
  bool operator==(const EnsembleBlock&) const = default;
};

struct SequenceBlock {
  std::string family = "polcpmg";
  std::optional<double> t_p_ns;
  std::optional<double> t_p0_ns;
  std::optional<double> delta_theta_deg;
  std::optional<double> tau_ns;
  int n_pulses = 32;
  int cycles = 1;
  std::string branch = "plus";
  bool instantaneous = false;
  std::string init = "x_plus";  // x_plus | x_minus | alternate
  std::string nuclear = "mixed";  // mixed | up | down
  std::optional<int> repetitions;  // PulsePol
  std::optional<double> lock_rabi_mhz;  // NOVEL
  std::optional<double> lock_us;
  std::optional<std::string> text;  // custom body
  bool periodic = false;
  bool operator==(const SequenceBlock&) const = default;
};

struct ScanBlock {
  std::string mode;
  std::vector<double> tau_ns;
  std::vector<double> t_p_ns;
  std::vector<double> detuning_mhz;
  std::vector<double> rabi_error;
  std::vector<double> phase_error_deg;
  std::vector<double> theta_deg;
  std::vector<double> t_us;
  std::vector<int> n_list;
  std::vector<std::string> protocols;
  std::vector<nlohmann::json> panels;  // spectrum tp_tau: {r_pol, pol_branch, pol_pulses, nuclear}
  double t_max_us = 0.0;
  int nx = 32;
  int ny = 32;
  std::string field = "linear";  // linear | uniform
  double sensitivity_step_mhz = 0.5;
  double half_width_step_mhz = 0.1;
  bool unperturbed = false;
  bool operator==(const ScanBlock&) const = default;
};

struct OutputBlock {
  std::string directory = ".";
  std::string format = "csv";
  std::string prefix;
  bool operator==(const OutputBlock&) const = default;
};

struct RunConfig {
  static constexpr int kSchemaVersion = 1;
  std::string command;
  SystemBlock system;
  std::optional<NvBlock> nv;
  EnsembleBlock ensemble;
  SequenceBlock sequence;
  ScanBlock scan;
  OutputBlock output;
  bool operator==(const RunConfig&) const = default;
};

RunConfig load_config(const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path);

// Fills derived values: t_p0 from Ω₀, t_p ↔ δθ, Δω from the nv block, τ from
// the branch resonance, normalised ensemble weights, calibrated PulsePol
// repetitions / NOVEL lock time. Idempotent.
RunConfig resolve(const RunConfig& cfg);
nlohmann::json dump_config(const RunConfig& cfg);

double nv_frequency_mhz(const NvBlock& nv);

SpinSystem to_system(const RunConfig& cfg);
DetuningEnsemble to_ensemble(const RunConfig& cfg);
PulseGeometry to_geometry(const RunConfig& cfg);  // requires resolved τ
ProtocolRun to_protocol(const RunConfig& cfg);
Branch to_branch(const std::string& s, const std::string& path);

}  // namespace polcpmg
