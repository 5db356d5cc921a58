#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hardylab {

// Raised for malformed or inconsistent configuration; the CLI maps it to exit 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key-value configuration with sections. "[grid]\nsamples=256" is read
// back as key "grid_samples". '#' and ';' start comments.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_text(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// Resolved experiment configuration. Geometry is validated eagerly so that a
// bad config dies with the specific failed inequality before any computation.
struct RunConfig {
  // [grid]
  int dim = 1;
  double half_width = 16.0;
  int samples = 2048;
  // [time]
  int time_k_max = 24;
  double time_ratio = 0.70710678118654752440;
  // [filter]
  int filter_j_max = 0;  // 0: largest admissible
  // [operator]
  std::string operator_kind = "truncated_riesz";  // identity | local_riesz | truncated_riesz | heat_multiplier | dilation
  int operator_axis = 0;
  double operator_scale = 1.0;
  // [theorem]
  double theorem_p = 0.8;
  double theorem_s = 1.5;
  double theorem_eps = 1.0;
  // [atom] / [molecule]
  double atom_p = 0.8, atom_q = 2.0;
  int atom_moments = 1;
  double atom_radius = 0.5;
  double molecule_p = 0.8, molecule_q = 2.0, molecule_delta = 1.0, molecule_s = 1.2;
  double molecule_radius = 0.5;
  // [sweep]
  std::vector<double> sweep_radii{2.0, 1.0, 0.5, 0.25, 0.125, 0.0625};
  int sweep_seeds = 4;
  int sweep_x0_count = 9;
  double sweep_x0_span = 2.0;
  // [czoi]
  int czoi_m = 0;
  double czoi_eps = 1.0;
  // [experiment]
  std::uint64_t seed = 1;
  int threads = 1;
  std::string input_field;  // optional path for validate/decompose
  // [output]
  std::string output_dir = "reports";

  static RunConfig from(const KeyValueConfig& kv);
  void validate() const;
  // geometry used only by the sweep subcommands (atom-map, cancellation,
  // hp-ratio, condition-1-7); checked where it is consumed
  void validate_radius_sweep() const;
  void validate_x0_sweep() const;
};

}  // namespace hardylab
