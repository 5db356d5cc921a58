#include "hardylab/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace hardylab {

namespace {
std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  KeyValueConfig cfg = parse_text(ss.str());
  // relative input paths resolve against the config file's directory
  const auto slash = path.find_last_of('/');
  cfg.kv_["__config_dir"] = slash == std::string::npos ? "." : path.substr(0, slash);
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: unterminated section header at line " + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key=value at line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(lineno));
    if (!section.empty()) key = section + "_" + key;
    cfg.kv_[key] = value;
  }
  return cfg;
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not a number: " + it->second);
  }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  const double v = get_double(key, fallback);
  if (v != std::floor(v)) throw ConfigError("config: key '" + key + "' must be an integer");
  return static_cast<int>(v);
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not a nonnegative integer: " + it->second);
  }
}

std::vector<double> KeyValueConfig::get_list(const std::string& key,
                                             const std::vector<double>& fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  std::vector<double> out;
  std::string item;
  std::istringstream is(it->second);
  while (std::getline(is, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' holds a malformed list: " + it->second);
    }
  }
  if (out.empty()) throw ConfigError("config: key '" + key + "' holds an empty list");
  return out;
}

RunConfig RunConfig::from(const KeyValueConfig& kv) {
  RunConfig c;
  c.dim = kv.get_int("grid_dim", c.dim);
  c.half_width = kv.get_double("grid_half_width", c.half_width);
  c.samples = kv.get_int("grid_samples", c.samples);
  c.time_k_max = kv.get_int("time_k_max", c.time_k_max);
  c.time_ratio = kv.get_double("time_ratio", c.time_ratio);
  c.filter_j_max = kv.get_int("filter_j_max", c.filter_j_max);
  c.operator_kind = kv.get("operator_kind", c.operator_kind);
  c.operator_axis = kv.get_int("operator_axis", c.operator_axis);
  c.operator_scale = kv.get_double("operator_scale", c.operator_scale);
  c.theorem_p = kv.get_double("theorem_p", c.theorem_p);
  c.theorem_s = kv.get_double("theorem_s", c.theorem_s);
  c.theorem_eps = kv.get_double("theorem_eps", c.theorem_eps);
  c.atom_p = kv.get_double("atom_p", c.atom_p);
  c.atom_q = kv.get_double("atom_q", c.atom_q);
  c.atom_moments = kv.get_int("atom_moments", c.atom_moments);
  c.atom_radius = kv.get_double("atom_radius", c.atom_radius);
  c.molecule_p = kv.get_double("molecule_p", c.molecule_p);
  c.molecule_q = kv.get_double("molecule_q", c.molecule_q);
  c.molecule_delta = kv.get_double("molecule_delta", c.molecule_delta);
  c.molecule_s = kv.get_double("molecule_s", c.molecule_s);
  c.molecule_radius = kv.get_double("molecule_radius", c.molecule_radius);
  c.sweep_radii = kv.get_list("sweep_radii", c.sweep_radii);
  c.sweep_seeds = kv.get_int("sweep_seeds", c.sweep_seeds);
  c.sweep_x0_count = kv.get_int("sweep_x0_count", c.sweep_x0_count);
  c.sweep_x0_span = kv.get_double("sweep_x0_span", c.sweep_x0_span);
  c.czoi_m = kv.get_int("czoi_m", c.czoi_m);
  c.czoi_eps = kv.get_double("czoi_eps", c.czoi_eps);
  c.seed = kv.get_u64("experiment_seed", c.seed);
  c.threads = kv.get_int("experiment_threads", c.threads);
  c.input_field = kv.get("experiment_input_field", c.input_field);
  if (!c.input_field.empty() && c.input_field.front() != '/' && kv.has("__config_dir"))
    c.input_field = kv.get("__config_dir", ".") + "/" + c.input_field;
  c.output_dir = kv.get("output_dir", c.output_dir);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (dim < 1 || dim > 3) throw ConfigError("config: grid_dim must satisfy 1 <= dim <= 3");
  if (!(half_width > 0.0)) throw ConfigError("config: grid_half_width must satisfy L > 0");
  if (samples < 8) throw ConfigError("config: grid_samples must satisfy N >= 8");
  if (samples % 2 != 0)
    throw ConfigError("config: grid_samples must be even (parity rule: the frequency "
                      "lattice {-N/2..N/2-1} needs even N)");
  if (time_k_max < 0) throw ConfigError("config: time_k_max must satisfy k_max >= 0");
  if (!(time_ratio > 0.0 && time_ratio < 1.0))
    throw ConfigError("config: time_ratio must satisfy 0 < ratio < 1");
  if (!(theorem_p > 0.0) || theorem_p > 1.0)
    throw ConfigError("config: theorem_p must satisfy 0 < p <= 1");
  if (!(theorem_eps > 0.0) || theorem_eps > 1.0)
    throw ConfigError("config: theorem_eps must satisfy 0 < eps <= 1");
  if (sweep_seeds < 1) throw ConfigError("config: sweep_seeds must satisfy seeds >= 1");
  if (sweep_x0_count < 1) throw ConfigError("config: sweep_x0_count must satisfy count >= 1");
  if (threads < 1) throw ConfigError("config: experiment_threads must satisfy threads >= 1");
  for (double r : sweep_radii)
    if (!(r > 0.0)) throw ConfigError("config: sweep_radii entries must be positive");
}

void RunConfig::validate_radius_sweep() const {
  const double h = 2.0 * half_width / samples;
  for (double r : sweep_radii) {
    if (2.0 * r > half_width / 2.0)
      throw ConfigError("config: sweep radius violates 2 r_B <= L/2 (ball must fit the half-torus)");
    if (r < 2.0 * h)
      throw ConfigError("config: sweep radius below 2h cannot hold an atom on this grid");
  }
}

void RunConfig::validate_x0_sweep() const {
  if (sweep_x0_span + 3.0 > half_width / 2.0)
    throw ConfigError(
        "config: x0 sweep violates |x0| + 3 <= L/2 (cutoff must fit the half-torus)");
}

}  // namespace hardylab
