#include "ipc/runconfig.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace ipc {

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::runtime_error("config: expected boolean, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& schema() {
  static const std::map<std::string, Setter> s = {
      {"kind", [](RunConfig& c, const std::string& v) { c.train.weights.kind = rec_kind_from_string(v); }},
      {"lambda_rate", [](RunConfig& c, const std::string& v) { c.train.weights.lambda_rate = std::stod(v); }},
      {"lambda_id", [](RunConfig& c, const std::string& v) { c.train.weights.lambda_id = std::stod(v); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.train.adam.lr = std::stod(v); }},
      {"beta1", [](RunConfig& c, const std::string& v) { c.train.adam.beta1 = std::stod(v); }},
      {"beta2", [](RunConfig& c, const std::string& v) { c.train.adam.beta2 = std::stod(v); }},
      {"eps", [](RunConfig& c, const std::string& v) { c.train.adam.eps = std::stod(v); }},
      {"batch", [](RunConfig& c, const std::string& v) { c.train.batch_size = std::stoi(v); }},
      {"steps", [](RunConfig& c, const std::string& v) { c.train.steps = std::stoi(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = std::stoull(v); }},
      {"warm_start", [](RunConfig& c, const std::string& v) { c.train.warm_start_path = v; }},
      {"allow_cold_start", [](RunConfig& c, const std::string& v) { c.train.allow_cold_start = parse_bool(v); }},
      {"hidden", [](RunConfig& c, const std::string& v) { c.train.arch.hidden = std::stoi(v); }},
      {"latent_channels", [](RunConfig& c, const std::string& v) { c.train.arch.latent_channels = std::stoi(v); }},
      {"hyper_channels", [](RunConfig& c, const std::string& v) { c.train.arch.hyper_channels = std::stoi(v); }},
      {"kernel", [](RunConfig& c, const std::string& v) { c.train.arch.kernel = std::stoi(v); }},
      {"sigma_min", [](RunConfig& c, const std::string& v) { c.train.arch.sigma_min = std::stod(v); }},
      {"crop_fraction", [](RunConfig& c, const std::string& v) { c.aligner.crop_fraction = std::stod(v); }},
      {"align_size", [](RunConfig& c, const std::string& v) { c.aligner.out_size = std::stoi(v); }},
      {"manifest", [](RunConfig& c, const std::string& v) { c.manifest = v; }},
      {"embedder", [](RunConfig& c, const std::string& v) { c.embedder_path = v; }},
      {"checkpoint_out", [](RunConfig& c, const std::string& v) { c.checkpoint_out = v; }},
      {"log_out", [](RunConfig& c, const std::string& v) { c.log_out = v; }},
      {"gallery_n", [](RunConfig& c, const std::string& v) { c.gallery_n = std::stoi(v); }},
      {"far_target", [](RunConfig& c, const std::string& v) { c.far_target = std::stod(v); }},
      {"eval_seed", [](RunConfig& c, const std::string& v) { c.eval_seed = std::stoull(v); }},
  };
  return s;
}

}  // namespace

RunConfig parse_runconfig(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto it = schema().find(key);
    if (it == schema().end())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  cfg.aligner.validate();
  return cfg;
}

RunConfig load_runconfig(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_runconfig(os.str());
}

std::string runconfig_echo(const RunConfig& cfg) {
  std::ostringstream os;
  os << train_config_echo(cfg.train) << "crop_fraction=" << cfg.aligner.crop_fraction
     << "\nalign_size=" << cfg.aligner.out_size << "\nmanifest=" << cfg.manifest
     << "\nembedder=" << cfg.embedder_path << "\ncheckpoint_out=" << cfg.checkpoint_out
     << "\nlog_out=" << cfg.log_out << "\ngallery_n=" << cfg.gallery_n
     << "\nfar_target=" << cfg.far_target << "\neval_seed=" << cfg.eval_seed << "\n";
  return os.str();
}

}  // namespace ipc
