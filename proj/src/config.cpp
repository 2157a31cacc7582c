#include "cfrag/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "cfrag/errors.hpp"

namespace cfrag::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    const long long v = std::stoll(value);
    if (v < 0) throw std::out_of_range("negative");
    return static_cast<std::size_t>(v);
  } catch (...) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + value +
                      "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + value + "'");
}

bool near(double x, double y) { return std::abs(x - y) <= 1e-12 * std::max(1.0, std::abs(y)); }

}  // namespace

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line is not 'key = value': " + stripped, line_no);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ParseError("config line has empty key", line_no);
    out[key] = value;
  }
  return out;
}

void apply_overrides(PipelineConfig& c, const std::map<std::string, std::string>& overrides) {
  for (const auto& [key, value] : overrides) {
    if (key == "d") c.d = parse_size(key, value);
    else if (key == "n_max") c.n_max = parse_size(key, value);
    else if (key == "heads") c.heads = parse_size(key, value);
    else if (key == "k") c.k = parse_size(key, value);
    else if (key == "m") c.m = parse_size(key, value);
    else if (key == "alpha") c.alpha = parse_double(key, value);
    else if (key == "tau1") c.tau1 = parse_double(key, value);
    else if (key == "eta_crop") c.eta_crop = parse_double(key, value);
    else if (key == "eta_mask") c.eta_mask = parse_double(key, value);
    else if (key == "eta_reorder") c.eta_reorder = parse_double(key, value);
    else if (key == "lr_user") c.lr_user = parse_double(key, value);
    else if (key == "lr_retriever") c.lr_retriever = parse_double(key, value);
    else if (key == "lr_reranker") c.lr_reranker = parse_double(key, value);
    else if (key == "epochs_user") c.epochs_user = parse_size(key, value);
    else if (key == "epochs_retriever") c.epochs_retriever = parse_size(key, value);
    else if (key == "epochs_reranker") c.epochs_reranker = parse_size(key, value);
    else if (key == "batch_user") c.batch_user = parse_size(key, value);
    else if (key == "seed") c.seed = parse_size(key, value);
    else if (key == "feedback_workers") c.feedback_workers = parse_size(key, value);
    else if (key == "embed_provider") c.embed_provider = value;
    else if (key == "embed_url") c.embed_url = value;
    else if (key == "llm_provider") c.llm_provider = value;
    else if (key == "llm_url") c.llm_url = value;
    else if (key == "llm_model") c.llm_model = value;
    else if (key == "data_path") c.data_path = value;
    else if (key == "sidecar_path") c.sidecar_path = value;
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "grid_search") c.grid_search = parse_bool(key, value);
    else if (key == "eval_split") c.eval_split = value;
    else throw ConfigError("unknown config key: " + key);
  }
}

void validate(const PipelineConfig& c) {
  if (c.d == 0) throw ConfigError("d must be >= 1");
  if (c.n_max == 0) throw ConfigError("n_max must be >= 1");
  if (c.heads == 0 || c.d % c.heads != 0)
    throw ConfigError("heads must be >= 1 and divide d");
  if (c.k < 1) throw ConfigError("k must be >= 1");
  if (c.m < 1) throw ConfigError("m must be >= 1");
  if (c.alpha < 0.0 || c.alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  if (c.tau1 <= 0.0) throw ConfigError("tau1 must be positive");
  for (double eta : {c.eta_crop, c.eta_mask, c.eta_reorder})
    if (eta < 0.0 || eta > 1.0) throw ConfigError("augmentation ratios must lie in [0, 1]");
  for (double lr : {c.lr_user, c.lr_retriever, c.lr_reranker})
    if (lr <= 0.0) throw ConfigError("learning rates must be positive");
  if (c.eval_split != "heldout" && c.eval_split != "train" && c.eval_split != "all")
    throw ConfigError("eval_split must be one of heldout/train/all");
  if (c.embed_provider != "hash" && c.embed_provider != "remote")
    throw ConfigError("embed_provider must be 'hash' or 'remote'");
  if (c.llm_provider != "mock" && c.llm_provider != "http")
    throw ConfigError("llm_provider must be 'mock' or 'http'");

  if (c.grid_search) {
    if (c.m < 2 || c.m > 6) throw ConfigError("grid search: m must lie in {2,...,6}");
    if (!near(c.tau1, 0.01) && !near(c.tau1, 0.1) && !near(c.tau1, 1.0))
      throw ConfigError("grid search: tau1 must lie in {0.01, 0.1, 1}");
    if (c.alpha < 0.01 || c.alpha > 1.0)
      throw ConfigError("grid search: alpha must lie in [0.01, 1.0]");
    for (double lr : {c.lr_user, c.lr_retriever, c.lr_reranker})
      if (!near(lr, 1e-3) && !near(lr, 1e-4) && !near(lr, 1e-5))
        throw ConfigError("grid search: learning rates must lie in {1e-3, 1e-4, 1e-5}");
  }
}

std::map<std::string, std::string> to_map(const PipelineConfig& c) {
  const auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"d", std::to_string(c.d)},
      {"n_max", std::to_string(c.n_max)},
      {"heads", std::to_string(c.heads)},
      {"k", std::to_string(c.k)},
      {"m", std::to_string(c.m)},
      {"alpha", num(c.alpha)},
      {"tau1", num(c.tau1)},
      {"eta_crop", num(c.eta_crop)},
      {"eta_mask", num(c.eta_mask)},
      {"eta_reorder", num(c.eta_reorder)},
      {"lr_user", num(c.lr_user)},
      {"lr_retriever", num(c.lr_retriever)},
      {"lr_reranker", num(c.lr_reranker)},
      {"epochs_user", std::to_string(c.epochs_user)},
      {"epochs_retriever", std::to_string(c.epochs_retriever)},
      {"epochs_reranker", std::to_string(c.epochs_reranker)},
      {"batch_user", std::to_string(c.batch_user)},
      {"seed", std::to_string(c.seed)},
      {"feedback_workers", std::to_string(c.feedback_workers)},
      {"embed_provider", c.embed_provider},
      {"embed_url", c.embed_url},
      {"llm_provider", c.llm_provider},
      {"llm_url", c.llm_url},
      {"llm_model", c.llm_model},
      {"data_path", c.data_path},
      {"sidecar_path", c.sidecar_path},
      {"out_dir", c.out_dir},
      {"grid_search", c.grid_search ? "true" : "false"},
      {"eval_split", c.eval_split},
  };
}

}  // namespace cfrag::config
