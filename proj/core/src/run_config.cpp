#include "deeplight/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "deeplight/error.hpp"

namespace dl {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  if (steps < 1) throw ConfigError("train.steps must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("optim.lr must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) throw ConfigError("optim.beta1 must lie in [0, 1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("optim.beta2 must lie in [0, 1)");
  if (!(optimizer.eps > 0.0)) throw ConfigError("optim.eps must be positive");
  model.validate();
  loss.validate(model.num_scales_m);
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  auto as_int = [&] { return parse_number<int>(key, value); };
  auto as_double = [&] { return parse_number<double>(key, value); };
  if (key == "model.scale_r") c.model.scale_r = as_int();
  else if (key == "model.base_channels") c.model.base_channels = as_int();
  else if (key == "model.num_res_blocks") c.model.num_res_blocks = as_int();
  else if (key == "model.num_scales_m") c.model.num_scales_m = as_int();
  else if (key == "model.dmo_bands") c.model.dmo_bands = as_int();
  else if (key == "model.offset_kernel") c.model.offset_kernel = as_int();
  else if (key == "model.fusion_resize_divisor") c.model.fusion_resize_divisor = as_int();
  else if (key == "ablation" || key == "model.ablation") c.model.ablation = parse_ablation(value);
  else if (key == "loss.alpha") c.loss.alpha = as_double();
  else if (key == "loss.bce_epsilon") c.loss.bce_epsilon = as_double();
  else if (key == "loss.betas") {
    c.loss.betas.clear();
    std::istringstream is(value);
    std::string part;
    while (std::getline(is, part, ',')) c.loss.betas.push_back(parse_number<double>(key, trim(part)));
  } else if (key == "optim.lr") c.optimizer.lr = as_double();
  else if (key == "optim.beta1") c.optimizer.beta1 = as_double();
  else if (key == "optim.beta2") c.optimizer.beta2 = as_double();
  else if (key == "optim.eps") c.optimizer.eps = as_double();
  else if (key == "train.steps") c.steps = as_int();
  else if (key == "train.batch_size") c.batch_size = as_int();
  else if (key == "train.seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "train.eval_every") c.eval_every = as_int();
  else if (key == "train.checkpoint_every") c.checkpoint_every = as_int();
  else if (key == "data.dir") c.data_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  os << "model.scale_r = " << c.model.scale_r << "\n";
  os << "model.base_channels = " << c.model.base_channels << "\n";
  os << "model.num_res_blocks = " << c.model.num_res_blocks << "\n";
  os << "model.num_scales_m = " << c.model.num_scales_m << "\n";
  os << "model.dmo_bands = " << c.model.dmo_bands << "\n";
  os << "model.offset_kernel = " << c.model.offset_kernel << "\n";
  os << "model.fusion_resize_divisor = " << c.model.fusion_resize_divisor << "\n";
  os << "ablation = " << to_string(c.model.ablation) << "\n";
  os << "loss.alpha = " << format_double(c.loss.alpha) << "\n";
  os << "loss.betas = ";
  for (std::size_t i = 0; i < c.loss.betas.size(); ++i) os << (i ? ", " : "") << format_double(c.loss.betas[i]);
  os << "\n";
  os << "loss.bce_epsilon = " << format_double(c.loss.bce_epsilon) << "\n";
  os << "optim.lr = " << format_double(c.optimizer.lr) << "\n";
  os << "optim.beta1 = " << format_double(c.optimizer.beta1) << "\n";
  os << "optim.beta2 = " << format_double(c.optimizer.beta2) << "\n";
  os << "optim.eps = " << format_double(c.optimizer.eps) << "\n";
  os << "train.steps = " << c.steps << "\n";
  os << "train.batch_size = " << c.batch_size << "\n";
  os << "train.seed = " << c.seed << "\n";
  os << "train.eval_every = " << c.eval_every << "\n";
  os << "train.checkpoint_every = " << c.checkpoint_every << "\n";
  if (!c.data_dir.empty()) os << "data.dir = " << c.data_dir.string() << "\n";
  return os.str();
}

}  // namespace dl
