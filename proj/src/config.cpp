#include "seqattr/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace seqattr {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

[[noreturn]] void fail(const std::filesystem::path& path, int line,
                       const std::string& msg) {
  throw ConfigError("config error at " + path.string() + ":" +
                    std::to_string(line) + ": " + msg);
}

bool parse_bool(const std::string& v, const std::filesystem::path& path, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(path, line, "expected a boolean, got \"" + v + "\"");
}

}  // namespace

RunConfig parse_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());

  RunConfig cfg;
  cfg.methods = list_methods();
  bool methods_set = false;

  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(path, line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "datasets" && section != "calibration" &&
          section != "methods" && section != "strexp")
        fail(path, line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(path, line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(path, line_no, "empty key");
    if (section.empty()) fail(path, line_no, "key outside any [section]");

    try {
      if (section == "run") {
        if (key == "model") cfg.model_path = value;
        else if (key == "output_dir") cfg.output_dir = value;
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "segment_cell") cfg.segment_cell = std::stoi(value);
        else if (key == "baseline") cfg.baseline = std::stod(value);
        else if (key == "curves") cfg.write_curves = parse_bool(value, path, line_no);
        else if (key == "metrics") {
          cfg.metrics.clear();
          for (const std::string& name : split_list(value)) {
            auto m = parse_metric(name);
            if (!m) fail(path, line_no, "unknown metric \"" + name + "\"");
            cfg.metrics.push_back(*m);
          }
          if (cfg.metrics.empty()) fail(path, line_no, "empty metric list");
        } else fail(path, line_no, "unknown key \"" + key + "\" in [run]");
      } else if (section == "datasets") {
        cfg.datasets.emplace_back(key, value);
      } else if (section == "calibration") {
        cfg.calibration.emplace_back(key, value);
      } else if (section == "methods") {
        if (key == "list") {
          if (value == "all") {
            cfg.methods = list_methods();
          } else {
            cfg.methods.clear();
            for (const std::string& name : split_list(value)) {
              auto id = parse_method(name);
              if (!id) fail(path, line_no, "unknown method \"" + name + "\"");
              cfg.methods.push_back(*id);
            }
            if (cfg.methods.empty()) fail(path, line_no, "empty method list");
          }
          methods_set = true;
        } else if (key == "ig_steps") cfg.params.ig_steps = std::stoi(value);
        else if (key == "gradshap_samples") cfg.params.gradshap_samples = std::stoi(value);
        else if (key == "gradshap_sigma") cfg.params.gradshap_sigma = std::stod(value);
        else if (key == "lime_samples") cfg.params.lime_samples = std::stoi(value);
        else if (key == "lime_ridge") cfg.params.lime_ridge = std::stod(value);
        else if (key == "lime_kernel_width") cfg.params.lime_kernel_width = std::stod(value);
        else if (key == "kernelshap_samples") cfg.params.kernelshap_samples = std::stoi(value);
        else if (key == "shapley_permutations") cfg.params.shapley_permutations = std::stoi(value);
        else fail(path, line_no, "unknown key \"" + key + "\" in [methods]");
      } else if (section == "strexp") {
        if (key == "enabled") cfg.strexp_enabled = parse_bool(value, path, line_no);
        else if (key == "base_method") {
          if (value == "auto") {
            cfg.strexp.base_method.reset();
          } else {
            auto id = parse_method(value);
            if (!id) fail(path, line_no, "unknown method \"" + value + "\"");
            cfg.strexp.base_method = *id;
          }
        } else if (key == "normalization") {
          if (value == "linf") cfg.strexp.normalization = Normalization::Linf;
          else if (value == "none") cfg.strexp.normalization = Normalization::None;
          else fail(path, line_no, "normalization must be linf or none");
        } else if (key == "include_blank_slots") {
          cfg.strexp.include_blank_slots = parse_bool(value, path, line_no);
        } else fail(path, line_no, "unknown key \"" + key + "\" in [strexp]");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(path, line_no, std::string("bad value \"") + value + "\": " + e.what());
    }
  }
  (void)methods_set;

  if (cfg.model_path.empty()) throw ConfigError("config error: [run] model is required");
  if (cfg.datasets.empty()) throw ConfigError("config error: [datasets] is empty");
  if (cfg.segment_cell <= 0 || kImageHeight % cfg.segment_cell != 0 ||
      kImageWidth % cfg.segment_cell != 0)
    throw ConfigError("config error: segment_cell must divide 32 and 128");
  return cfg;
}

std::string format_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "[run]\n";
  out << "model = " << cfg.model_path << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "segment_cell = " << cfg.segment_cell << "\n";
  out << "baseline = " << cfg.baseline << "\n";
  out << "metrics = ";
  for (std::size_t i = 0; i < cfg.metrics.size(); ++i)
    out << (i ? "," : "") << metric_name(cfg.metrics[i]);
  out << "\n";
  out << "curves = " << (cfg.write_curves ? "true" : "false") << "\n";
  out << "[datasets]\n";
  for (const auto& [name, dir] : cfg.datasets) out << name << " = " << dir << "\n";
  if (!cfg.calibration.empty()) {
    out << "[calibration]\n";
    for (const auto& [name, dir] : cfg.calibration) out << name << " = " << dir << "\n";
  }
  out << "[methods]\n";
  out << "list = ";
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    out << (i ? "," : "") << method_name(cfg.methods[i]);
  out << "\n";
  out << "ig_steps = " << cfg.params.ig_steps << "\n";
  out << "gradshap_samples = " << cfg.params.gradshap_samples << "\n";
  out << "gradshap_sigma = " << cfg.params.gradshap_sigma << "\n";
  out << "lime_samples = " << cfg.params.lime_samples << "\n";
  out << "lime_ridge = " << cfg.params.lime_ridge << "\n";
  out << "lime_kernel_width = " << cfg.params.lime_kernel_width << "\n";
  out << "kernelshap_samples = " << cfg.params.kernelshap_samples << "\n";
  out << "shapley_permutations = " << cfg.params.shapley_permutations << "\n";
  out << "[strexp]\n";
  out << "enabled = " << (cfg.strexp_enabled ? "true" : "false") << "\n";
  out << "base_method = "
      << (cfg.strexp.base_method ? method_name(*cfg.strexp.base_method) : "auto")
      << "\n";
  out << "normalization = "
      << (cfg.strexp.normalization == Normalization::Linf ? "linf" : "none") << "\n";
  out << "include_blank_slots = "
      << (cfg.strexp.include_blank_slots ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace seqattr
