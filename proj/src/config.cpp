#include "docdenoise/config.hpp"

#include <bit>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace docdenoise {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Setter = std::function<void(const json&)>;

double as_number(const std::string& key, const json& v) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

int64_t as_integer(const std::string& key, const json& v) {
  if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
  return v.get<int64_t>();
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

template <typename T>
T as_enum(const std::string& key, const json& v, std::optional<T> (*parse)(std::string_view)) {
  const auto s = as_string(key, v);
  const auto parsed = parse(s);
  if (!parsed) throw ConfigError(key, "unknown value '" + s + "'");
  return *parsed;
}

std::optional<SsimWindow> parse_ssim_window(std::string_view s) {
  if (s == "global") return SsimWindow::global;
  if (s == "sliding") return SsimWindow::sliding;
  return std::nullopt;
}

std::string_view ssim_window_name(SsimWindow w) { return w == SsimWindow::global ? "global" : "sliding"; }

// Discriminator depth that leaves an 8x8 map, when the patch allows it.
std::optional<int64_t> default_dis_down_steps(int64_t patch) {
  if (patch < 8 || patch % 8 != 0) return std::nullopt;
  const auto ratio = static_cast<uint64_t>(patch / 8);
  if (!std::has_single_bit(ratio)) return std::nullopt;
  return std::bit_width(ratio) - 1;
}

fs::path resolve_path(const fs::path& p, const fs::path& base) {
  return p.is_relative() && !base.empty() ? base / p : p;
}

// Validation messages start with the field name, optionally after the
// owning network; map that back to the flat key.
std::string key_for_message(const std::string& msg) {
  static const std::map<std::string, std::string> aliases = {
      {"gen_num_res_blocks", "gen_res_blocks"},
      {"gen_patch_size", "patch_size"},
      {"dis_patch_size", "patch_size"},
      {"dis_channel", "dis_base_channels"},
      {"metric_k1,", "metric_k1"},
      {"sliding_window_size", "ssim_window_size"},
  };
  std::istringstream words(msg);
  std::string first;
  std::string second;
  words >> first >> second;
  std::string key = first;
  if (first == "generator") key = "gen_" + second;
  if (first == "discriminator") key = "dis_" + second;
  if (first == "metric") key = "metric_" + second;
  const auto it = aliases.find(key);
  return it == aliases.end() ? key : it->second;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("<root>", "expected a JSON object");
  RunConfig cfg;
  auto& t = cfg.train;
  auto& g = cfg.generator;
  auto& d = cfg.discriminator;
  auto& m = cfg.metrics;
  bool dis_depth_given = false;

  std::map<std::string, Setter> setters;
  auto num = [&](const char* key, double& field) {
    setters[key] = [key, &field](const json& v) { field = as_number(key, v); };
  };
  auto integer = [&](const char* key, auto& field) {
    setters[key] = [key, &field](const json& v) {
      field = static_cast<std::remove_reference_t<decltype(field)>>(as_integer(key, v));
    };
  };

  setters["regime"] = [&](const json& v) { t.regime = as_enum<Regime>("regime", v, parse_regime); };
  num("lr_gen", t.lr_gen);
  num("lr_dis", t.lr_dis);
  integer("batch_size", t.batch_size);
  integer("patches_per_image", t.patches_per_image);
  num("lambda_l1", t.penalty.lambda_l1);
  num("w_p", t.penalty.w_p);
  setters["sign_convention"] = [&](const json& v) {
    t.penalty.sign_convention = as_enum<SignConvention>("sign_convention", v, parse_sign_convention);
  };
  setters["clamp_value"] = [&](const json& v) {
    if (v.is_null()) {
      t.penalty.clamp_value.reset();
    } else {
      t.penalty.clamp_value = as_number("clamp_value", v);
    }
  };
  integer("epochs", t.epochs);
  integer("f_save", t.f_save);
  integer("n_critic", t.n_critic);
  integer("patch_size", t.patch_size);
  integer("crop_size", t.crop_size);
  setters["seed"] = [&](const json& v) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<int64_t>() >= 0)) {
      throw ConfigError("seed", "expected a non-negative integer");
    }
    t.seed = v.get<uint64_t>();
  };
  num("beta1", t.beta1);
  num("beta2", t.beta2);
  num("grad_ema_decay", t.grad_ema_decay);
  num("collapse_var_threshold", t.collapse_var_threshold);
  num("collapse_std_threshold", t.collapse_std_threshold);
  integer("collapse_window", t.collapse_window);

  setters["gen_kind"] = [&](const json& v) { g.kind = as_enum<GeneratorKind>("gen_kind", v, parse_generator_kind); };
  integer("gen_base_channels", g.base_channels);
  integer("gen_res_blocks", g.num_res_blocks);
  integer("gen_down_steps", g.down_steps);
  setters["gen_activation"] = [&](const json& v) {
    g.output_activation = as_enum<OutputActivation>("gen_activation", v, parse_output_activation);
  };
  num("gen_leaky_slope", g.leaky_slope);
  num("gen_stub_level", g.stub_level);

  integer("dis_in_channels", d.in_channels);
  integer("dis_base_channels", d.base_channels);
  integer("dis_max_channels", d.max_channels);
  setters["dis_down_steps"] = [&](const json& v) {
    d.down_steps = as_integer("dis_down_steps", v);
    dis_depth_given = true;
  };
  num("dis_leaky_slope", d.leaky_slope);

  num("metric_dynamic_range", m.dynamic_range);
  num("metric_k1", m.k1);
  num("metric_k2", m.k2);
  setters["ssim_window"] = [&](const json& v) { m.window = as_enum<SsimWindow>("ssim_window", v, parse_ssim_window); };
  integer("ssim_window_size", m.sliding_window_size);

  setters["manifest"] = [&](const json& v) { cfg.manifest = resolve_path(as_string("manifest", v), base_dir); };
  setters["output_dir"] = [&](const json& v) { cfg.output_dir = resolve_path(as_string("output_dir", v), base_dir); };
  setters["resume_from"] = [&](const json& v) {
    if (v.is_null()) {
      cfg.resume_from.reset();
    } else {
      cfg.resume_from = resolve_path(as_string("resume_from", v), base_dir);
    }
  };

  for (const auto& [key, value] : doc.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown key");
    it->second(value);
  }

  if (!dis_depth_given) {
    if (const auto depth = default_dis_down_steps(t.patch_size)) d.down_steps = *depth;
  }

  try {
    cfg.resolve();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key_for_message(e.what()), e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("malformed JSON: ") + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& g = cfg.generator;
  const auto& d = cfg.discriminator;
  const auto& m = cfg.metrics;
  json j = {
      {"regime", to_string(t.regime)},
      {"lr_gen", t.lr_gen},
      {"lr_dis", t.lr_dis},
      {"batch_size", t.batch_size},
      {"patches_per_image", t.patches_per_image},
      {"lambda_l1", t.penalty.lambda_l1},
      {"w_p", t.penalty.w_p},
      {"sign_convention", to_string(t.penalty.sign_convention)},
      {"clamp_value", t.penalty.clamp_value ? json(*t.penalty.clamp_value) : json(nullptr)},
      {"epochs", t.epochs},
      {"f_save", t.f_save},
      {"n_critic", t.n_critic},
      {"patch_size", t.patch_size},
      {"crop_size", t.crop_size},
      {"seed", t.seed},
      {"beta1", t.beta1},
      {"beta2", t.beta2},
      {"grad_ema_decay", t.grad_ema_decay},
      {"collapse_var_threshold", t.collapse_var_threshold},
      {"collapse_std_threshold", t.collapse_std_threshold},
      {"collapse_window", t.collapse_window},
      {"gen_kind", to_string(g.kind)},
      {"gen_base_channels", g.base_channels},
      {"gen_res_blocks", g.num_res_blocks},
      {"gen_down_steps", g.down_steps},
      {"gen_activation", to_string(g.output_activation)},
      {"gen_leaky_slope", g.leaky_slope},
      {"gen_stub_level", g.stub_level},
      {"dis_in_channels", d.in_channels},
      {"dis_base_channels", d.base_channels},
      {"dis_max_channels", d.max_channels},
      {"dis_down_steps", d.down_steps},
      {"dis_leaky_slope", d.leaky_slope},
      {"metric_dynamic_range", m.dynamic_range},
      {"metric_k1", m.k1},
      {"metric_k2", m.k2},
      {"ssim_window", ssim_window_name(m.window)},
      {"ssim_window_size", m.sliding_window_size},
      {"manifest", cfg.manifest.string()},
      {"output_dir", cfg.output_dir.string()},
      {"resume_from", cfg.resume_from ? json(cfg.resume_from->string()) : json(nullptr)},
  };
  return j;
}

json to_json(const GeneratorConfig& g) {
  return {{"patch_size", g.patch_size},
          {"base_channels", g.base_channels},
          {"num_res_blocks", g.num_res_blocks},
          {"down_steps", g.down_steps},
          {"output_activation", to_string(g.output_activation)},
          {"leaky_slope", g.leaky_slope},
          {"kind", to_string(g.kind)},
          {"stub_level", g.stub_level}};
}

json to_json(const DiscriminatorConfig& d) {
  return {{"patch_size", d.patch_size},     {"in_channels", d.in_channels},
          {"base_channels", d.base_channels}, {"max_channels", d.max_channels},
          {"down_steps", d.down_steps},     {"leaky_slope", d.leaky_slope}};
}

GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig g;
  g.patch_size = j.at("patch_size").get<int64_t>();
  g.base_channels = j.at("base_channels").get<int64_t>();
  g.num_res_blocks = j.at("num_res_blocks").get<int64_t>();
  g.down_steps = j.at("down_steps").get<int64_t>();
  g.output_activation = as_enum<OutputActivation>("output_activation", j.at("output_activation"),
                                                  parse_output_activation);
  g.leaky_slope = j.at("leaky_slope").get<double>();
  g.kind = as_enum<GeneratorKind>("kind", j.at("kind"), parse_generator_kind);
  g.stub_level = j.at("stub_level").get<double>();
  g.validate();
  return g;
}

DiscriminatorConfig discriminator_config_from_json(const json& j) {
  DiscriminatorConfig d;
  d.patch_size = j.at("patch_size").get<int64_t>();
  d.in_channels = j.at("in_channels").get<int64_t>();
  d.base_channels = j.at("base_channels").get<int64_t>();
  d.max_channels = j.at("max_channels").get<int64_t>();
  d.down_steps = j.at("down_steps").get<int64_t>();
  d.leaky_slope = j.at("leaky_slope").get<double>();
  d.validate();
  return d;
}

}  // namespace docdenoise
