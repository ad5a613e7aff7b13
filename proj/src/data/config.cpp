#include "vaut/config.hpp"

#include <charconv>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace vaut {

void TrainConfig::validate() const {
  if (seq_len == 0 || batch_size == 0) throw ConfigError("train.seq_len and train.batch_size must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must be in (0, 1)");
}

void RunConfig::validate() const {
  model.validate();
  focal.validate();
  optimizer.validate();
  train.validate();
  data.validate();
  if (train.seq_len % model.tubelet.t != 0) {
    throw ConfigError("train.seq_len " + std::to_string(train.seq_len) + " is not a multiple of tubelet.t " +
                      std::to_string(model.tubelet.t));
  }
  if (train.seq_len / model.tubelet.t > model.encoder.max_temporal_positions) {
    throw ConfigError("train.seq_len / tubelet.t exceeds encoder.max_temporal_positions");
  }
  if (data.image_size % model.frame_multiple() != 0) {
    throw ConfigError("data.image_size " + std::to_string(data.image_size) + " must be a multiple of " +
                      std::to_string(model.frame_multiple()) + " for this backbone and tubelet");
  }
  if (!(eval.threshold > 0.0 && eval.threshold < 1.0)) throw ConfigError("eval.threshold must be in (0, 1)");
  if (eval.k < 2) throw ConfigError("eval.k must be >= 2");
  if (scheduler.t_0 == 0 || scheduler.t_mult == 0) throw ConfigError("scheduler.t_0 and t_mult must be positive");
  if (!(scheduler.eta_min >= 0.0) || !(eta_max() >= scheduler.eta_min)) {
    throw ConfigError("scheduler needs 0 <= eta_min <= eta_max");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    throw ConfigError("'" + s + "' is not a non-negative integer");
  }
  return v;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || !std::isfinite(v)) throw ConfigError("'" + s + "' is not a finite number");
  return v;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <std::unsigned_integral U>
  requires(!std::same_as<U, bool>)
void parse_into(const std::string& s, U& v) {
  v = static_cast<U>(parse_uint(s));
}
void parse_into(const std::string& s, double& v) { v = parse_double(s); }
void parse_into(const std::string& s, bool& v) {
  if (s == "true" || s == "1") v = true;
  else if (s == "false" || s == "0") v = false;
  else throw ConfigError("'" + s + "' is not a boolean (true/false)");
}
void parse_into(const std::string& s, std::array<std::size_t, kNumStages>& v) {
  const auto items = split_list(s);
  if (items.size() != kNumStages) throw ConfigError("expected 4 comma-separated integers, got '" + s + "'");
  for (std::size_t i = 0; i < kNumStages; ++i) v[i] = static_cast<std::size_t>(parse_uint(items[i]));
}
void parse_into(const std::string& s, std::vector<double>& v) {
  v.clear();
  for (const auto& item : split_list(s)) v.push_back(parse_double(item));
}
void parse_into(const std::string& s, std::optional<double>& v) {
  if (s == "auto") v.reset();
  else v = parse_double(s);
}

template <std::unsigned_integral U>
  requires(!std::same_as<U, bool>)
std::string format_value(U v) {
  return std::to_string(v);
}
std::string format_value(double v) { return fmt_double(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::array<std::size_t, kNumStages>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}
std::string format_value(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}
std::string format_value(const std::optional<double>& v) { return v ? fmt_double(*v) : "auto"; }

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename V>
Field field(V& (*ref)(RunConfig&)) {
  return {[ref](RunConfig& c, const std::string& s) { parse_into(s, ref(c)); },
          [ref](const RunConfig& c) { return format_value(ref(const_cast<RunConfig&>(c))); }};
}

#define VAUT_FIELD(key, member) \
  {key, field(+[](RunConfig& c) -> auto& { return c.member; })}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      VAUT_FIELD("backbone.stem_width", model.backbone.stem_width),
      VAUT_FIELD("backbone.stage_depths", model.backbone.stage_depths),
      VAUT_FIELD("backbone.stage_widths", model.backbone.stage_widths),
      VAUT_FIELD("backbone.group_width", model.backbone.group_width),
      VAUT_FIELD("backbone.se_ratio", model.backbone.se_ratio),
      VAUT_FIELD("backbone.stage_strides", model.backbone.stage_strides),
      VAUT_FIELD("backbone.n_frozen_stages", model.backbone.n_frozen_stages),
      VAUT_FIELD("tubelet.t", model.tubelet.t),
      VAUT_FIELD("tubelet.h", model.tubelet.h),
      VAUT_FIELD("tubelet.w", model.tubelet.w),
      VAUT_FIELD("tubelet.embed_dim", model.tubelet.embed_dim),
      VAUT_FIELD("encoder.n_spatial_layers", model.encoder.n_spatial_layers),
      VAUT_FIELD("encoder.n_temporal_layers", model.encoder.n_temporal_layers),
      VAUT_FIELD("encoder.n_heads", model.encoder.n_heads),
      VAUT_FIELD("encoder.model_dim", model.encoder.model_dim),
      VAUT_FIELD("encoder.mlp_ratio", model.encoder.mlp_ratio),
      VAUT_FIELD("encoder.layer_budget", model.encoder.layer_budget),
      VAUT_FIELD("encoder.max_spatial_positions", model.encoder.max_spatial_positions),
      VAUT_FIELD("encoder.max_temporal_positions", model.encoder.max_temporal_positions),
      VAUT_FIELD("focal.alpha", focal.alpha),
      VAUT_FIELD("focal.gamma", focal.gamma),
      VAUT_FIELD("focal.au_weights", focal.au_weights),
      VAUT_FIELD("scheduler.eta_min", scheduler.eta_min),
      VAUT_FIELD("scheduler.eta_max", scheduler.eta_max),
      VAUT_FIELD("scheduler.t_0", scheduler.t_0),
      VAUT_FIELD("scheduler.t_mult", scheduler.t_mult),
      VAUT_FIELD("optimizer.lr", optimizer.lr),
      VAUT_FIELD("optimizer.momentum", optimizer.momentum),
      VAUT_FIELD("optimizer.max_grad_norm", optimizer.max_grad_norm),
      VAUT_FIELD("train.seq_len", train.seq_len),
      VAUT_FIELD("train.batch_size", train.batch_size),
      VAUT_FIELD("train.max_steps", train.max_steps),
      VAUT_FIELD("train.seed", train.seed),
      VAUT_FIELD("train.eval_every", train.eval_every),
      VAUT_FIELD("train.deterministic", train.deterministic),
      VAUT_FIELD("train.val_fraction", train.val_fraction),
      VAUT_FIELD("data.n_videos", data.n_videos),
      VAUT_FIELD("data.frames_per_video", data.frames_per_video),
      VAUT_FIELD("data.image_size", data.image_size),
      VAUT_FIELD("data.on_min", data.on_min),
      VAUT_FIELD("data.on_max", data.on_max),
      VAUT_FIELD("data.off_min", data.off_min),
      VAUT_FIELD("data.off_max", data.off_max),
      VAUT_FIELD("data.noise_std", data.noise_std),
      VAUT_FIELD("data.blob_amplitude", data.blob_amplitude),
      VAUT_FIELD("data.blob_sigma", data.blob_sigma),
      VAUT_FIELD("data.mask_fraction", data.mask_fraction),
      VAUT_FIELD("data.seed", data.seed),
      VAUT_FIELD("eval.threshold", eval.threshold),
      VAUT_FIELD("eval.k", eval.k),
  };
  return table;
}

#undef VAUT_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return &f;
  }
  return nullptr;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, f] : fields()) out.push_back(name);
  return out;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  try {
    f->set(config, value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

RunConfig parse_config(const std::string& text, const std::string& source, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++row;
    const std::string content = trim(line);
    if (content.empty() || content[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(row) + ": ";
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(content.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_config_value(base, key, trim(content.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace vaut
