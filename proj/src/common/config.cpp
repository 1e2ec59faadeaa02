// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/config.hpp"

#include <charconv>
#include <functional>
#include <cmath>
#include <sstream>
#include <type_traits>

#include "carat/error.hpp"
#include "carat/fileio.hpp"

namespace carat {

std::string_view to_string(Precision p) { return p == Precision::standard ? "standard" : "verify"; }

std::string_view to_string(FusionKind k) {
  switch (k) {
    case FusionKind::alignment: return "alignment";
    case FusionKind::aggregation: return "aggregation";
    case FusionKind::reconstruction_simplified: return "reconstruction-simplified";
  }
  return "?";
}

FusionKind parse_fusion_kind(std::string_view s) {
  if (s == "alignment") return FusionKind::alignment;
  if (s == "aggregation") return FusionKind::aggregation;
  if (s == "reconstruction-simplified" || s == "reconstruction") return FusionKind::reconstruction_simplified;
  throw ConfigError("fusion.kind", "expected alignment | aggregation | reconstruction-simplified");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto s = trim(text);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(std::string(key), "cannot parse '" + s + "' as a number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError(std::string(key), "must be finite");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const auto s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(std::string(key), "expected a boolean, got '" + s + "'");
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  const auto s = trim(text);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    out.push_back(parse_number<T>(key, std::string_view(s).substr(start, end - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

// A field binding: parse into / format out of one RunConfig member.
struct FieldOps {
  std::function<void(std::string_view key, std::string_view value)> set;
  std::function<std::string()> get;
};

template <typename T>
FieldOps bind(T& ref) {
  FieldOps ops;
  if constexpr (std::is_same_v<T, bool>) {
    ops.set = [&ref](std::string_view k, std::string_view v) { ref = parse_bool(k, v); };
    ops.get = [&ref] { return std::string(ref ? "true" : "false"); };
  } else if constexpr (std::is_same_v<T, double>) {
    ops.set = [&ref](std::string_view k, std::string_view v) { ref = parse_number<double>(k, v); };
    ops.get = [&ref] { return format_double(ref); };
  } else if constexpr (std::is_integral_v<T>) {
    ops.set = [&ref](std::string_view k, std::string_view v) { ref = parse_number<T>(k, v); };
    ops.get = [&ref] { return std::to_string(ref); };
  } else if constexpr (std::is_same_v<T, std::string>) {
    ops.set = [&ref](std::string_view, std::string_view v) { ref = trim(v); };
    ops.get = [&ref] { return ref; };
  } else if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<int>>) {
    ops.set = [&ref](std::string_view k, std::string_view v) { ref = parse_list<typename T::value_type>(k, v); };
    ops.get = [&ref] { return format_list(ref); };
  } else {
    static_assert(sizeof(T) == 0, "unsupported config field type");
  }
  return ops;
}

template <typename F>
void visit_fields(RunConfig& c, F&& f) {
  f("preset", bind(c.preset));
  {
    FieldOps seed;
    seed.set = [&c](std::string_view k, std::string_view v) { c.seed = parse_number<std::uint64_t>(k, v); };
    seed.get = [&c] { return c.seed ? std::to_string(*c.seed) : std::string(); };
    f("seed", std::move(seed));
  }
  {
    FieldOps prec;
    prec.set = [&c](std::string_view k, std::string_view v) {
      const auto s = trim(v);
      if (s == "standard") c.precision = Precision::standard;
      else if (s == "verify") c.precision = Precision::verify;
      else throw ConfigError(std::string(k), "expected standard | verify");
    };
    prec.get = [&c] { return std::string(to_string(c.precision)); };
    f("precision", std::move(prec));
  }
  f("model.d", bind(c.model.d));
  f("model.d_z", bind(c.model.d_z));
  f("model.heads", bind(c.model.heads));
  f("model.ffn_mult", bind(c.model.ffn_mult));
  f("model.layers_t", bind(c.model.layers[0]));
  f("model.layers_v", bind(c.model.layers[1]));
  f("model.layers_a", bind(c.model.layers[2]));
  f("model.agg_hidden_layers", bind(c.model.agg_hidden_layers));
  f("loss.gamma_o", bind(c.loss.gamma_o));
  f("loss.gamma_alpha", bind(c.loss.gamma_alpha));
  f("loss.gamma_beta", bind(c.loss.gamma_beta));
  f("loss.gamma_sf", bind(c.loss.gamma_sf));
  f("loss.gamma_s", bind(c.loss.gamma_s));
  f("loss.gamma_r", bind(c.loss.gamma_r));
  f("loss.rec_squared", bind(c.loss.rec_squared));
  f("contrastive.tau", bind(c.contrastive.tau));
  f("contrastive.queue", bind(c.contrastive.queue_capacity));
  f("contrastive.phi", bind(c.contrastive.phi));
  f("optim.lr", bind(c.optim.lr));
  f("optim.beta1", bind(c.optim.beta1));
  f("optim.beta2", bind(c.optim.beta2));
  f("optim.eps", bind(c.optim.eps));
  f("optim.warmup_frac", bind(c.optim.warmup_frac));
  f("train.epochs", bind(c.train.epochs));
  f("train.batch", bind(c.train.batch));
  f("ablation.use_mrm_agg_only", bind(c.ablation.use_mrm_agg_only));
  f("ablation.use_mrm_only", bind(c.ablation.use_mrm_only));
  f("ablation.use_agg_only", bind(c.ablation.use_agg_only));
  f("ablation.disable_scl", bind(c.ablation.disable_scl));
  f("ablation.disable_en_de", bind(c.ablation.disable_en_de));
  f("ablation.disable_rec_loss", bind(c.ablation.disable_rec_loss));
  f("ablation.disable_alpha_recon", bind(c.ablation.disable_alpha_recon));
  f("ablation.disable_beta_recon", bind(c.ablation.disable_beta_recon));
  f("ablation.disable_sws", bind(c.ablation.disable_sws));
  f("ablation.disable_mws", bind(c.ablation.disable_mws));
  f("ablation.whole_block_shuffle", bind(c.ablation.whole_block_shuffle));
  f("data.dir", bind(c.data.dir));
  f("data.train", bind(c.data.train));
  f("data.val", bind(c.data.val));
  f("data.test", bind(c.data.test));
  f("synth.n_train", bind(c.synth.n_train));
  f("synth.n_val", bind(c.synth.n_val));
  f("synth.n_test", bind(c.synth.n_test));
  f("synth.labels", bind(c.synth.num_labels));
  f("synth.seq_t", bind(c.synth.seq_len[0]));
  f("synth.seq_v", bind(c.synth.seq_len[1]));
  f("synth.seq_a", bind(c.synth.seq_len[2]));
  f("synth.dim_t", bind(c.synth.dims[0]));
  f("synth.dim_v", bind(c.synth.dims[1]));
  f("synth.dim_a", bind(c.synth.dims[2]));
  f("synth.priors", bind(c.synth.priors));
  f("synth.cooccurrence", bind(c.synth.cooccurrence));
  f("synth.preference", bind(c.synth.preference));
  f("synth.signal", bind(c.synth.signal));
  f("synth.noise", bind(c.synth.noise));
  f("synth.window_frac", bind(c.synth.window_frac));
  f("synth.min_len_frac", bind(c.synth.min_len_frac));
  f("synth.seed", bind(c.synth.seed));
  {
    FieldOps kind;
    kind.set = [&c](std::string_view, std::string_view v) { c.fusion = parse_fusion_kind(trim(v)); };
    kind.get = [&c] { return std::string(to_string(c.fusion)); };
    f("fusion.kind", std::move(kind));
  }
}

}  // namespace

void AblationConfig::validate() const {
  const int exclusive = int(use_mrm_agg_only) + int(use_mrm_only) + int(use_agg_only);
  if (exclusive > 1) {
    throw ConfigError("ablation", "use_mrm_agg_only, use_mrm_only and use_agg_only are mutually exclusive");
  }
  if (extraction_only() && (disable_scl || disable_en_de || disable_rec_loss || disable_alpha_recon ||
                            disable_beta_recon || disable_sws || disable_mws)) {
    throw ConfigError("ablation", "extraction-only variants drop fusion and shuffling; other switches do not apply");
  }
}

RunConfig RunConfig::from_preset(std::string_view name) {
  RunConfig c;
  if (name == "paper") {
    c.preset = "paper";
    c.model.d = 256;
    c.model.d_z = 64;
    c.model.layers = {6, 4, 4};
    c.contrastive.queue_capacity = 8192;
    c.optim.lr = 5e-5;
    c.train.batch = 64;
    c.train.epochs = 20;
    c.synth = mosei_like_spec(true);
    return c;
  }
  if (name == "desk") {
    c.preset = "desk";
    c.model.d = 32;
    c.model.d_z = 8;
    c.model.heads = 4;
    c.model.layers = {1, 1, 1};
    c.contrastive.queue_capacity = 1024;
    c.optim.lr = 2e-3;
    c.train.batch = 32;
    c.train.epochs = 10;
    // The summed contrastive and reconstruction terms swamp the classifier at
    // this scale; unit weights collapse U_o to a sample-independent constant.
    c.loss.gamma_s = 1e-5;
    c.loss.gamma_r = 0.01;
    return c;
  }
  throw ConfigError("preset", "expected desk | paper");
}

void RunConfig::apply(std::string_view key, std::string_view value) {
  bool found = false;
  visit_fields(*this, [&](std::string_view k, FieldOps ops) {
    if (k == key) {
      ops.set(k, value);
      found = true;
    }
  });
  if (!found) throw ConfigError(std::string(key), "unknown key");
}

void RunConfig::apply(const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) apply(k, v);
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  RunConfig copy = *this;
  visit_fields(copy, [&](std::string_view k, FieldOps ops) { out.emplace_back(std::string(k), ops.get()); });
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : entries()) j[k] = v;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "config echo must be an object");
  RunConfig cfg = from_preset(j.value("preset", std::string("desk")));
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw ConfigError(k, "config echo values must be strings");
    const auto text = v.get<std::string>();
    if (k == "preset" || (k == "seed" && text.empty())) continue;
    cfg.apply(k, text);
  }
  return cfg;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

void RunConfig::validate() const {
  if (model.d < 1) throw ConfigError("model.d", "must be >= 1");
  if (model.d_z < 1) throw ConfigError("model.d_z", "must be >= 1");
  if (model.heads < 1 || model.d % model.heads != 0) throw ConfigError("model.heads", "must divide model.d");
  if (model.ffn_mult < 1) throw ConfigError("model.ffn_mult", "must be >= 1");
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (model.layers[m] < 1) throw ConfigError("model.layers_" + std::string(modality_key(m)), "must be >= 1");
  }
  if (model.agg_hidden_layers < 0) throw ConfigError("model.agg_hidden_layers", "must be >= 0");
  const std::pair<const char*, double> gammas[] = {
      {"loss.gamma_o", loss.gamma_o},   {"loss.gamma_alpha", loss.gamma_alpha}, {"loss.gamma_beta", loss.gamma_beta},
      {"loss.gamma_sf", loss.gamma_sf}, {"loss.gamma_s", loss.gamma_s},         {"loss.gamma_r", loss.gamma_r}};
  for (const auto& [key, g] : gammas) {
    if (!(g >= 0.0)) throw ConfigError(key, "must be >= 0");
  }
  if (!(contrastive.tau > 0.0)) throw ConfigError("contrastive.tau", "must be > 0");
  if (contrastive.queue_capacity < 0) throw ConfigError("contrastive.queue", "must be >= 0");
  if (!(contrastive.phi >= 0.0 && contrastive.phi <= 1.0)) throw ConfigError("contrastive.phi", "must lie in [0, 1]");
  if (!(optim.lr >= 0.0)) throw ConfigError("optim.lr", "must be >= 0");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0)) throw ConfigError("optim.beta1", "must lie in [0, 1)");
  if (!(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) throw ConfigError("optim.beta2", "must lie in [0, 1)");
  if (!(optim.eps > 0.0)) throw ConfigError("optim.eps", "must be > 0");
  if (!(optim.warmup_frac >= 0.0 && optim.warmup_frac < 1.0)) throw ConfigError("optim.warmup_frac", "must lie in [0, 1)");
  if (train.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (train.batch < 1) throw ConfigError("train.batch", "must be >= 1");
  ablation.validate();
  if (uses_dataset_files()) {
    for (const char* split : {"train", "val", "test"}) {
      const auto p = split_path(split);
      if (!std::filesystem::exists(p)) throw ConfigError(std::string("data.") + split, "file not found: " + p.string());
    }
  } else {
    synth.validate();
  }
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ConfigError("seed", "required (set it in the config or pass --seed)");
  return *seed;
}

std::filesystem::path RunConfig::split_path(std::string_view split) const {
  const std::string* explicit_path = split == "train" ? &data.train : split == "val" ? &data.val : &data.test;
  if (!explicit_path->empty()) return *explicit_path;
  return std::filesystem::path(data.dir) / (std::string(split) + ".jsonl");
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string section;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    auto cut = raw.find_first_of("#;");
    const auto line = trim(std::string_view(raw).substr(0, cut));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    auto key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    if (!section.empty()) key = section + "." + key;
    out.emplace_back(std::move(key), trim(std::string_view(line).substr(eq + 1)));
  }
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path, std::string_view preset_override) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError("--config", e.what());
  }
  const auto kv = parse_config_text(text);
  std::string chosen = "desk";
  for (const auto& [k, v] : kv) {
    if (k == "preset") chosen = v;
  }
  if (!preset_override.empty()) chosen = preset_override;
  RunConfig cfg = RunConfig::from_preset(chosen);
  for (const auto& [k, v] : kv) {
    if (k != "preset") cfg.apply(k, v);
  }
  return cfg;
}

}  // namespace carat
