#include "huvr/config/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "huvr/error.hpp"

namespace huvr::config {

namespace {

std::string normalize(const KeySpec& spec, const std::string& raw);

std::vector<std::string> variant_choices() {
  std::vector<std::string> out;
  for (auto v : hypernet::kLadder) out.push_back(hypernet::variant_name(v));
  return out;
}

std::vector<KeySpec> build_schema() {
  using T = ValueType;
  std::vector<KeySpec> s = {
      {"seed", T::integer, "0", {}, "model init and batch order"},

      {"model.image_size", T::integer, "32", {}, ""},
      {"model.patch_size", T::integer, "8", {}, ""},
      {"model.d_vit", T::integer, "64", {}, ""},
      {"model.n_enc_blocks", T::integer, "4", {}, ""},
      {"model.enc_heads", T::integer, "4", {}, ""},
      {"model.d_t", T::integer, "16", {}, "TinTok width"},
      {"model.d_dec", T::integer, "64", {}, ""},
      {"model.n_dec_blocks", T::integer, "2", {}, ""},
      {"model.dec_heads", T::integer, "4", {}, ""},
      {"model.decoder_attention", T::boolean, "true", {}, "false = residual MLP decoder"},
      {"model.rope", T::boolean, "true", {}, ""},
      {"model.weight_tokens", T::integer, "8", {}, "weight-token variants only"},
      {"model.variant", T::choice, "plus_decoder", variant_choices(), ""},
      {"model.dtype", T::choice, "f32", {"f32", "f64"}, ""},
      {"model.inr.pos_dim", T::integer, "32", {}, ""},
      {"model.inr.n_mlp_layers", T::integer, "3", {}, ""},
      {"model.inr.mlp_dim", T::integer, "64", {}, ""},
      {"model.inr.coord_stride", T::integer, "4", {}, "also the upscale factor"},
      {"model.inr.modulated_layer", T::integer, "2", {}, "1-based"},
      {"model.distill.enabled", T::boolean, "false", {}, "build distillation heads"},
      {"model.distill.alpha_g_enc", T::real, "2", {}, ""},
      {"model.distill.alpha_p_enc", T::real, "2", {}, ""},
      {"model.distill.alpha_g_dec", T::real, "0.5", {}, ""},
      {"model.distill.alpha_p_dec", T::real, "0.5", {}, ""},
      {"model.distill.teacher_dim", T::integer, "32", {}, ""},

      {"train.lr_base", T::real, "0.0005", {}, "lr = lr_base * B / 256"},
      {"train.batch_size", T::integer, "16", {}, ""},
      {"train.epochs", T::integer, "10", {}, ""},
      {"train.max_steps", T::integer, "0", {}, "nonzero overrides epochs"},
      {"train.warmup_epochs", T::real, "5", {}, "used when epochs >= 50"},
      {"train.clip_norm", T::real, "0.01", {}, ""},
      {"train.weight_decay", T::real, "0.05", {}, ""},
      {"train.micro_batch", T::integer, "0", {}, ""},
      {"train.augment", T::boolean, "true", {}, ""},
      {"train.crop_scale_min", T::real, "0.2", {}, ""},
      {"train.crop_scale_max", T::real, "1", {}, ""},
      {"train.crop_ratio_min", T::real, "0.75", {}, ""},
      {"train.crop_ratio_max", T::real, "1.3333333333333333", {}, ""},
      {"train.loss_recon", T::boolean, "true", {}, "pixel MSE"},
      {"train.loss_ssim", T::boolean, "false", {}, ""},
      {"train.lambda_ssim", T::real, "0.1", {}, ""},
      {"train.loss_distill", T::boolean, "false", {}, ""},
      {"train.eval_every", T::integer, "1", {}, "epochs; 0 disables"},
      {"train.val_limit", T::integer, "0", {}, ""},
      {"train.checkpoint_every", T::integer, "0", {}, "epochs; 0 = final only"},

      {"data.source", T::choice, "shapes", {"shapes", "dir"}, ""},
      {"data.dir", T::text, "", {}, "root/<class>/<image>"},
      {"data.val_dir", T::text, "", {}, "optional separate validation set"},
      {"data.shapes_count", T::integer, "1000", {}, ""},
      {"data.shapes_classes", T::integer, "8", {}, ""},
      {"data.shapes_seed", T::integer, "0", {}, ""},
      {"data.n_train", T::integer, "800", {}, "0 = no held-out split"},
      {"data.split_seed", T::integer, "0", {}, ""},

      {"teacher.source", T::choice, "random", {"none", "random", "file"}, ""},
      {"teacher.file", T::text, "", {}, ""},
      {"teacher.seed", T::integer, "0", {}, ""},
      {"teacher.gain", T::real, "0.3", {}, ""},

      {"probe.source", T::choice, "encoder", {"encoder", "tintok", "decoder"}, ""},
      {"probe.pooling", T::choice, "tokens", {"global", "patch_mean", "concat", "tokens"}, ""},
      {"probe.steps", T::integer, "500", {}, ""},
      {"probe.lr", T::real, "0.01", {}, ""},
      {"probe.weight_decay", T::real, "0.0001", {}, ""},

      {"ablation.variants", T::text, "", {}, "comma list; empty = whole ladder"},
      {"ablation.copy_margin_db", T::real, "3", {}, ""},
      {"ablation.budget_seconds", T::real, "1800", {}, "declared wall-clock budget"},
  };
  std::sort(s.begin(), s.end(), [](const KeySpec& a, const KeySpec& b) { return a.key < b.key; });
  for (auto& k : s) k.fallback = normalize(k, k.fallback);
  return s;
}

const KeySpec* find_spec(const std::string& key) {
  const auto& s = schema();
  auto it = std::lower_bound(s.begin(), s.end(), key, [](const KeySpec& a, const std::string& k) { return a.key < k; });
  return it != s.end() && it->key == key ? &*it : nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Canonical form of `value` for `spec`, or ConfigError.
std::string normalize(const KeySpec& spec, const std::string& raw) {
  const std::string v = trim(raw);
  auto bad = [&](const std::string& why) -> ConfigError {
    return ConfigError(spec.key + ": " + why + " (got '" + v + "')");
  };
  switch (spec.type) {
    case ValueType::integer: {
      std::uint64_t x = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (v.empty() || ec != std::errc() || p != v.data() + v.size()) throw bad("expected a non-negative integer");
      return std::to_string(x);
    }
    case ValueType::real: {
      if (v.empty()) throw bad("expected a number");
      char* end = nullptr;
      const double x = std::strtod(v.c_str(), &end);
      if (end != v.c_str() + v.size() || !std::isfinite(x)) throw bad("expected a finite number");
      return fmt_real(x);
    }
    case ValueType::boolean:
      if (v == "true" || v == "1" || v == "yes" || v == "on") return "true";
      if (v == "false" || v == "0" || v == "no" || v == "off") return "false";
      throw bad("expected true or false");
    case ValueType::choice:
      if (std::find(spec.choices.begin(), spec.choices.end(), v) == spec.choices.end()) {
        std::string all;
        for (const auto& c : spec.choices) all += (all.empty() ? "" : ", ") + c;
        throw bad("expected one of " + all);
      }
      return v;
    case ValueType::text:
      return v;
  }
  return v;
}

}  // namespace

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> s = build_schema();
  return s;
}

RunConfig::RunConfig() {
  for (const auto& k : schema()) values_[k.key] = k.fallback;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_spec(key);
  if (!spec) throw ConfigError("unknown config key '" + key + "'");
  if (value.find('\n') != std::string::npos) throw ConfigError(key + ": value contains a newline");
  values_[key] = normalize(*spec, value);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(n) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' repeated");
    try {
      set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  merge_text(ss.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const { return std::stoull(get(key)); }
double RunConfig::get_real(const std::string& key) const { return std::strtod(get(key).c_str(), nullptr); }
bool RunConfig::get_bool(const std::string& key) const { return get(key) == "true"; }

std::string RunConfig::canonical_text() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
  return s;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig rc;
  rc.merge_text(text, "<embedded>");
  return rc;
}

hypernet::HuvrConfig model_config(const RunConfig& rc) {
  auto c = hypernet::HuvrConfig::desk();
  c.image_size = rc.get_uint("model.image_size");
  c.patch_size = rc.get_uint("model.patch_size");
  c.d_vit = rc.get_uint("model.d_vit");
  c.n_enc_blocks = rc.get_uint("model.n_enc_blocks");
  c.enc_heads = rc.get_uint("model.enc_heads");
  c.d_t = rc.get_uint("model.d_t");
  c.d_dec = rc.get_uint("model.d_dec");
  c.n_dec_blocks = rc.get_uint("model.n_dec_blocks");
  c.dec_heads = rc.get_uint("model.dec_heads");
  c.decoder_attention = rc.get_bool("model.decoder_attention");
  c.rope = rc.get_bool("model.rope");
  c.weight_tokens = rc.get_uint("model.weight_tokens");
  c.variant = hypernet::parse_variant(rc.get("model.variant"));
  c.dtype = rc.get("model.dtype") == "f64" ? ad::DType::f64 : ad::DType::f32;
  c.inr.pos_dim = rc.get_uint("model.inr.pos_dim");
  c.inr.n_mlp_layers = rc.get_uint("model.inr.n_mlp_layers");
  c.inr.mlp_dim = rc.get_uint("model.inr.mlp_dim");
  c.inr.coord_stride = rc.get_uint("model.inr.coord_stride");
  c.inr.upscale_factor = c.inr.coord_stride;
  c.inr.modulated_layer = rc.get_uint("model.inr.modulated_layer");
  c.inr.patch_size = c.patch_size;
  c.distill.enabled = rc.get_bool("model.distill.enabled");
  c.distill.alpha = {rc.get_real("model.distill.alpha_g_enc"), rc.get_real("model.distill.alpha_p_enc"),
                     rc.get_real("model.distill.alpha_g_dec"), rc.get_real("model.distill.alpha_p_dec")};
  c.distill.teacher_dim = rc.get_uint("model.distill.teacher_dim");
  c.validate();
  return c;
}

trainer::TrainConfig train_config(const RunConfig& rc) {
  trainer::TrainConfig t;
  t.lr_base = rc.get_real("train.lr_base");
  t.batch_size = rc.get_uint("train.batch_size");
  t.epochs = rc.get_uint("train.epochs");
  t.max_steps = rc.get_uint("train.max_steps");
  t.warmup_epochs = rc.get_real("train.warmup_epochs");
  t.clip_norm = rc.get_real("train.clip_norm");
  t.weight_decay = rc.get_real("train.weight_decay");
  t.micro_batch = rc.get_uint("train.micro_batch");
  t.augment = rc.get_bool("train.augment");
  t.crop.scale_min = rc.get_real("train.crop_scale_min");
  t.crop.scale_max = rc.get_real("train.crop_scale_max");
  t.crop.ratio_min = rc.get_real("train.crop_ratio_min");
  t.crop.ratio_max = rc.get_real("train.crop_ratio_max");
  t.loss.recon = rc.get_bool("train.loss_recon");
  t.loss.ssim = rc.get_bool("train.loss_ssim");
  t.loss.lambda_ssim = rc.get_real("train.lambda_ssim");
  t.loss.distill = rc.get_bool("train.loss_distill");
  t.eval_every = rc.get_uint("train.eval_every");
  t.val_limit = rc.get_uint("train.val_limit");
  t.checkpoint_every = rc.get_uint("train.checkpoint_every");
  t.seed = rc.get_uint("seed");
  t.validate();
  return t;
}

eval::ProbeConfig probe_config(const RunConfig& rc) {
  eval::ProbeConfig p;
  p.steps = rc.get_uint("probe.steps");
  p.lr = rc.get_real("probe.lr");
  p.weight_decay = rc.get_real("probe.weight_decay");
  return p;
}

DataSplit load_data(const RunConfig& rc) {
  data::Dataset all;
  if (rc.get("data.source") == "shapes") {
    data::ShapesSpec sp;
    sp.count = rc.get_uint("data.shapes_count");
    sp.classes = rc.get_uint("data.shapes_classes");
    sp.resolution = rc.get_uint("model.image_size");
    sp.seed = rc.get_uint("data.shapes_seed");
    all = data::synth_shapes(sp);
  } else {
    if (rc.get("data.dir").empty()) throw ConfigError("data.source=dir needs data.dir");
    all = data::load_image_directory(rc.get("data.dir"));
  }
  const std::size_t side = rc.get_uint("model.image_size");
  if (all.images.front().height() != side || all.images.front().width() != side)
    throw DataError("dataset images are " + std::to_string(all.images.front().height()) + "x" +
                    std::to_string(all.images.front().width()) + ", model.image_size is " + std::to_string(side));
  DataSplit out;
  if (!rc.get("data.val_dir").empty()) {
    out.train = std::move(all);
    out.val = data::load_image_directory(rc.get("data.val_dir"));
    return out;
  }
  const std::size_t n_train = rc.get_uint("data.n_train");
  if (n_train == 0) {
    out.train = std::move(all);
    return out;
  }
  data::split(all, n_train, rc.get_uint("data.split_seed"), out.train, out.val);
  return out;
}

std::unique_ptr<data::TeacherSource> make_teacher(const RunConfig& rc) {
  const std::string& src = rc.get("teacher.source");
  if (src == "none") return nullptr;
  if (src == "file") {
    if (rc.get("teacher.file").empty()) throw ConfigError("teacher.source=file needs teacher.file");
    return std::make_unique<data::FileTeacher>(data::FileTeacher::open(rc.get("teacher.file")));
  }
  return std::make_unique<data::FrozenRandomTeacher>(rc.get_uint("teacher.seed"), rc.get_uint("model.image_size"),
                                                     rc.get_uint("model.patch_size"),
                                                     rc.get_uint("model.distill.teacher_dim"),
                                                     rc.get_real("teacher.gain"));
}

}  // namespace huvr::config
