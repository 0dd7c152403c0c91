#include "ldm4ts/pipeline/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/numerics/rng.hpp"

namespace ldm4ts::pipeline {

std::vector<Field> fields(Config& c) {
  return {
      {"data.path", &c.data_path},
      {"data.name", &c.data_name},
      {"data.description", &c.description},
      {"data.seq_len", &c.seq_len},
      {"data.label_len", &c.label_len},
      {"data.pred_len", &c.pred_len},
      {"data.scale", &c.scale},
      {"data.few_shot", &c.few_shot},
      {"data.context_overlap", &c.context_overlap},
      {"data.train_rows", &c.train_rows},
      {"data.val_rows", &c.val_rows},
      {"data.test_rows", &c.test_rows},
      {"vision.image_size", &c.image_size},
      {"vision.period", &c.period},
      {"vision.norm_const", &c.norm_const},
      {"vision.gaf", &c.gaf},
      {"vision.rp", &c.rp},
      {"vision.rp_embed", &c.rp_embed},
      {"vision.rp_delay", &c.rp_delay},
      {"vision.rp_threshold", &c.rp_threshold},
      {"vision.grayscale", &c.grayscale},
      {"vision.save_images", &c.save_images},
      {"diffusion.num_timesteps", &c.num_timesteps},
      {"diffusion.inference_steps", &c.inference_steps},
      {"diffusion.beta_start", &c.beta_start},
      {"diffusion.beta_end", &c.beta_end},
      {"diffusion.schedule", &c.schedule},
      {"diffusion.use_ddim", &c.use_ddim},
      {"diffusion.latent_scale", &c.latent_scale},
      {"diffusion.calibrate_scale", &c.calibrate_scale},
      {"model.d_model", &c.d_model},
      {"model.n_heads", &c.n_heads},
      {"model.e_layers", &c.e_layers},
      {"model.d_layers", &c.d_layers},
      {"model.d_ff", &c.d_ff},
      {"model.patch_len", &c.patch_len},
      {"model.stride", &c.stride},
      {"model.padding", &c.padding},
      {"model.d_fusion", &c.d_fusion},
      {"model.d_ldm", &c.d_ldm},
      {"model.unet_layers", &c.unet_layers},
      {"model.vae_channels", &c.vae_channels},
      {"model.latent_channels", &c.latent_channels},
      {"model.vision_channels", &c.vision_channels},
      {"model.fusion_uses_latent", &c.fusion_uses_latent},
      {"model.output_type", &c.output_type},
      {"train.batch_size", &c.batch_size},
      {"train.learning_rate", &c.learning_rate},
      {"train.epochs", &c.epochs},
      {"train.patience", &c.patience},
      {"train.max_steps", &c.max_steps},
      {"train.loss", &c.loss},
      {"train.lambda1", &c.lambda1},
      {"train.lambda2", &c.lambda2},
      {"train.lambda3", &c.lambda3},
      {"train.freeze_ldm", &c.freeze_ldm},
      {"train.vae_epochs", &c.vae_epochs},
      {"train.vae_batch_size", &c.vae_batch_size},
      {"train.vae_images", &c.vae_images},
      {"train.vae_patience", &c.vae_patience},
      {"train.vae_lr", &c.vae_lr},
      {"train.vae_kl_weight", &c.vae_kl_weight},
      {"train.log_every", &c.log_every},
      {"seed", &c.seed},
  };
}

namespace {

Field find(Config& c, const std::string& key) {
  for (auto& f : fields(c))
    if (f.key == key) return f;
  throw ConfigError("unknown config key \"" + key + "\"");
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

nlohmann::ordered_json to_json(const Config& cc) {
  Config c = cc;
  nlohmann::ordered_json j;
  for (auto& f : fields(c)) std::visit([&](auto* p) { j[f.key] = *p; }, f.ptr);
  return j;
}

std::string value_string(const Config& cc, const std::string& key) {
  Config c = cc;
  Field f = find(c, key);
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) return *p;
        else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
        else if constexpr (std::is_same_v<T, double>) return fmt_double(*p);
        else return std::to_string(*p);
      },
      f.ptr);
}

void set_json(Config& c, const std::string& key, const nlohmann::json& v) {
  Field f = find(c, key);
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          if (!v.is_string()) throw ConfigError("config key \"" + key + "\" expects a string");
          *p = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, bool>) {
          if (!v.is_boolean()) throw ConfigError("config key \"" + key + "\" expects true or false");
          *p = v.get<bool>();
        } else if constexpr (std::is_same_v<T, double>) {
          if (!v.is_number()) throw ConfigError("config key \"" + key + "\" expects a number");
          *p = v.get<double>();
        } else {
          if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            throw ConfigError("config key \"" + key + "\" expects a non-negative integer");
          }
          *p = v.get<std::size_t>();
        }
      },
      f.ptr);
}

void set_string(Config& c, const std::string& key, const std::string& s) {
  Field f = find(c, key);
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = s;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (s == "true" || s == "1") *p = true;
          else if (s == "false" || s == "0") *p = false;
          else throw ConfigError("config key \"" + key + "\" expects true or false, got \"" + s + "\"");
        } else if constexpr (std::is_same_v<T, double>) {
          double v = 0;
          auto r = std::from_chars(s.data(), s.data() + s.size(), v);
          if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
            throw ConfigError("config key \"" + key + "\" expects a number, got \"" + s + "\"");
          }
          *p = v;
        } else {
          std::size_t v = 0;
          auto r = std::from_chars(s.data(), s.data() + s.size(), v);
          if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
            throw ConfigError("config key \"" + key + "\" expects a non-negative integer, got \"" + s + "\"");
          }
          *p = v;
        }
      },
      f.ptr);
}

void apply_file(Config& c, const std::string& path, Provenance* prov) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    set_json(c, it.key(), it.value());
    if (prov) (*prov)[it.key()] = "file";
  }
}

Config from_json(const nlohmann::json& j) {
  Config c;
  for (auto it = j.begin(); it != j.end(); ++it) set_json(c, it.key(), it.value());
  return c;
}

void validate(const Config& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(c.seq_len >= 2, "data.seq_len must be >= 2");
  need(c.pred_len >= 1, "data.pred_len must be >= 1");
  need(c.label_len <= c.seq_len, "data.label_len must not exceed data.seq_len");
  need(c.few_shot > 0.0 && c.few_shot <= 1.0, "data.few_shot must be in (0, 1]");
  need(c.period >= 1, "vision.period must be >= 1");
  need(c.norm_const > 0.0, "vision.norm_const must be positive");
  need(c.gaf == "summation" || c.gaf == "difference", "vision.gaf must be summation or difference");
  need(c.rp == "gaussian" || c.rp == "heaviside", "vision.rp must be gaussian or heaviside");
  need(c.num_timesteps >= 1, "diffusion.num_timesteps must be >= 1");
  need(c.inference_steps >= 1 && c.inference_steps <= c.num_timesteps,
       "diffusion.inference_steps must be in [1, diffusion.num_timesteps]");
  need(c.beta_start > 0.0 && c.beta_start <= c.beta_end && c.beta_end < 1.0,
       "diffusion betas need 0 < beta_start <= beta_end < 1");
  need(c.schedule == "linear" || c.schedule == "scaled_linear", "diffusion.schedule must be linear or scaled_linear");
  need(c.latent_scale > 0.0, "diffusion.latent_scale must be positive");
  need(c.n_heads >= 1 && c.d_model % c.n_heads == 0, "model.n_heads must divide model.d_model");
  need(c.d_ldm >= 2 && c.d_ldm % c.n_heads == 0, "model.n_heads must divide model.d_ldm");
  need(c.patch_len >= 1 && c.stride >= 1, "model.patch_len and model.stride must be >= 1");
  need(c.seq_len + c.padding >= c.patch_len, "data.seq_len + model.padding must cover one patch");
  need(c.unet_layers >= 1, "model.unet_layers must be >= 1");
  need(c.image_size >= 8 && c.image_size % 8 == 0, "vision.image_size must be a positive multiple of 8");
  need((c.image_size / 8) % (std::size_t{1} << c.unet_layers) == 0,
       "latent size must be divisible by 2^model.unet_layers");
  need(c.vae_channels >= 1 && c.latent_channels >= 1 && c.vision_channels >= 1 && c.d_fusion >= 1,
       "channel widths must be positive");
  need(c.batch_size >= 1 && c.vae_batch_size >= 1, "batch sizes must be >= 1");
  need(c.learning_rate > 0.0 && c.vae_lr > 0.0, "learning rates must be positive");
  need(c.epochs == 0 || c.patience <= c.epochs, "train.patience must not exceed train.epochs");
  need(c.patience >= 1 && c.vae_patience >= 1, "patience must be >= 1");
  need(c.lambda1 >= 0 && c.lambda2 >= 0 && c.lambda3 >= 0 && c.lambda1 + c.lambda2 + c.lambda3 > 0,
       "loss weights must be non-negative and not all zero");
  need(c.vae_kl_weight >= 0, "train.vae_kl_weight must be non-negative");
  need(c.loss == "MSE", "train.loss supports only MSE");
  need(c.log_every >= 1, "train.log_every must be >= 1");
  for (double v : {c.few_shot, c.norm_const, c.beta_start, c.beta_end, c.latent_scale, c.learning_rate, c.lambda1,
                   c.lambda2, c.lambda3, c.vae_lr, c.vae_kl_weight, c.rp_threshold})
    need(std::isfinite(v), "config values must be finite");
}

std::uint64_t config_hash(const Config& c) { return fnv1a64(to_json(c).dump()); }

std::vector<std::string> echo(const Config& cc, const Provenance& prov) {
  Config c = cc;
  std::vector<std::string> out;
  for (auto& f : fields(c)) {
    auto it = prov.find(f.key);
    out.push_back(f.key + " = " + value_string(c, f.key) + "  [" + (it == prov.end() ? "default" : it->second) + "]");
  }
  return out;
}

Config desk_config() {
  Config c;
  c.data_name = "synthetic";
  c.description = "two incommensurate sinusoids with a daily cycle plus noise";
  c.seq_len = 96;
  c.label_len = 48;
  c.pred_len = 24;
  c.period = 24;
  c.d_model = 64;
  c.d_ff = 128;
  c.n_heads = 8;
  c.d_fusion = 64;
  c.d_ldm = 32;
  c.vae_channels = 8;
  c.vision_channels = 8;
  c.epochs = 5;
  c.patience = 3;
  c.vae_epochs = 12;
  c.vae_batch_size = 16;
  c.vae_lr = 2e-3;
  c.vae_images = 512;
  return c;
}

}  // namespace ldm4ts::pipeline
