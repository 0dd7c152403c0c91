#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace ldm4ts::pipeline {

struct Config {
  // data
  std::string data_path;
  std::string data_name = "ETTh1";
  std::string description = "The Electricity Transformer Temperature dataset, hourly load and oil temperature readings";
  std::size_t seq_len = 96;
  std::size_t label_len = 48;
  std::size_t pred_len = 96;
  bool scale = true;
  double few_shot = 1.0;
  bool context_overlap = false;
  std::size_t train_rows = 0, val_rows = 0, test_rows = 0;  // 0: dataset default

  // vision
  std::size_t image_size = 64;
  std::size_t period = 24;
  double norm_const = 0.4;
  std::string gaf = "summation";
  std::string rp = "gaussian";
  std::size_t rp_embed = 1, rp_delay = 1;
  double rp_threshold = -1.0;
  bool grayscale = true;
  bool save_images = false;

  // diffusion
  std::size_t num_timesteps = 300;
  std::size_t inference_steps = 50;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  std::string schedule = "scaled_linear";
  bool use_ddim = true;
  double latent_scale = 0.18215;
  bool calibrate_scale = true;

  // model
  std::size_t d_model = 256;
  std::size_t n_heads = 8;
  std::size_t e_layers = 2;
  std::size_t d_layers = 1;
  std::size_t d_ff = 768;
  std::size_t patch_len = 16;
  std::size_t stride = 8;
  std::size_t padding = 8;
  std::size_t d_fusion = 256;
  std::size_t d_ldm = 256;
  std::size_t unet_layers = 1;
  std::size_t vae_channels = 32;
  std::size_t latent_channels = 4;
  std::size_t vision_channels = 16;
  bool fusion_uses_latent = true;
  std::string output_type = "full";

  // training
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t epochs = 10;
  std::size_t patience = 3;
  std::size_t max_steps = 0;  // 0: no cap
  std::string loss = "MSE";
  double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 0.0;
  bool freeze_ldm = true;
  std::size_t vae_epochs = 10;
  std::size_t vae_batch_size = 32;
  std::size_t vae_images = 512;
  std::size_t vae_patience = 3;
  double vae_lr = 1e-3;
  double vae_kl_weight = 1e-6;
  std::size_t log_every = 10;
  std::size_t seed = 0;
};

using FieldPtr = std::variant<std::size_t*, double*, bool*, std::string*>;

struct Field {
  std::string key;
  FieldPtr ptr;
};

// Every configurable key in echo order.
std::vector<Field> fields(Config& c);

// Provenance per key: "default", "file", "override" or "flag".
using Provenance = std::map<std::string, std::string>;

nlohmann::ordered_json to_json(const Config& c);
std::string value_string(const Config& c, const std::string& key);

// Unknown keys and type mismatches raise ConfigError.
void set_json(Config& c, const std::string& key, const nlohmann::json& v);
void set_string(Config& c, const std::string& key, const std::string& v);

// Flat JSON object with dotted keys; missing file or bad JSON raise ConfigError.
void apply_file(Config& c, const std::string& path, Provenance* prov = nullptr);
Config from_json(const nlohmann::json& j);

void validate(const Config& c);
std::uint64_t config_hash(const Config& c);

// One "key = value  [provenance]" line per key.
std::vector<std::string> echo(const Config& c, const Provenance& prov);

// Small configuration that trains in minutes on one CPU core.
Config desk_config();

}  // namespace ldm4ts::pipeline
