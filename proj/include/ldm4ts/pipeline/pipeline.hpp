#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ldm4ts/conditioning/conditioning.hpp"
#include "ldm4ts/data/metrics.hpp"
#include "ldm4ts/data/normalize.hpp"
#include "ldm4ts/data/series.hpp"
#include "ldm4ts/data/windows.hpp"
#include "ldm4ts/diffusion/diffusion.hpp"
#include "ldm4ts/networks/networks.hpp"
#include "ldm4ts/numerics/adam.hpp"
#include "ldm4ts/pipeline/config.hpp"
#include "ldm4ts/vision/encoders.hpp"

namespace ldm4ts::pipeline {

class Model {
 public:
  Model(const Config& cfg, std::size_t dims);

  const Config& config() const { return cfg_; }
  std::size_t dims() const { return dims_; }
  vision::VisionConfig vision_config() const;
  cond::PromptConfig prompt_config() const;

  // Every parameter, VAE first; names are unique.
  std::vector<ag::Var> parameters() const;
  // Everything except the VAE.
  std::vector<ag::Var> forecaster_parameters() const;
  void set_vae_trainable(bool on) { vae.set_trainable(on); }
  bool vae_trainable() const;

 private:
  Config cfg_;
  std::size_t dims_;

 public:
  nn::Vae vae;
  nn::UNet unet;
  cond::TextEncoder text;
  cond::ConditionFusion fusion;
  nn::TemporalEncoder temporal;
  nn::VisionHead vision_head;
  nn::GatedFusion gate;
  diffusion::NoiseSchedule schedule;
  double latent_scale;
  std::optional<data::StandardScaler> scaler;
  std::unique_ptr<Adam> optimizer;  // present after training
};

// Per-window inputs derived from the look-back X (B x L x D).
struct Features {
  Tensor X_norm;          // instance-normalized with norm_const 1
  data::NormStats stats;  // the statistics that denormalize forecasts
  Tensor c_freq;          // B x 2DL
  Tensor h_pool;          // B x 768 pooled frozen token features
  Tensor images;          // B x 3 x S x S, empty unless requested
  Tensor z0;              // B x C_z x S/8 x S/8, scaled posterior mean

  std::size_t size() const { return X_norm.empty() ? 0 : X_norm.dim(0); }
  Features gather(std::span<const std::size_t> idx) const;
};

// Images are built from X normalized with norm_const; they are kept only
// when keep_images is set. The latent uses the current VAE and scale.
Features featurize(const Model& m, const Tensor& X, bool keep_images);
Features featurize_set(const Model& m, const data::WindowSet& ws, bool keep_images, Tensor* Y = nullptr);

struct LossTerms {
  ag::Var l_diff, l_pred, l_recon, total;
  Tensor y_hat;  // denormalized forecast
  Tensor gate;
};

// One-shot training objective: noise the latent per the draw, predict the
// noise, invert in a single step, decode, and fuse with the temporal branch.
// eps_override replaces the U-Net (tests).
LossTerms compute_losses(const Model& m, const Features& f, const Tensor& Y, const diffusion::DiffusionDraw& d,
                         const diffusion::EpsVarFn* eps_override = nullptr);

struct StepLog {
  std::size_t epoch, step;
  double l_diff, l_pred, l_recon, total;
};

struct EpochLog {
  std::size_t epoch;
  double l_diff, l_pred, l_recon;
  double val_mse;
};

struct TrainReport {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  double best_val_mse = 0;
  std::size_t best_epoch = 0;
};

// Log lines are CSV rows "epoch,step,l_diff,l_pred,l_recon,val_mse"; step rows
// carry an empty val_mse, epoch rows carry epoch means and the validation MSE.
TrainReport train(Model& m, const data::WindowSet& train, const data::WindowSet& val, std::ostream* log = nullptr);

// Validation MSE of the one-shot forward with a fixed noise draw per batch.
double validation_mse(const Model& m, const Features& f, const Tensor& Y);

struct VaeReport {
  std::vector<double> train_loss;
  std::vector<double> val_mse;
  double best_val_mse = 0;
};

VaeReport pretrain_vae(Model& m, const data::WindowSet& train, const data::WindowSet& val, std::ostream* log = nullptr);
// Pixel MSE of decode(mean latent) against the input images.
double reconstruction_mse(const Model& m, const Tensor& images);
// Unscaled posterior-mean latents for up to max_windows evenly spaced windows,
// every index shifted by offset (mod the set size).
Tensor sample_latents(const Model& m, const data::WindowSet& ws, std::size_t max_windows, std::size_t offset = 0);
double calibrate_latent_scale(Model& m, const data::WindowSet& ws, std::size_t max_windows = 1024);

struct FitReport {
  VaeReport vae;
  double latent_scale = 0;
  TrainReport train;
};

// VAE pretraining, scale calibration, freezing, then joint training.
FitReport fit(Model& m, const data::Splits& s, std::ostream* log = nullptr);

struct ForecastResult {
  Tensor Y_hat;  // B x H x D in the units of X
  double gate_mean = 0;
  std::optional<data::Metrics> metrics;
  double total_ms = 0;
  double per_sample_ms = 0;
};

struct ForecastOptions {
  std::optional<diffusion::Sampler> sampler;  // default from use_ddim
  std::optional<std::size_t> steps;           // default inference_steps
  std::optional<double> gate;                 // replaces the learned gate
  std::size_t stream = 0;                     // noise stream, for independent calls
};

// Chunks of batch_size windows, each sampled from its own forked stream.
ForecastResult forecast(const Model& m, const Tensor& X, const Tensor* Y = nullptr, const ForecastOptions& opt = {});

// Repeats the last look-back row across the horizon.
Tensor naive_last_value(const Tensor& X, std::size_t H);

struct EvalRow {
  std::string horizon;
  double mse, mae;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // per horizon, then "average"
  std::vector<std::string> warnings;
  data::Metrics naive;
  double gate_mean = 0;
  double per_sample_ms = 0;
};

// Metrics on the first h forecast steps for h in {96, 192, 336, 720} up to the
// model horizon (plus the model horizon itself), and their average.
EvalReport evaluate(const Model& m, const data::WindowSet& test, const ForecastOptions& opt = {});
EvalReport metrics_table(const Tensor& Y, const Tensor& Y_hat);
void write_metrics_csv(const EvalReport& r, const std::string& path);

void save_checkpoint(const Model& m, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

// Loads the configured CSV, fits the scaler on the training rows when
// data.scale is set, and cuts windows.
struct Dataset {
  data::SeriesFrame frame;
  std::optional<data::StandardScaler> scaler;
  data::Splits splits;
};
Dataset load_dataset(const Config& c);
Dataset make_dataset(const Config& c, data::SeriesFrame frame);

}  // namespace ldm4ts::pipeline
