#include <algorithm>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/pipeline/pipeline.hpp"

namespace ldm4ts::pipeline {

namespace {

nn::Scope scope(const Config& c, const std::string& name) { return {c.seed, name}; }

const Config& checked(const Config& c, std::size_t dims) {
  validate(c);
  if (dims == 0) throw ValidationError("model needs at least one feature");
  return c;
}

nn::VaeConfig vae_config(const Config& c) { return {c.vae_channels, c.latent_channels, 3}; }

nn::UNetConfig unet_config(const Config& c) {
  return {c.latent_channels, c.d_ldm, c.unet_layers, c.n_heads, c.d_fusion};
}

cond::FusionConfig fusion_config(const Config& c, std::size_t dims) {
  return {c.d_fusion, 2 * dims * c.seq_len, c.n_heads, c.latent_channels, c.fusion_uses_latent};
}

nn::TemporalConfig temporal_config(const Config& c) {
  return {c.seq_len, c.pred_len, c.patch_len, c.stride, c.padding, c.d_model, c.n_heads, c.d_ff, c.e_layers};
}

}  // namespace

Model::Model(const Config& cfg, std::size_t dims)
    : cfg_(checked(cfg, dims)),
      dims_(dims),
      vae(scope(cfg_, "vae"), vae_config(cfg_)),
      unet(scope(cfg_, "unet"), unet_config(cfg_)),
      text(scope(cfg_, "text"), cfg_.d_fusion),
      fusion(scope(cfg_, "fusion"), fusion_config(cfg_, dims)),
      temporal(scope(cfg_, "temporal"), temporal_config(cfg_)),
      vision_head(scope(cfg_, "vision_head"), {cfg_.image_size, cfg_.vision_channels, cfg_.pred_len, dims}),
      gate(scope(cfg_, "gate"), cfg_.pred_len, dims, cfg_.d_model),
      schedule(cfg_.num_timesteps, cfg_.beta_start, cfg_.beta_end, diffusion::parse_schedule_kind(cfg_.schedule)),
      latent_scale(cfg_.latent_scale) {
  vae.set_trainable(!cfg_.freeze_ldm);
}

vision::VisionConfig Model::vision_config() const {
  vision::VisionConfig v;
  v.period = cfg_.period;
  v.height = v.width = cfg_.image_size;
  v.gaf = cfg_.gaf == "difference" ? vision::GafVariant::Difference : vision::GafVariant::Summation;
  v.rp = cfg_.rp == "heaviside" ? vision::RpVariant::Heaviside : vision::RpVariant::Gaussian;
  v.rp_embed = cfg_.rp_embed;
  v.rp_delay = cfg_.rp_delay;
  v.rp_threshold = cfg_.rp_threshold;
  return v;
}

cond::PromptConfig Model::prompt_config() const { return {cfg_.description, cfg_.seq_len, cfg_.pred_len}; }

std::vector<ag::Var> Model::forecaster_parameters() const {
  std::vector<ag::Var> out;
  for (const nn::Module* m : std::initializer_list<const nn::Module*>{&unet, &text, &fusion, &temporal,
                                                                       &vision_head, &gate}) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<ag::Var> Model::parameters() const {
  auto out = vae.parameters();
  auto rest = forecaster_parameters();
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

bool Model::vae_trainable() const {
  auto p = vae.parameters();
  return !p.empty() && p.front().trainable();
}

}  // namespace ldm4ts::pipeline
