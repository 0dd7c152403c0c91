#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ldm4ts/data/synthetic.hpp"
#include "ldm4ts/errors.hpp"
#include "ldm4ts/pipeline/pipeline.hpp"
#include "ldm4ts/pipeline/tensor_util.hpp"

namespace ldm4ts::pipeline {

ForecastResult forecast(const Model& m, const Tensor& X, const Tensor* Y, const ForecastOptions& opt) {
  const Config& c = m.config();
  const auto t0 = std::chrono::steady_clock::now();
  if (X.rank() != 3 || X.dim(0) == 0) throw ValidationError("forecast expects B x L x D windows, got " + shape_str(X.shape()));
  const std::size_t B = X.dim(0), H = c.pred_len, D = m.dims();
  if (Y && Y->shape() != Shape{B, H, D}) {
    throw ValidationError("targets must be " + shape_str({B, H, D}) + ", got " + shape_str(Y->shape()));
  }
  const auto sampler = opt.sampler.value_or(c.use_ddim ? diffusion::Sampler::Ddim : diffusion::Sampler::Ddpm);
  const std::size_t steps = opt.steps.value_or(c.inference_steps);
  const RngStream base = RngStream(c.seed, "forecast").fork(opt.stream);

  ag::NoGradGuard ng;
  std::vector<Tensor> outs;
  double gate_sum = 0;
  std::size_t gate_n = 0;
  for (std::size_t b = 0, k = 0; b < B; b += c.batch_size, ++k) {
    std::vector<std::size_t> idx(std::min(c.batch_size, B - b));
    std::iota(idx.begin(), idx.end(), b);
    Features f = featurize(m, take_rows(X, idx), false);
    ag::Var c_m = m.fusion(m.text.project(ag::constant(f.h_pool)), ag::constant(f.c_freq), ag::constant(f.z0));
    diffusion::EpsFn eps_fn = [&](const Tensor& z, std::size_t t) {
      return m.unet(ag::constant(z), std::vector<std::size_t>(idx.size(), t), c_m).value();
    };
    RngStream rng = base.fork(k);
    Tensor z0_hat = diffusion::sample_loop(f.z0.shape(), eps_fn, m.schedule, sampler, steps, rng);
    ag::Var z_ve = m.vision_head(m.vae.decode(ag::constant(z0_hat) * (1.0 / m.latent_scale)));
    ag::Var z_te = m.temporal(f.X_norm);
    ag::Var fused;
    if (opt.gate) {
      const double g = *opt.gate;
      fused = z_te * g + z_ve * (1.0 - g);
      gate_sum += g * static_cast<double>(z_te.numel());
      gate_n += z_te.numel();
    } else {
      Tensor gate;
      fused = m.gate(z_te, z_ve, &gate);
      for (double v : gate.data()) gate_sum += v;
      gate_n += gate.numel();
    }
    outs.push_back(denormalize(fused, f.stats).value());
  }
  ForecastResult r;
  r.Y_hat = cat_rows(outs);
  r.gate_mean = gate_sum / static_cast<double>(gate_n);
  for (double v : r.Y_hat.data()) {
    if (!std::isfinite(v)) throw TrainingError("forecast produced a non-finite value");
  }
  if (Y) r.metrics = data::compute_metrics(*Y, r.Y_hat);
  r.total_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  r.per_sample_ms = r.total_ms / static_cast<double>(B);
  return r;
}

Tensor naive_last_value(const Tensor& X, std::size_t H) {
  const std::size_t B = X.dim(0), L = X.dim(1), D = X.dim(2);
  Tensor out({B, H, D});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t d = 0; d < D; ++d) out[(b * H + h) * D + d] = X[(b * L + L - 1) * D + d];
  return out;
}

EvalReport metrics_table(const Tensor& Y, const Tensor& Y_hat) {
  if (Y.shape() != Y_hat.shape() || Y.rank() != 3) {
    throw DimensionError("metrics_table needs matching B x H x D tensors, got " + shape_str(Y.shape()) + " and " +
                         shape_str(Y_hat.shape()));
  }
  const std::size_t H = Y.dim(1);
  EvalReport r;
  std::vector<std::size_t> horizons;
  for (std::size_t h : {96, 192, 336, 720}) {
    if (h <= H) {
      horizons.push_back(h);
    } else {
      r.warnings.push_back("horizon " + std::to_string(h) + " exceeds the forecast length " + std::to_string(H) +
                           "; skipped");
    }
  }
  if (std::find(horizons.begin(), horizons.end(), H) == horizons.end()) horizons.push_back(H);
  double smse = 0, smae = 0;
  for (std::size_t h : horizons) {
    auto mt = data::compute_metrics(prefix_steps(Y, h), prefix_steps(Y_hat, h));
    r.rows.push_back({std::to_string(h), mt.mse, mt.mae});
    smse += mt.mse;
    smae += mt.mae;
  }
  const double k = static_cast<double>(horizons.size());
  r.rows.push_back({"average", smse / k, smae / k});
  return r;
}

EvalReport evaluate(const Model& m, const data::WindowSet& test, const ForecastOptions& opt) {
  if (test.size() == 0) throw ValidationError("test split has no windows");
  constexpr std::size_t chunk = 256;
  std::vector<Tensor> ys, preds, naive;
  double gate_sum = 0, ms = 0;
  for (std::size_t b = 0, k = 0; b < test.size(); b += chunk, ++k) {
    auto batch = test.range(b, std::min(test.size(), b + chunk));
    ForecastOptions o = opt;
    o.stream = opt.stream * 1000003 + k;
    auto fr = forecast(m, batch.X, nullptr, o);
    gate_sum += fr.gate_mean * static_cast<double>(batch.X.dim(0));
    ms += fr.total_ms;
    naive.push_back(naive_last_value(batch.X, test.pred_len()));
    preds.push_back(std::move(fr.Y_hat));
    ys.push_back(std::move(batch.Y));
  }
  const Tensor Y = cat_rows(ys);
  EvalReport r = metrics_table(Y, cat_rows(preds));
  r.naive = data::compute_metrics(Y, cat_rows(naive));
  r.gate_mean = gate_sum / static_cast<double>(test.size());
  r.per_sample_ms = ms / static_cast<double>(test.size());
  return r;
}

void write_metrics_csv(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file: " + path);
  out << "horizon,mse,mae\n";
  char buf[96];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g", row.mse, row.mae);
    out << row.horizon << ',' << buf << '\n';
  }
  if (!out) throw IoError("failed writing metrics file: " + path);
}

Dataset make_dataset(const Config& c, data::SeriesFrame frame) {
  data::SplitSpec spec = data::SplitSpec::for_dataset(c.data_name);
  if (c.train_rows > 0) {
    spec.train_rows = c.train_rows;
    spec.val_rows = c.val_rows;
    spec.test_rows = c.test_rows;
  }
  spec.few_shot = c.few_shot;
  spec.context_overlap = c.context_overlap;
  Dataset ds;
  if (c.scale) {
    const auto rows = data::resolve_rows(frame.rows(), spec);
    ds.scaler = data::StandardScaler::fit(frame.values, rows.train_end);
    frame.values = ds.scaler->transform(frame.values);
  }
  ds.splits = data::make_windows(frame, spec, c.seq_len, c.pred_len, c.label_len);
  ds.frame = std::move(frame);
  return ds;
}

Dataset load_dataset(const Config& c) {
  if (c.data_path.empty()) {
    if (c.data_name != "synthetic") throw ConfigError("data.path is required unless data.name is synthetic");
    return make_dataset(c, data::synthetic_sinusoids(4000, 2, c.seed));
  }
  return make_dataset(c, data::load_csv(c.data_path));
}

}  // namespace ldm4ts::pipeline
