#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ldm4ts/data/synthetic.hpp"
#include "ldm4ts/errors.hpp"
#include "ldm4ts/pipeline/pipeline.hpp"
#include "ldm4ts/pipeline/tensor_util.hpp"

using namespace ldm4ts;
using namespace ldm4ts::pipeline;

namespace {

Config toy() {
  Config c;
  c.data_name = "synthetic";
  c.seq_len = 32;
  c.label_len = 16;
  c.pred_len = 8;
  c.period = 8;
  c.image_size = 16;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.e_layers = 1;
  c.patch_len = 8;
  c.stride = 4;
  c.padding = 4;
  c.d_fusion = 8;
  c.d_ldm = 8;
  c.vae_channels = 4;
  c.latent_channels = 2;
  c.vision_channels = 4;
  c.batch_size = 8;
  c.epochs = 3;
  c.patience = 2;
  c.vae_epochs = 1;
  c.vae_images = 16;
  c.vae_batch_size = 8;
  c.num_timesteps = 20;
  c.inference_steps = 5;
  c.train_rows = 180;
  c.val_rows = 60;
  c.test_rows = 60;
  return c;
}

Dataset toy_data(const Config& c) { return make_dataset(c, data::synthetic_sinusoids(300, 2, 3)); }

std::vector<double> values(const Model& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.value().data().begin(), p.value().data().end());
  return out;
}

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("training defaults") {
  Config c;
  CHECK(c.batch_size == 32);
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.epochs == 10);
  CHECK(c.patience == 3);
  CHECK(c.freeze_ldm);
  CHECK(c.lambda1 == 1.0);
  CHECK(c.lambda2 == 1.0);
  CHECK(c.lambda3 == 0.0);
}

TEST_CASE("loss terms isolate and sum exactly") {
  Config c = toy();
  c.lambda2 = 0;
  c.lambda3 = 0.5;
  auto ds = toy_data(c);
  Model m(c, 2);
  auto b = ds.splits.train.range(0, 4);
  Features f = featurize(m, b.X, true);
  RngStream rng(1, "draw");
  auto d = diffusion::draw_noise(f.z0.shape(), m.schedule, rng);
  diffusion::EpsVarFn perfect = [&](const ag::Var&, const std::vector<std::size_t>&) { return ag::constant(d.eps); };
  auto t = compute_losses(m, f, b.Y, d, &perfect);
  CHECK(t.l_diff.item() == 0.0);
  CHECK(t.l_recon.item() > 0.0);
  CHECK(t.total.item() == 0.5 * t.l_recon.item());

  Config c2 = toy();
  c2.lambda3 = 0.25;
  Model m2(c2, 2);
  auto t2 = compute_losses(m2, featurize(m2, b.X, true), b.Y, d);
  CHECK(t2.l_diff.item() >= 0.0);
  CHECK(t2.l_pred.item() >= 0.0);
  CHECK(t2.l_recon.item() >= 0.0);
  CHECK(t2.total.item() == t2.l_diff.item() + t2.l_pred.item() + t2.l_recon.item() * 0.25);
  CHECK(t2.y_hat.shape() == Shape{4, 8, 2});
  for (double g : t2.gate.data()) CHECK((g > 0.0 && g < 1.0));

  CHECK_THROWS_AS(compute_losses(m2, featurize(m2, b.X, false), b.Y, d), InvariantError);
}

TEST_CASE("one optimizer step moves parameters") {
  Config c = toy();
  c.max_steps = 1;
  auto ds = toy_data(c);
  Model m(c, 2);
  auto before = values(m);
  auto rep = train(m, ds.splits.train, ds.splits.val);
  CHECK(rep.steps.size() == 1);
  auto after = values(m);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < before.size(); ++i) changed += before[i] != after[i];
  CHECK(changed > 0);
  CHECK(m.optimizer->steps() == 1);
  // A frozen VAE stays put; an unfrozen one trains jointly.
  auto vae_before = m.vae.parameters().front().value();
  CHECK(m.vae.parameters().front().value() == Model(c, 2).vae.parameters().front().value());
  Config j = c;
  j.freeze_ldm = false;
  Model mj(j, 2);
  train(mj, ds.splits.train, ds.splits.val);
  CHECK(mj.optimizer->params().size() == mj.parameters().size());
  CHECK_FALSE(mj.vae.parameters().front().value() == vae_before);
}

TEST_CASE("training is deterministic and early stopping keeps the best epoch") {
  Config c = toy();
  auto ds = toy_data(c);
  Model a(c, 2), b(c, 2);
  std::ostringstream log;
  auto ra = train(a, ds.splits.train, ds.splits.val, &log);
  auto rb = train(b, ds.splits.train, ds.splits.val);
  REQUIRE(ra.steps.size() == rb.steps.size());
  for (std::size_t i = 0; i < ra.steps.size(); ++i) {
    CHECK(ra.steps[i].l_diff == rb.steps[i].l_diff);
    CHECK(ra.steps[i].l_pred == rb.steps[i].l_pred);
    CHECK(ra.steps[i].total == rb.steps[i].total);
  }
  CHECK(values(a) == values(b));
  CHECK(log.str().rfind("epoch,step,l_diff,l_pred,l_recon,val_mse\n", 0) == 0);

  double best = ra.epochs.front().val_mse;
  for (const auto& e : ra.epochs) best = std::min(best, e.val_mse);
  CHECK(ra.best_val_mse == best);
  Tensor Y;
  Features fv = featurize_set(a, ds.splits.val, a.vae_trainable(), &Y);
  CHECK(validation_mse(a, fv, Y) == best);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  Config c = toy();
  c.learning_rate = 1e200;
  auto ds = toy_data(c);
  Model m(c, 2);
  try {
    train(m, ds.splits.train, ds.splits.val);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("batch") != std::string::npos);
    CHECK(msg.find("l_diff=") != std::string::npos);
  }
}

TEST_CASE("vae pretraining") {
  Config c = toy();
  c.vae_epochs = 0;
  auto ds = toy_data(c);
  Model m(c, 2);
  auto before = values(m);
  auto rep = pretrain_vae(m, ds.splits.train, ds.splits.val);
  CHECK(rep.train_loss.empty());
  CHECK(values(m) == before);

  Config c2 = toy();
  c2.vae_epochs = 2;
  Model m2(c2, 2);
  auto rep2 = pretrain_vae(m2, ds.splits.train, ds.splits.val);
  CHECK(rep2.val_mse.size() == 2);
  CHECK(rep2.best_val_mse == std::min(rep2.val_mse[0], rep2.val_mse[1]));
  CHECK_FALSE(m2.vae_trainable());
  Config c3 = toy();
  c3.freeze_ldm = false;
  Model m3(c3, 2);
  CHECK(m3.vae_trainable());
  pretrain_vae(m3, ds.splits.train, ds.splits.val);
  CHECK(m3.vae_trainable());
  const double s = calibrate_latent_scale(m2, ds.splits.train, 64);
  CHECK(s > 0);
  CHECK(m2.latent_scale == s);
}

TEST_CASE("forecast contract") {
  Config c = toy();
  auto ds = toy_data(c);
  Model m(c, 2);
  train(m, ds.splits.train, ds.splits.val);
  auto b = ds.splits.test.range(0, 11);

  auto r1 = forecast(m, b.X, &b.Y);
  auto r2 = forecast(m, b.X, &b.Y);
  CHECK(r1.Y_hat.shape() == Shape{11, 8, 2});
  CHECK(r1.Y_hat == r2.Y_hat);
  REQUIRE(r1.metrics);
  auto mt = data::compute_metrics(b.Y, r1.Y_hat);
  CHECK(r1.metrics->mse == mt.mse);
  CHECK(r1.metrics->mae == mt.mae);
  CHECK(r1.gate_mean > 0.0);
  CHECK(r1.gate_mean < 1.0);

  ForecastOptions ddpm;
  ddpm.sampler = diffusion::Sampler::Ddpm;
  CHECK(forecast(m, b.X, nullptr, ddpm).Y_hat == forecast(m, b.X, nullptr, ddpm).Y_hat);

  // Outputs are in the units of X: shifting the input shifts the forecast.
  Tensor shifted = b.X;
  for (auto& v : shifted.vec()) v += 100.0;
  auto rs = forecast(m, shifted);
  double mean_shift = 0;
  for (std::size_t i = 0; i < rs.Y_hat.numel(); ++i) mean_shift += rs.Y_hat[i] - r1.Y_hat[i];
  CHECK(std::abs(mean_shift / static_cast<double>(rs.Y_hat.numel()) - 100.0) < 1e-6);

  // A gate pinned at 1 reproduces the temporal branch exactly.
  ForecastOptions pinned;
  pinned.gate = 1.0;
  auto rg = forecast(m, b.X, nullptr, pinned);
  Features f = featurize(m, b.X, false);
  Tensor te;
  {
    ag::NoGradGuard ng;
    te = denormalize(m.temporal(f.X_norm), f.stats).value();
  }
  CHECK(rg.Y_hat == te);
  CHECK(rg.gate_mean == 1.0);

  CHECK_THROWS_AS(forecast(m, Tensor({2, 31, 2})), ValidationError);
  CHECK_THROWS_AS(forecast(m, Tensor({2, 32, 3})), ValidationError);
  Tensor badY({11, 7, 2});
  CHECK_THROWS_AS(forecast(m, b.X, &badY), ValidationError);
}

TEST_CASE("metrics table") {
  RngStream rng(4, "table");
  Tensor Y = rng.normal_tensor({3, 8, 2});
  auto z = metrics_table(Y, Y);
  REQUIRE(z.rows.size() == 2);
  CHECK(z.rows[0].horizon == "8");
  CHECK(z.rows[1].horizon == "average");
  for (const auto& r : z.rows) {
    CHECK(r.mse == 0.0);
    CHECK(r.mae == 0.0);
  }
  CHECK(z.warnings.size() == 4);

  Tensor Yl = rng.normal_tensor({2, 200, 1}), P = rng.normal_tensor({2, 200, 1});
  auto t = metrics_table(Yl, P);
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0].horizon == "96");
  CHECK(t.rows[1].horizon == "192");
  CHECK(t.rows[2].horizon == "200");
  CHECK(t.warnings.size() == 2);
  auto m96 = data::compute_metrics(prefix_steps(Yl, 96), prefix_steps(P, 96));
  CHECK(t.rows[0].mse == m96.mse);
  CHECK(std::abs(t.rows[3].mse - (t.rows[0].mse + t.rows[1].mse + t.rows[2].mse) / 3) < 1e-15);

  const auto path = tmp("ldm4ts_metrics.csv");
  write_metrics_csv(t, path.string());
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "horizon,mse,mae");
  CHECK(first.rfind("96,", 0) == 0);
  std::filesystem::remove(path);

  Tensor X({1, 4, 2}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  Tensor n = naive_last_value(X, 3);
  CHECK(n.vec() == std::vector<double>{7, 8, 7, 8, 7, 8});
}

TEST_CASE("checkpoint round trip") {
  Config c = toy();
  c.max_steps = 3;
  auto ds = toy_data(c);
  Model m(c, 2);
  m.scaler = ds.scaler;
  m.latent_scale = 0.7;
  train(m, ds.splits.train, ds.splits.val);
  const auto path = tmp("ldm4ts_ckpt.bin");
  save_checkpoint(m, path.string());
  auto back = load_checkpoint(path.string());
  CHECK(values(*back) == values(m));
  CHECK(back->latent_scale == 0.7);
  REQUIRE(back->scaler);
  CHECK(back->scaler->mean == ds.scaler->mean);
  REQUIRE(back->optimizer);
  CHECK(back->optimizer->steps() == 3);
  CHECK(back->optimizer->first_moments()[0] == m.optimizer->first_moments()[0]);
  CHECK(back->vae_trainable() == m.vae_trainable());
  auto b = ds.splits.test.range(0, 4);
  CHECK(forecast(*back, b.X).Y_hat == forecast(m, b.X).Y_hat);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& s) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << s;
  };
  std::string bad = bytes;
  bad[0] = 'X';
  write(bad);
  CHECK_THROWS_AS(load_checkpoint(path.string()), FormatError);
  // Edit the embedded config without updating the hash.
  bad = bytes;
  const auto pos = bad.find("\"train.epochs\":3");
  REQUIRE(pos != std::string::npos);
  bad[pos + 15] = '4';
  write(bad);
  CHECK_THROWS_AS(load_checkpoint(path.string()), FormatError);
  write(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path.string()), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path.string()), IoError);
}

TEST_CASE("dataset assembly") {
  Config c = toy();
  auto ds = toy_data(c);
  REQUIRE(ds.scaler);
  CHECK(ds.splits.train.size() == 180 - 40 + 1);
  CHECK(ds.splits.val.size() == 60 - 40 + 1);
  // The scaler is fitted on training rows only.
  double m0 = 0;
  for (std::size_t t = 0; t < 180; ++t) m0 += ds.frame.values[t * 2];
  CHECK(std::abs(m0 / 180) < 1e-12);
  Config bad = toy();
  bad.data_name = "ETTh1";
  CHECK_THROWS_AS(load_dataset(bad), ConfigError);
}
