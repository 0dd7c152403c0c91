#include "ldm4ts/cli/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "ldm4ts/errors.hpp"
#include "ldm4ts/pipeline/pipeline.hpp"
#include "ldm4ts/pipeline/tensor_util.hpp"
#include "ldm4ts/vision/png.hpp"

namespace ldm4ts::cli {

namespace {

using namespace pipeline;

struct Options {
  std::string config, out, input, checkpoint, sampler;
  std::vector<std::string> sets;
  std::size_t seed = 0, seq_len = 0, pred_len = 0, period = 0, steps = 0;
  const CLI::App* command = nullptr;  // the parsed subcommand

  bool given(const std::string& flag) const { return command->get_option(flag)->count() > 0; }
};

void add_common(CLI::App& s, Options& o) {
  s.add_option("--config", o.config, "flat JSON config file with dotted keys");
  s.add_option("--set", o.sets, "override one config key (key=value), repeatable")->allow_extra_args(false);
  s.add_option("--seed", o.seed, "random seed");
  s.add_option("--out", o.out, "output directory or file");
  s.add_option("--input", o.input, "input CSV (date column first)");
  s.add_option("--checkpoint", o.checkpoint, "trained model file");
  s.add_option("--seq-len", o.seq_len, "look-back length L");
  s.add_option("--pred-len", o.pred_len, "forecast horizon H");
  s.add_option("--period", o.period, "SEG period");
  s.add_option("--sampler", o.sampler, "ddim or ddpm");
  s.add_option("--steps", o.steps, "sampling steps");
}

void print_echo(const Config& c, const Provenance& prov, std::ostream& err) {
  err << "# effective configuration\n";
  for (const auto& line : echo(c, prov)) err << line << '\n';
}

Config resolve(const Options& o, std::ostream& err) {
  Config c;
  Provenance prov;
  if (!o.config.empty()) apply_file(c, o.config, &prov);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got \"" + s + "\"");
    const std::string key = s.substr(0, eq);
    set_string(c, key, s.substr(eq + 1));
    prov[key] = "override";
  }
  auto flag = [&](const std::string& key, const std::string& value) {
    set_string(c, key, value);
    prov[key] = "flag";
  };
  if (o.given("--seed")) flag("seed", std::to_string(o.seed));
  if (o.given("--seq-len")) flag("data.seq_len", std::to_string(o.seq_len));
  if (o.given("--pred-len")) flag("data.pred_len", std::to_string(o.pred_len));
  if (o.given("--period")) flag("vision.period", std::to_string(o.period));
  if (!o.input.empty()) flag("data.path", o.input);
  if (o.given("--steps")) flag("diffusion.inference_steps", std::to_string(o.steps));
  if (!o.sampler.empty()) {
    flag("diffusion.use_ddim", diffusion::parse_sampler(o.sampler) == diffusion::Sampler::Ddim ? "true" : "false");
  }
  validate(c);
  print_echo(c, prov, err);
  return c;
}

std::unique_ptr<Model> open_checkpoint(const Options& o, std::ostream& err) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required for this command");
  if (!o.config.empty() || !o.sets.empty() || o.given("--seq-len") || o.given("--pred-len") ||
      o.given("--period")) {
    throw ConfigError("--config, --set, --seq-len, --pred-len and --period cannot change a trained checkpoint");
  }
  auto m = load_checkpoint(o.checkpoint);
  Provenance prov;
  Config c = m->config();
  for (const auto& f : fields(c)) prov[f.key] = "checkpoint";
  print_echo(m->config(), prov, err);
  return m;
}

ForecastOptions forecast_options(const Options& o) {
  ForecastOptions f;
  if (!o.sampler.empty()) f.sampler = diffusion::parse_sampler(o.sampler);
  if (o.given("--steps")) f.steps = o.steps;
  if (o.given("--seed")) f.stream = o.seed;
  return f;
}

std::string out_dir(const Options& o, const std::string& fallback) {
  const std::string dir = o.out.empty() ? fallback : o.out;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir);
  return dir;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void print_table(const EvalReport& r, std::ostream& out) {
  out << "horizon       mse       mae\n";
  for (const auto& row : r.rows) {
    char line[96];
    std::snprintf(line, sizeof line, "%-8s %9.6f %9.6f\n", row.horizon.c_str(), row.mse, row.mae);
    out << line;
  }
  out << "naive last-value baseline: mse " << fmt(r.naive.mse) << " mae " << fmt(r.naive.mae) << '\n';
  out << "mean gate " << fmt(r.gate_mean) << ", " << fmt(r.per_sample_ms) << " ms per window\n";
}

// Every stride-1 length-L window of a frame.
data::WindowSet all_windows(const data::SeriesFrame& f, std::size_t L, std::size_t H) {
  if (f.rows() < L + H) {
    throw ValidationError("input has " + std::to_string(f.rows()) + " rows, fewer than the " +
                          std::to_string(L + H) + " one window needs");
  }
  std::vector<std::size_t> origins(f.rows() - L - H + 1);
  for (std::size_t i = 0; i < origins.size(); ++i) origins[i] = i;
  return data::WindowSet(std::make_shared<const Tensor>(f.values), origins, L, H, 0);
}

int cmd_transform(const Options& o, std::ostream& out, std::ostream& err) {
  Config c = resolve(o, err);
  if (c.data_path.empty()) throw ConfigError("transform needs --input or data.path");
  if (o.out.empty()) throw ConfigError("transform needs --out");
  const std::string dir = out_dir(o, "");
  auto frame = data::load_csv(c.data_path);
  auto ws = all_windows(frame, c.seq_len, 0);
  Model m(c, frame.dims());
  std::ofstream index(dir + "/index.csv");
  if (!index) throw IoError("cannot write " + dir + "/index.csv");
  index << "index,start,end,channel,path\n";
  std::size_t files = 0;
  for (std::size_t b = 0; b < ws.size(); b += 64) {
    auto batch = ws.range(b, std::min(ws.size(), b + 64));
    auto paths = vision::export_png(window_images(m, batch.X), dir, "window", b, c.grayscale);
    const std::size_t per = paths.size() / batch.origins.size();
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const std::size_t o0 = batch.origins[i / per];
      const std::string name = std::filesystem::path(paths[i]).filename().string();
      const std::string channel = name.substr(name.rfind('_') + 1, name.size() - name.rfind('_') - 5);
      index << b + i / per << ',' << frame.timestamps[o0] << ',' << frame.timestamps[o0 + c.seq_len - 1] << ','
            << channel << ',' << name << '\n';
    }
    files += paths.size();
  }
  out << "wrote " << files << " PNG files for " << ws.size() << " windows to " << dir << '\n';
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  Config c = resolve(o, err);
  const std::string dir = out_dir(o, "ldm4ts_run");
  auto ds = load_dataset(c);
  err << "windows: train " << ds.splits.train.size() << ", val " << ds.splits.val.size() << ", test "
      << ds.splits.test.size() << '\n';
  Model m(c, ds.frame.dims());
  m.scaler = ds.scaler;
  std::ofstream log(dir + "/train_log.csv");
  if (!log) throw IoError("cannot write " + dir + "/train_log.csv");
  auto rep = fit(m, ds.splits, &log);
  err << "latent scale " << rep.latent_scale << ", best validation mse " << rep.train.best_val_mse << " (epoch "
      << rep.train.best_epoch << ")\n";
  save_checkpoint(m, dir + "/model.ckpt");
  {
    std::ofstream cfg(dir + "/config.json");
    cfg << to_json(c).dump(2) << '\n';
  }
  if (c.save_images && ds.splits.test.size() > 0) {
    auto batch = ds.splits.test.range(0, std::min<std::size_t>(ds.splits.test.size(), 16));
    vision::export_png(window_images(m, batch.X), dir + "/images", "test", 0, c.grayscale);
  }
  if (ds.splits.test.size() > 0) {
    auto r = evaluate(m, ds.splits.test);
    write_metrics_csv(r, dir + "/metrics.csv");
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    print_table(r, out);
  }
  out << "checkpoint " << dir << "/model.ckpt\n";
  return kOk;
}

int cmd_forecast(const Options& o, std::ostream& out, std::ostream& err) {
  auto m = open_checkpoint(o, err);
  const Config& c = m->config();
  if (o.input.empty()) throw ConfigError("forecast needs --input");
  auto frame = data::load_csv(o.input, m->dims());
  if (m->scaler) frame.values = m->scaler->transform(frame.values);
  auto ws = all_windows(frame, c.seq_len, 0);
  const std::string path = o.out.empty() ? "forecast.csv" : o.out;
  std::ofstream csv(path);
  if (!csv) throw IoError("cannot write forecast file: " + path);
  csv << "index,step,feature,value\n";
  auto opt = forecast_options(o);
  const std::size_t base_stream = opt.stream;
  char buf[48];
  for (std::size_t b = 0, k = 0; b < ws.size(); b += 256, ++k) {
    auto batch = ws.range(b, std::min(ws.size(), b + 256));
    opt.stream = base_stream * 1000003 + k;
    Tensor y = forecast(*m, batch.X, nullptr, opt).Y_hat;
    if (m->scaler) y = m->scaler->inverse(y);
    const std::size_t H = y.dim(1), D = y.dim(2);
    for (std::size_t i = 0; i < y.dim(0); ++i)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t d = 0; d < D; ++d) {
          std::snprintf(buf, sizeof buf, "%.10g", y[(i * H + h) * D + d]);
          csv << b + i << ',' << h + 1 << ',' << frame.features[d] << ',' << buf << '\n';
        }
  }
  out << "wrote forecasts for " << ws.size() << " windows to " << path << '\n';
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  auto m = open_checkpoint(o, err);
  Config c = m->config();
  if (!o.input.empty()) c.data_path = o.input;
  auto ds = load_dataset(c);
  auto r = evaluate(*m, ds.splits.test, forecast_options(o));
  for (const auto& w : r.warnings) err << "warning: " << w << '\n';
  const std::string path = o.out.empty() ? "metrics.csv" : o.out;
  write_metrics_csv(r, path);
  print_table(r, out);
  return kOk;
}

int cmd_calibrate(const Options& o, std::ostream& out, std::ostream& err) {
  std::unique_ptr<Model> m;
  Config c;
  if (o.checkpoint.empty()) {
    c = resolve(o, err);
    auto ds = load_dataset(c);
    m = std::make_unique<Model>(c, ds.frame.dims());
    pretrain_vae(*m, ds.splits.train, ds.splits.val);
    out << calibrate_latent_scale(*m, ds.splits.train) << '\n';
    return kOk;
  }
  m = open_checkpoint(o, err);
  c = m->config();
  if (!o.input.empty()) c.data_path = o.input;
  auto ds = load_dataset(c);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", calibrate_latent_scale(*m, ds.splits.train));
  out << buf << '\n';
  if (!o.out.empty()) save_checkpoint(*m, o.out);
  return kOk;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-diffusion forecaster for multivariate time series", "ldm4ts"};
  app.require_subcommand(1, 1);
  Options o;
  const std::pair<const char*, const char*> commands[] = {
      {"transform", "write SEG/GAF/RP images and an index CSV for every window of --input"},
      {"train", "pretrain the VAE, calibrate the latent scale and train; writes a checkpoint, log and metrics"},
      {"forecast", "forecast every window of --input with a checkpoint; writes index,step,feature,value"},
      {"eval", "metrics of a checkpoint on its test split; writes horizon,mse,mae"},
      {"calibrate-scale", "print the latent scale that gives unit-variance latents"},
  };
  for (const auto& [name, desc] : commands) add_common(*app.add_subcommand(name, desc), o);
  app.footer("Exit codes: 0 success, 2 usage or configuration error, 3 runtime error.");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kConfigError;
  }
  o.command = app.get_subcommands().front();
  const std::string cmd = o.command->get_name();
  try {
    if (cmd == "transform") return cmd_transform(o, out, err);
    if (cmd == "train") return cmd_train(o, out, err);
    if (cmd == "forecast") return cmd_forecast(o, out, err);
    if (cmd == "eval") return cmd_eval(o, out, err);
    return cmd_calibrate(o, out, err);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const ldm4ts::ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kConfigError;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

int run(int argc, char** argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace ldm4ts::cli
