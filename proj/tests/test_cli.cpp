#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ldm4ts/cli/cli.hpp"
#include "ldm4ts/data/synthetic.hpp"
#include "ldm4ts/pipeline/config.hpp"

using namespace ldm4ts;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "ldm4ts");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  auto d = fs::temp_directory_path() / "ldm4ts_cli_test";
  fs::create_directories(d);
  return d;
}

std::string write_csv(std::size_t rows) {
  auto f = data::synthetic_sinusoids(rows, 2, 5);
  const auto path = (workdir() / ("toy" + std::to_string(rows) + ".csv")).string();
  std::ofstream out(path);
  out << "date,a,b\n";
  for (std::size_t t = 0; t < rows; ++t) out << f.timestamps[t] << ',' << f.values[t * 2] << ',' << f.values[t * 2 + 1] << '\n';
  return path;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_CASE("transform writes one image set per window") {
  const auto csv = write_csv(200);
  const auto dir = workdir() / "imgs";
  fs::remove_all(dir);
  auto r = invoke({"transform", "--input", csv, "--seq-len", "96", "--period", "24", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const std::size_t windows = 200 - 96 + 1;
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(dir)) pngs += e.path().extension() == ".png";
  CHECK(pngs == windows * 4);
  CHECK(fs::exists(dir / "window_0_rgb.png"));
  CHECK(fs::exists(dir / ("window_" + std::to_string(windows - 1) + "_gaf.png")));
  CHECK(first_line(dir / "index.csv") == "index,start,end,channel,path");
  CHECK(count_lines(dir / "index.csv") == 1 + windows * 4);
  CHECK(r.err.find("vision.period = 24  [flag]") != std::string::npos);

  fs::remove_all(dir);
  r = invoke({"transform", "--input", csv, "--out", dir.string(), "--set", "vision.grayscale=false"});
  REQUIRE(r.code == 0);
  std::size_t rgb = 0;
  for (const auto& e : fs::directory_iterator(dir)) rgb += e.path().extension() == ".png";
  CHECK(rgb == windows);
  fs::remove_all(dir);
}

TEST_CASE("configuration errors exit with 2") {
  auto r = invoke({"train", "--config", "/no/such/dir/cfg.json"});
  CHECK(r.code == cli::kConfigError);
  CHECK(r.err.find("/no/such/dir/cfg.json") != std::string::npos);

  r = invoke({"train", "--bogus"});
  CHECK(r.code == cli::kConfigError);
  CHECK(r.err.find("Usage") != std::string::npos);

  r = invoke({});
  CHECK(r.code == cli::kConfigError);
  r = invoke({"frobnicate"});
  CHECK(r.code == cli::kConfigError);

  r = invoke({"train", "--set", "model.nope=3"});
  CHECK(r.code == cli::kConfigError);
  CHECK(r.err.find("model.nope") != std::string::npos);
  r = invoke({"train", "--set", "train.epochs"});
  CHECK(r.code == cli::kConfigError);
  r = invoke({"train", "--set", "train.patience=20"});
  CHECK(r.code == cli::kConfigError);
  r = invoke({"train", "--sampler", "euler"});
  CHECK(r.code == cli::kConfigError);

  const auto bad = (workdir() / "bad.json").string();
  std::ofstream(bad) << "{\"train.epochs\": \"ten\"}";
  CHECK(invoke({"train", "--config", bad}).code == cli::kConfigError);

  CHECK(invoke({"forecast"}).code == cli::kConfigError);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("default configuration echo") {
  auto r = invoke({"transform"});  // no input: echo, then a configuration error
  CHECK(r.code == cli::kConfigError);
  for (const char* line : {"diffusion.num_timesteps = 300  [default]", "diffusion.inference_steps = 50  [default]",
                           "model.d_model = 256  [default]", "vision.image_size = 64  [default]",
                           "model.patch_len = 16  [default]", "train.learning_rate = 0.001  [default]",
                           "train.batch_size = 32  [default]", "train.epochs = 10  [default]",
                           "train.patience = 3  [default]", "diffusion.use_ddim = true  [default]",
                           "train.freeze_ldm = true  [default]"}) {
    CHECK_MESSAGE(r.err.find(line) != std::string::npos, line);
  }
  auto again = invoke({"transform"});
  CHECK(again.err == r.err);

  const auto cfg = (workdir() / "prov.json").string();
  std::ofstream(cfg) << "{\"train.epochs\": 4}";
  r = invoke({"transform", "--config", cfg, "--set", "train.batch_size=8", "--seed", "9", "--steps", "20"});
  CHECK(r.err.find("train.epochs = 4  [file]") != std::string::npos);
  CHECK(r.err.find("train.batch_size = 8  [override]") != std::string::npos);
  CHECK(r.err.find("seed = 9  [flag]") != std::string::npos);
  CHECK(r.err.find("diffusion.inference_steps = 20  [flag]") != std::string::npos);
}

TEST_CASE("train, forecast, eval and calibrate round trip") {
  const auto csv = write_csv(300);
  const auto dir = workdir() / "run";
  fs::remove_all(dir);
  const auto cfg = (workdir() / "toy.json").string();
  std::ofstream(cfg) << R"({"data.name": "toy", "data.seq_len": 32, "data.label_len": 16, "data.pred_len": 8,
    "data.train_rows": 180, "data.val_rows": 60, "data.test_rows": 60, "vision.period": 8, "vision.image_size": 16,
    "model.d_model": 16, "model.n_heads": 2, "model.d_ff": 32, "model.e_layers": 1, "model.patch_len": 8,
    "model.stride": 4, "model.padding": 4, "model.d_fusion": 8, "model.d_ldm": 8, "model.vae_channels": 4,
    "model.latent_channels": 2, "model.vision_channels": 4, "train.batch_size": 8, "train.epochs": 2,
    "train.patience": 1, "train.vae_epochs": 1, "train.vae_images": 16, "diffusion.num_timesteps": 20,
    "diffusion.inference_steps": 5})";
  auto r = invoke({"train", "--config", cfg, "--input", csv, "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "model.ckpt"));
  CHECK(first_line(dir / "train_log.csv") == "vae_epoch,train_loss,val_mse");
  CHECK(first_line(dir / "metrics.csv") == "horizon,mse,mae");
  CHECK(r.out.find("average") != std::string::npos);
  const auto ckpt = (dir / "model.ckpt").string();

  const auto fc = (dir / "forecast.csv").string();
  r = invoke({"forecast", "--checkpoint", ckpt, "--input", csv, "--out", fc});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(first_line(fc) == "index,step,feature,value");
  CHECK(count_lines(fc) == 1 + (300 - 32 + 1) * 8 * 2);
  CHECK(r.err.find("[checkpoint]") != std::string::npos);
  const auto fc2 = (dir / "forecast2.csv").string();
  REQUIRE(invoke({"forecast", "--checkpoint", ckpt, "--input", csv, "--out", fc2}).code == 0);
  std::ifstream a(fc), b(fc2);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));

  const auto mc = (dir / "m.csv").string();
  r = invoke({"eval", "--checkpoint", ckpt, "--out", mc, "--sampler", "ddpm"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(count_lines(mc) == 3);

  r = invoke({"calibrate-scale", "--checkpoint", ckpt});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(std::stod(r.out) > 0.0);

  CHECK(invoke({"forecast", "--checkpoint", ckpt, "--input", csv, "--set", "train.epochs=3"}).code == cli::kConfigError);
  CHECK(invoke({"forecast", "--checkpoint", (workdir() / "missing.ckpt").string(), "--input", csv}).code ==
        cli::kRuntimeError);
  const auto junk = (workdir() / "junk.ckpt").string();
  std::ofstream(junk) << "not a checkpoint at all";
  CHECK(invoke({"eval", "--checkpoint", junk}).code == cli::kConfigError);
  CHECK(invoke({"forecast", "--checkpoint", ckpt, "--input", csv, "--out", "/proc/forbidden/f.csv"}).code ==
        cli::kRuntimeError);
  fs::remove_all(workdir());
}

TEST_CASE("shipped desk config matches the desk preset") {
  pipeline::Config c;
  pipeline::apply_file(c, LDM4TS_SOURCE_DIR "/tools/desk.json");
  CHECK(pipeline::to_json(c) == pipeline::to_json(pipeline::desk_config()));
}
