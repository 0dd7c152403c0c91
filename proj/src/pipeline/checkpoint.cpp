#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/pipeline/pipeline.hpp"

namespace ldm4ts::pipeline {

namespace {

constexpr char kMagic[8] = {'L', 'D', 'M', '4', 'T', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write checkpoint: " + path);
  }
  void raw(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void array(const std::string& name, const Tensor& t) {
    str(name);
    u64(t.rank());
    for (std::size_t d : t.shape()) u64(d);
    raw(t.ptr(), t.numel() * sizeof(double));
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("failed writing checkpoint: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open checkpoint: " + path);
  }
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("checkpoint truncated: " + path_);
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str(std::size_t limit = std::size_t{1} << 26) {
    const auto n = u64();
    if (n > limit) throw FormatError("checkpoint string length out of range: " + path_);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  Tensor array(std::string& name) {
    name = str(4096);
    const auto rank = u64();
    if (rank > 8) throw FormatError("checkpoint array rank out of range: " + name);
    Shape s(rank);
    std::uint64_t n = 1;
    for (auto& d : s) {
      d = u64();
      n *= d;
      if (n > (std::uint64_t{1} << 32)) throw FormatError("checkpoint array too large: " + name);
    }
    Tensor t(s);
    raw(t.ptr(), t.numel() * sizeof(double));
    return t;
  }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  Writer w(path);
  w.raw(kMagic, sizeof kMagic);
  std::uint32_t version = kVersion;
  w.raw(&version, sizeof version);
  w.str(to_json(m.config()).dump());
  w.u64(config_hash(m.config()));
  w.u64(m.dims());
  w.f64(m.latent_scale);
  w.u64(m.vae_trainable() ? 1 : 0);

  std::vector<std::pair<std::string, Tensor>> arrays;
  for (const auto& p : m.parameters()) arrays.emplace_back("param/" + p.name(), p.value());
  if (m.scaler) {
    const auto D = m.scaler->mean.size();
    arrays.emplace_back("scaler/mean", Tensor({D}, m.scaler->mean));
    arrays.emplace_back("scaler/scale", Tensor({D}, m.scaler->scale));
  }
  if (m.optimizer) {
    auto& opt = *m.optimizer;
    arrays.emplace_back("adam/steps", Tensor::scalar(static_cast<double>(opt.steps())));
    for (std::size_t i = 0; i < opt.params().size(); ++i) {
      arrays.emplace_back("adam/m/" + opt.params()[i].name(), opt.first_moments()[i]);
      arrays.emplace_back("adam/v/" + opt.params()[i].name(), opt.second_moments()[i]);
    }
  }
  w.u64(arrays.size());
  for (const auto& [name, t] : arrays) w.array(name, t);
  w.finish();
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not a checkpoint file (bad magic): " + path);
  std::uint32_t version;
  r.raw(&version, sizeof version);
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Config cfg;
  try {
    cfg = from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  if (r.u64() != config_hash(cfg)) throw FormatError("checkpoint config hash mismatch: " + path);
  const auto dims = r.u64();
  auto m = std::make_unique<Model>(cfg, dims);
  m->latent_scale = r.f64();
  const bool vae_trainable = r.u64() != 0;

  std::map<std::string, Tensor> arrays;
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name;
    Tensor t = r.array(name);
    arrays[name] = std::move(t);
  }
  auto fetch = [&](const std::string& name, const Shape& shape) -> Tensor& {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError("checkpoint is missing array " + name);
    if (it->second.shape() != shape) {
      throw FormatError("checkpoint array " + name + " has shape " + shape_str(it->second.shape()) + ", expected " +
                        shape_str(shape));
    }
    return it->second;
  };
  auto params = m->parameters();
  for (auto& p : params) p.mutable_value() = fetch("param/" + p.name(), p.shape());
  m->set_vae_trainable(vae_trainable);
  if (arrays.count("scaler/mean")) {
    data::StandardScaler s;
    s.mean = fetch("scaler/mean", {dims}).vec();
    s.scale = fetch("scaler/scale", {dims}).vec();
    m->scaler = std::move(s);
  }
  if (arrays.count("adam/steps")) {
    std::vector<ag::Var> opt_params;
    for (const auto& p : params)
      if (arrays.count("adam/m/" + p.name())) opt_params.push_back(p);
    m->optimizer = std::make_unique<Adam>(opt_params, AdamConfig{cfg.learning_rate});
    auto& opt = *m->optimizer;
    opt.set_steps(static_cast<std::int64_t>(fetch("adam/steps", {1})[0]));
    for (std::size_t i = 0; i < opt_params.size(); ++i) {
      opt.first_moments()[i] = fetch("adam/m/" + opt_params[i].name(), opt_params[i].shape());
      opt.second_moments()[i] = fetch("adam/v/" + opt_params[i].name(), opt_params[i].shape());
    }
  }
  return m;
}

}  // namespace ldm4ts::pipeline
