#include "odesr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace odesr {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr char magic[8] = {'O', 'D', 'S', 'R', 'C', 'K', 'P', 'T'};

nlohmann::json config_json(const Checkpoint& c) {
  const ModelConfig& m = c.model_config;
  const TrainConfig& t = c.train_config;
  return {{"model",
           {{"d_model", m.d_model},
            {"n_heads", m.n_heads},
            {"enc_layers", m.enc_layers},
            {"dec_layers", m.dec_layers},
            {"ffn_multiplier", m.ffn_multiplier},
            {"max_dimension", m.max_dimension},
            {"max_target_length", m.max_target_length},
            {"seed", m.seed}}},
          {"train",
           {{"lr_peak", t.lr_peak},
            {"lr_floor", t.lr_floor},
            {"warmup_steps", t.warmup_steps},
            {"cycle_steps", t.cycle_steps},
            {"restart_damping", t.restart_damping},
            {"tokens_per_batch", t.tokens_per_batch},
            {"total_steps", t.total_steps},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"eps", t.eps},
            {"seed", t.seed}}}};
}

void read_config(const nlohmann::json& j, Checkpoint& c) {
  const auto& m = j.at("model");
  ModelConfig& mc = c.model_config;
  mc.d_model = m.at("d_model").get<int>();
  mc.n_heads = m.at("n_heads").get<int>();
  mc.enc_layers = m.at("enc_layers").get<int>();
  mc.dec_layers = m.at("dec_layers").get<int>();
  mc.ffn_multiplier = m.at("ffn_multiplier").get<int>();
  mc.max_dimension = m.at("max_dimension").get<int>();
  mc.max_target_length = m.at("max_target_length").get<int>();
  mc.seed = m.at("seed").get<std::uint64_t>();
  const auto& t = j.at("train");
  TrainConfig& tc = c.train_config;
  tc.lr_peak = t.at("lr_peak").get<double>();
  tc.lr_floor = t.at("lr_floor").get<double>();
  tc.warmup_steps = t.at("warmup_steps").get<std::size_t>();
  tc.cycle_steps = t.at("cycle_steps").get<std::size_t>();
  tc.restart_damping = t.at("restart_damping").get<double>();
  tc.tokens_per_batch = t.at("tokens_per_batch").get<std::size_t>();
  tc.total_steps = t.at("total_steps").get<std::size_t>();
  tc.beta1 = t.at("beta1").get<double>();
  tc.beta2 = t.at("beta2").get<double>();
  tc.eps = t.at("eps").get<double>();
  tc.seed = t.at("seed").get<std::uint64_t>();
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_bytes(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& b) : bytes_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void get_doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_tensors(std::string& out, const ModelParams& p) {
  p.visit([&](const std::string& name, const Matrix& m) {
    put_bytes(out, name);
    put<std::uint64_t>(out, m.rows());
    put<std::uint64_t>(out, m.cols());
    out.append(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(double));
  });
}

void get_tensors(Reader& r, ModelParams& p) {
  p.visit([&](const std::string& name, Matrix& m) {
    const std::string stored = r.get_bytes();
    if (stored != name) throw std::runtime_error("checkpoint tensor '" + stored + "' where '" + name + "' expected");
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (rows != m.rows() || cols != m.cols()) throw std::runtime_error("checkpoint tensor '" + name + "' has wrong shape");
    r.get_doubles(m.data(), m.size());
  });
}

}  // namespace

Checkpoint make_checkpoint(const Model& model, const TrainConfig& train_cfg, std::size_t step, const AdamState* adam) {
  Checkpoint c;
  c.model_config = model.config();
  c.train_config = train_cfg;
  c.vocab_hash = model.vocabulary().hash();
  c.step = step;
  c.params = model.params();
  if (adam) c.adam = *adam;
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(magic, sizeof magic);
  put<std::uint32_t>(out, checkpoint_version);
  put_bytes(out, config_json(ckpt).dump());
  put<std::uint64_t>(out, ckpt.vocab_hash);
  put<std::uint64_t>(out, ckpt.step);
  put_tensors(out, ckpt.params);
  put<std::uint8_t>(out, ckpt.adam ? 1 : 0);
  if (ckpt.adam) {
    put<std::uint64_t>(out, ckpt.adam->t);
    put_tensors(out, ckpt.adam->m);
    put_tensors(out, ckpt.adam->v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof magic || std::memcmp(bytes.data(), magic, sizeof magic) != 0)
    throw std::runtime_error("not a checkpoint file");
  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof magic; ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != checkpoint_version) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  read_config(nlohmann::json::parse(r.get_bytes()), c);
  c.vocab_hash = r.get<std::uint64_t>();
  c.step = r.get<std::uint64_t>();
  // Shapes come from a freshly allocated model of the stored config.
  ModelConfig shape_cfg = c.model_config;
  const Model shape(shape_cfg);
  c.params = shape.params().zeros_like();
  get_tensors(r, c.params);
  if (r.get<std::uint8_t>()) {
    AdamState a{c.params.zeros_like(), c.params.zeros_like(), 0};
    a.t = r.get<std::uint64_t>();
    get_tensors(r, a.m);
    get_tensors(r, a.v);
    c.adam = std::move(a);
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model model(ckpt.model_config, ckpt.params);
  if (model.vocabulary().hash() != ckpt.vocab_hash)
    throw std::runtime_error("checkpoint vocabulary hash does not match this build");
  return model;
}

}  // namespace odesr
