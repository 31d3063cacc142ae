#include "docdenoise/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "docdenoise/config.hpp"

namespace docdenoise {

namespace {

constexpr char kMagic[8] = {'D', 'D', 'N', 'C', 'K', 'P', 'T', '\0'};

enum class Kind : std::uint8_t { text = 0, tensor = 1, i64 = 2, f64 = 3 };

uint64_t fnv1a(const char* data, std::size_t n) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void header(const std::string& name, Kind kind) {
    pod(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    pod(kind);
  }
  void text(const std::string& name, const std::string& value) {
    header(name, Kind::text);
    pod(static_cast<std::uint64_t>(value.size()));
    bytes(value.data(), value.size());
  }
  void i64(const std::string& name, int64_t v) {
    header(name, Kind::i64);
    pod(v);
  }
  void f64(const std::string& name, double v) {
    header(name, Kind::f64);
    pod(v);
  }
  void tensor(const std::string& name, const torch::Tensor& t) {
    header(name, Kind::tensor);
    const auto c = t.detach().contiguous().cpu();
    pod(static_cast<std::int8_t>(c.scalar_type()));
    pod(static_cast<std::uint32_t>(c.dim()));
    for (auto d : c.sizes()) pod(static_cast<int64_t>(d));
    const auto n = static_cast<std::uint64_t>(c.nbytes());
    pod(n);
    bytes(c.data_ptr(), n);
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

struct Record {
  Kind kind;
  std::string text;
  torch::Tensor tensor;
  int64_t i64 = 0;
  double f64 = 0.0;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T pod(const char* field) {
    need(sizeof(T), field);
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n, const char* field) {
    need(n, field);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == size_; }

  std::pair<std::string, Record> record() {
    const auto name_len = pod<std::uint32_t>("record name length");
    std::string name = str(name_len, "record name");
    Record r;
    r.kind = pod<Kind>(name.c_str());
    switch (r.kind) {
      case Kind::text:
        r.text = str(pod<std::uint64_t>(name.c_str()), name.c_str());
        break;
      case Kind::i64:
        r.i64 = pod<int64_t>(name.c_str());
        break;
      case Kind::f64:
        r.f64 = pod<double>(name.c_str());
        break;
      case Kind::tensor: {
        const auto dtype = static_cast<c10::ScalarType>(pod<std::int8_t>(name.c_str()));
        if (dtype != torch::kFloat32 && dtype != torch::kFloat64 && dtype != torch::kInt64) {
          throw CheckpointError("checkpoint field '" + name + "': unsupported dtype");
        }
        const auto ndim = pod<std::uint32_t>(name.c_str());
        if (ndim > 8) throw CheckpointError("checkpoint field '" + name + "': bad rank");
        std::vector<int64_t> shape(ndim);
        for (auto& d : shape) d = pod<int64_t>(name.c_str());
        const auto nbytes = pod<std::uint64_t>(name.c_str());
        r.tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype));
        if (static_cast<std::uint64_t>(r.tensor.nbytes()) != nbytes) {
          throw CheckpointError("checkpoint field '" + name + "': size does not match shape");
        }
        need(nbytes, name.c_str());
        std::memcpy(r.tensor.data_ptr(), data_ + pos_, nbytes);
        pos_ += nbytes;
        break;
      }
      default:
        throw CheckpointError("checkpoint field '" + name + "': unknown record kind");
    }
    return {std::move(name), std::move(r)};
  }

 private:
  void need(std::size_t n, const char* field) const {
    if (size_ - pos_ < n) throw CheckpointError(std::string("checkpoint truncated in field '") + field + "'");
  }

  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

class Records {
 public:
  explicit Records(std::map<std::string, Record> m) : m_(std::move(m)) {}

  const Record& get(const std::string& name, Kind kind) const {
    const auto it = m_.find(name);
    if (it == m_.end()) throw CheckpointError("checkpoint field '" + name + "' is missing");
    if (it->second.kind != kind) throw CheckpointError("checkpoint field '" + name + "' has the wrong kind");
    return it->second;
  }
  bool has(const std::string& name) const { return m_.contains(name); }

  void restore(const std::string& name, torch::Tensor& target) const {
    const auto& src = get(name, Kind::tensor).tensor;
    if (src.sizes() != target.sizes() || src.scalar_type() != target.scalar_type()) {
      throw CheckpointError("checkpoint field '" + name + "' does not match the network shape");
    }
    torch::NoGradGuard no_grad;
    target.copy_(src);
  }

 private:
  std::map<std::string, Record> m_;
};

void write_module(Writer& w, const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& p : m.named_parameters()) w.tensor(prefix + ".param." + p.key(), p.value());
  for (const auto& b : m.named_buffers()) w.tensor(prefix + ".buffer." + b.key(), b.value());
}

void read_module(const Records& r, const std::string& prefix, torch::nn::Module& m) {
  for (auto& p : m.named_parameters()) r.restore(prefix + ".param." + p.key(), p.value());
  for (auto& b : m.named_buffers()) r.restore(prefix + ".buffer." + b.key(), b.value());
}

torch::optim::AdamOptions& adam_options(torch::optim::Adam& opt) {
  return static_cast<torch::optim::AdamOptions&>(opt.param_groups().at(0).options());
}

void write_adam(Writer& w, const std::string& prefix, torch::optim::Adam& opt) {
  const auto& o = adam_options(opt);
  w.f64(prefix + ".lr", o.lr());
  w.f64(prefix + ".beta1", std::get<0>(o.betas()));
  w.f64(prefix + ".beta2", std::get<1>(o.betas()));
  w.f64(prefix + ".eps", o.eps());
  w.f64(prefix + ".weight_decay", o.weight_decay());
  const auto& params = opt.param_groups().at(0).params();
  auto& state = opt.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string key = prefix + "." + std::to_string(i);
    const auto it = state.find(params[i].unsafeGetTensorImpl());
    if (it == state.end()) {
      w.i64(key + ".step", -1);  // never stepped
      continue;
    }
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    w.i64(key + ".step", s.step());
    w.tensor(key + ".exp_avg", s.exp_avg());
    w.tensor(key + ".exp_avg_sq", s.exp_avg_sq());
  }
}

std::unique_ptr<torch::optim::Adam> read_adam(const Records& r, const std::string& prefix,
                                              std::vector<torch::Tensor> params) {
  auto f = [&](const char* name) { return r.get(prefix + "." + name, Kind::f64).f64; };
  auto opts = torch::optim::AdamOptions(f("lr"))
                  .betas({f("beta1"), f("beta2")})
                  .eps(f("eps"))
                  .weight_decay(f("weight_decay"));
  auto opt = std::make_unique<torch::optim::Adam>(params, opts);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string key = prefix + "." + std::to_string(i);
    const auto step = r.get(key + ".step", Kind::i64).i64;
    if (step < 0) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(step);
    auto avg = torch::zeros_like(params[i]);
    auto avg_sq = torch::zeros_like(params[i]);
    r.restore(key + ".exp_avg", avg);
    r.restore(key + ".exp_avg_sq", avg_sq);
    s->exp_avg(avg);
    s->exp_avg_sq(avg_sq);
    opt->state()[params[i].unsafeGetTensorImpl()] = std::move(s);
  }
  return opt;
}

}  // namespace

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  if (!state.gen || !state.dis || !state.opt_gen || !state.opt_dis) {
    throw CheckpointError("save_checkpoint: incomplete training state");
  }
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.pod(kCheckpointVersion);
  w.text("generator_config", to_json(state.gen_cfg).dump());
  w.text("discriminator_config", to_json(state.dis_cfg).dump());
  w.i64("epoch", state.epoch);
  w.f64("grad_variance_ema", state.grad_variance_ema);
  write_module(w, "gen", *state.gen);
  write_module(w, "dis", *state.dis);
  write_adam(w, "opt_gen", *state.opt_gen);
  write_adam(w, "opt_dis", *state.opt_dis);
  auto& buf = w.buffer();
  const uint64_t sum = fnv1a(buf.data(), buf.size());
  w.pod(sum);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint field 'magic': not a checkpoint file");
  }
  Reader head(buf.data() + sizeof(kMagic), buf.size() - sizeof(kMagic));
  const auto version = head.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint field 'version': expected " + std::to_string(kCheckpointVersion) +
                          ", found " + std::to_string(version));
  }
  const std::size_t body_start = sizeof(kMagic) + sizeof(std::uint32_t);
  if (buf.size() < body_start + sizeof(uint64_t)) throw CheckpointError("checkpoint truncated in field 'checksum'");
  const std::size_t body_end = buf.size() - sizeof(uint64_t);
  uint64_t stored;
  std::memcpy(&stored, buf.data() + body_end, sizeof(stored));
  if (stored != fnv1a(buf.data(), body_end)) {
    throw CheckpointError("checkpoint field 'checksum': mismatch (truncated or corrupted file)");
  }

  Reader reader(buf.data() + body_start, body_end - body_start);
  std::map<std::string, Record> map;
  while (!reader.done()) map.insert(reader.record());
  const Records r(std::move(map));

  TrainingState state;
  try {
    state.gen_cfg = generator_config_from_json(nlohmann::json::parse(r.get("generator_config", Kind::text).text));
    state.dis_cfg =
        discriminator_config_from_json(nlohmann::json::parse(r.get("discriminator_config", Kind::text).text));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint field 'config': ") + e.what());
  }
  state.epoch = static_cast<int>(r.get("epoch", Kind::i64).i64);
  state.grad_variance_ema = r.get("grad_variance_ema", Kind::f64).f64;
  state.gen = build_generator(state.gen_cfg, 0);
  state.dis = build_discriminator(state.dis_cfg, 0);
  read_module(r, "gen", *state.gen);
  read_module(r, "dis", *state.dis);
  state.opt_gen = read_adam(r, "opt_gen", state.gen->parameters());
  state.opt_dis = read_adam(r, "opt_dis", state.dis->parameters());
  return state;
}

}  // namespace docdenoise
