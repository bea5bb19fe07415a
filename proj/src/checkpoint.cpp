#include "glomseg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace glomseg {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'O', 'M', 'C', 'K', 'P', 'T'};

std::string join_ints(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::int64_t> split_ints(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoll(tok));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u64(std::uint64_t v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    u64(t.rank());
    for (auto d : t.shape()) u64(static_cast<std::uint64_t>(d));
    os_.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string origin) : is_(is), origin_(std::move(origin)) {}
  std::uint64_t u64() {
    std::uint64_t v = 0;
    read(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u64();
    if (n > (1u << 28)) fail("implausible string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    const auto rank = u64();
    if (rank > 8) fail("implausible tensor rank for " + name);
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::int64_t>(u64()));
    Tensor t(shape);
    read(t.ptr(), t.numel() * sizeof(double));
    return {std::move(name), std::move(t)};
  }
  void read(void* dst, std::size_t n) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!is_) fail("truncated file");
  }
  [[noreturn]] void fail(const std::string& why) { throw CheckpointError(origin_ + ": " + why); }

 private:
  std::istream& is_;
  std::string origin_;
};

struct RawCheckpoint {
  ModelConfig config;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> buffers;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) r.fail("not a checkpoint file");
  const auto version = r.u64();
  if (version != static_cast<std::uint64_t>(kCheckpointVersion))
    r.fail("unsupported checkpoint version " + std::to_string(version));
  RawCheckpoint raw;
  try {
    raw.config = parse_model_config(r.str());
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("bad model config: ") + e.what());
  }
  const auto n_meta = r.u64();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    raw.meta[k] = r.str();
  }
  const auto n_params = r.u64();
  for (std::uint64_t i = 0; i < n_params; ++i) raw.params.push_back(r.tensor());
  const auto n_buffers = r.u64();
  for (std::uint64_t i = 0; i < n_buffers; ++i) raw.buffers.push_back(r.tensor());
  return raw;
}

template <typename Dst>
void restore(const std::vector<std::pair<std::string, Tensor>>& saved, Dst& dst, const char* kind,
             const std::filesystem::path& path) {
  if (saved.size() != dst.size())
    throw CheckpointError(path.string() + ": " + kind + " count " + std::to_string(saved.size()) +
                          " does not match the model's " + std::to_string(dst.size()));
  for (std::size_t i = 0; i < saved.size(); ++i) {
    Tensor& target = *dst[i].second;
    if (saved[i].first != dst[i].first || saved[i].second.shape() != target.shape())
      throw CheckpointError(path.string() + ": " + kind + " mismatch at " + dst[i].first + " " +
                            shape_str(target.shape()) + " vs saved " + saved[i].first + " " +
                            shape_str(saved[i].second.shape()));
  }
  for (std::size_t i = 0; i < saved.size(); ++i) *dst[i].second = saved[i].second;
}

void restore_into(const RawCheckpoint& raw, SegmentationModel& model, const std::filesystem::path& path) {
  std::vector<std::pair<std::string, Tensor*>> params;
  auto named = model.named_parameters();
  for (auto& [name, var] : named) params.emplace_back(name, &var.mutable_value());
  auto buffers = model.named_buffers();
  restore(raw.params, params, "parameter", path);
  restore(raw.buffers, buffers, "buffer", path);
}

}  // namespace

std::string serialize_model_config(const ModelConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "arch = " << to_string(c.arch) << "\n"
     << "variant = " << c.variant << "\n"
     << "num_classes = " << c.num_classes << "\n"
     << "input_channels = " << c.input_channels << "\n"
     << "embed_dims = " << join_ints(c.embed_dims) << "\n"
     << "depths = " << join_ints(c.depths) << "\n"
     << "num_heads = " << join_ints(c.num_heads) << "\n"
     << "sr_ratios = " << join_ints(c.sr_ratios) << "\n"
     << "patch_sizes = " << join_ints(c.patch_sizes) << "\n"
     << "strides = " << join_ints(c.strides) << "\n"
     << "mlp_ratio = " << c.mlp_ratio << "\n"
     << "decoder_dim = " << c.decoder_dim << "\n"
     << "unet_widths = " << join_ints(c.unet_widths) << "\n"
     << "drop_rate_fp = " << c.drop_rate_fp << "\n"
     << "init_seed = " << c.init_seed << "\n";
  return os.str();
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "arch") c.arch = parse_architecture(value);
    else if (key == "variant") c.variant = value;
    else if (key == "num_classes") c.num_classes = std::stoll(value);
    else if (key == "input_channels") c.input_channels = std::stoll(value);
    else if (key == "embed_dims") c.embed_dims = split_ints(value);
    else if (key == "depths") c.depths = split_ints(value);
    else if (key == "num_heads") c.num_heads = split_ints(value);
    else if (key == "sr_ratios") c.sr_ratios = split_ints(value);
    else if (key == "patch_sizes") c.patch_sizes = split_ints(value);
    else if (key == "strides") c.strides = split_ints(value);
    else if (key == "mlp_ratio") c.mlp_ratio = std::stoll(value);
    else if (key == "decoder_dim") c.decoder_dim = std::stoll(value);
    else if (key == "unet_widths") c.unet_widths = split_ints(value);
    else if (key == "drop_rate_fp") c.drop_rate_fp = std::stod(value);
    else if (key == "init_seed") c.init_seed = std::stoull(value);
    else throw std::invalid_argument("unknown model config key '" + key + "'");
  }
  c.validate();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, SegmentationModel& model,
                     const std::map<std::string, std::string>& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    Writer w(out);
    out.write(kMagic, sizeof kMagic);
    w.u64(kCheckpointVersion);
    w.str(serialize_model_config(model.config()));
    w.u64(meta.size());
    for (const auto& [k, v] : meta) {
      w.str(k);
      w.str(v);
    }
    const auto params = model.named_parameters();
    w.u64(params.size());
    for (const auto& [name, var] : params) w.tensor(name, var.value());
    const auto buffers = model.named_buffers();
    w.u64(buffers.size());
    for (const auto& [name, t] : buffers) w.tensor(name, *t);
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  RawCheckpoint raw = read_raw(path);
  LoadedCheckpoint out{build_model(raw.config), std::move(raw.meta)};
  restore_into(raw, *out.model, path);
  return out;
}

std::map<std::string, std::string> load_weights(const std::filesystem::path& path,
                                                SegmentationModel& model) {
  RawCheckpoint raw = read_raw(path);
  const ModelConfig& have = model.config();
  if (raw.config.arch != have.arch || raw.config.embed_dims != have.embed_dims ||
      raw.config.depths != have.depths || raw.config.unet_widths != have.unet_widths ||
      raw.config.num_classes != have.num_classes || raw.config.decoder_dim != have.decoder_dim)
    throw CheckpointError(path.string() + ": checkpoint architecture " +
                          std::string(to_string(raw.config.arch)) + "/" + raw.config.variant +
                          " does not match model " + std::string(to_string(have.arch)) + "/" +
                          have.variant);
  restore_into(raw, model, path);
  return raw.meta;
}

}  // namespace glomseg
