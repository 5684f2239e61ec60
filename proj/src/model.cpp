#include "multirc/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "multirc/errors.hpp"
#include "multirc/multiscale.hpp"
#include "multirc/ops.hpp"
#include "multirc/pipeline.hpp"

namespace multirc {

void ModelConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) throw ConfigError("d_model must be a positive multiple of heads");
  if (blocks == 0) throw ConfigError("at least one transformer block is required");
  if (ff_width == 0) throw ConfigError("ff_width must be positive");
  if (base_patch == 0 || scales == 0) throw ConfigError("patch size and scale count must be positive");
  if (scales > 16) throw ConfigError("too many scales");
  if (window < patch_size(scales - 1)) {
    throw ConfigError("window " + std::to_string(window) + " is smaller than the largest patch " +
                      std::to_string(patch_size(scales - 1)));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

std::size_t ModelConfig::padded_window() const { return padded_length(window, base_patch, scales); }

Linear Linear::xavier(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  Linear l{Tensor({in, out}, std::move(w)), Tensor({out}, 0.0)};
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

Tensor Linear::forward(const Tensor& x) const { return ops::add_bias(ops::matmul(x, weight), bias); }

LayerNormParams LayerNormParams::identity(std::size_t width) {
  LayerNormParams p{Tensor({width}, 1.0), Tensor({width}, 0.0)};
  p.gamma.set_requires_grad(true);
  p.beta.set_requires_grad(true);
  return p;
}

Tensor LayerNormParams::forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }

TransformerBlock TransformerBlock::create(const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model;
  TransformerBlock b;
  b.ln1 = LayerNormParams::identity(d);
  b.qkv = Linear::xavier(d, 3 * d, rng);
  b.proj = Linear::xavier(d, d, rng);
  b.ln2 = LayerNormParams::identity(d);
  b.ff1 = Linear::xavier(d, cfg.ff_width, rng);
  b.ff2 = Linear::xavier(cfg.ff_width, d, rng);
  return b;
}

namespace {

Tensor maybe_dropout(const Tensor& x, const ModelConfig& cfg, const ForwardOptions& opts) {
  if (!opts.training || cfg.dropout == 0.0) return x;
  if (!opts.dropout_rng) throw ConfigError("training forward pass with dropout needs an RNG");
  return ops::dropout(x, cfg.dropout, *opts.dropout_rng);
}

}  // namespace

Tensor TransformerBlock::forward(const Tensor& x, std::size_t seq_len, const ModelConfig& cfg,
                                 const ForwardOptions& opts) const {
  std::vector<double>* probs = nullptr;
  std::vector<double> local;
  if (opts.attention_probs) probs = &local;
  Tensor att = ops::attention(qkv.forward(ln1.forward(x)), seq_len, cfg.heads, probs);
  if (opts.attention_probs) opts.attention_probs->push_back(std::move(local));
  Tensor h = ops::add(x, maybe_dropout(proj.forward(att), cfg, opts));
  Tensor ff = ff2.forward(ops::gelu(ff1.forward(ln2.forward(h))));
  return ops::add(h, maybe_dropout(ff, cfg, opts));
}

MultiRCModel::MultiRCModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const Rng root(seed, 0x6d6f64656cULL);
  const std::size_t d = cfg_.d_model;
  for (std::size_t p = 0; p < cfg_.scales; ++p) {
    Rng rng = root.split(p);
    ScaleEmbedding e;
    e.patch = Linear::xavier(cfg_.patch_size(p), d, rng);
    const std::size_t n = cfg_.patch_count(p);
    std::vector<double> pos(n * d);
    for (auto& v : pos) v = rng.uniform(-0.02, 0.02);
    e.pos = Tensor({n, d}, std::move(pos));
    e.pos.set_requires_grad(true);
    embeddings_.push_back(std::move(e));
  }
  const std::size_t stacks = cfg_.share_scales ? 1 : cfg_.scales;
  for (std::size_t s = 0; s < stacks; ++s) {
    Rng rng = root.split(100 + s);
    std::vector<TransformerBlock> blocks;
    for (std::size_t b = 0; b < cfg_.blocks; ++b) blocks.push_back(TransformerBlock::create(cfg_, rng));
    stacks_.push_back(std::move(blocks));
  }
  Rng rng = root.split(1000);
  std::size_t flat = 0;
  for (std::size_t p = 0; p < cfg_.scales; ++p) flat += cfg_.patch_count(p) * d;
  dec_hidden_ = Linear::xavier(flat, d * cfg_.scales, rng);
  dec_out_ = Linear::xavier(d * cfg_.scales, cfg_.window, rng);
}

Tensor MultiRCModel::embed(std::size_t scale, const Tensor& patches) const {
  if (scale >= cfg_.scales) throw ShapeError("scale index out of range");
  const auto& e = embeddings_[scale];
  if (patches.rank() != 2 || patches.cols() != cfg_.patch_size(scale) || patches.rows() % cfg_.patch_count(scale) != 0) {
    throw ShapeError("embed: patches " + shape_str(patches.shape()) + " do not match scale " + std::to_string(scale) +
                     " (" + std::to_string(cfg_.patch_count(scale)) + " x " + std::to_string(cfg_.patch_size(scale)) +
                     ")");
  }
  return ops::add_tiled(e.patch.forward(patches), e.pos);
}

Tensor MultiRCModel::encode(std::size_t scale, const Tensor& embedded, const ForwardOptions& opts) const {
  if (scale >= cfg_.scales) throw ShapeError("scale index out of range");
  Tensor x = embedded;
  for (const auto& block : stacks_[stack_for(scale)]) x = block.forward(x, cfg_.patch_count(scale), cfg_, opts);
  return x;
}

std::vector<Tensor> MultiRCModel::represent(const std::vector<Tensor>& patches, const ForwardOptions& opts) const {
  if (patches.size() != cfg_.scales) throw ShapeError("represent: expected one patch tensor per scale");
  std::vector<Tensor> out;
  for (std::size_t p = 0; p < cfg_.scales; ++p) out.push_back(encode(p, embed(p, patches[p]), opts));
  return out;
}

Tensor MultiRCModel::decode(const std::vector<Tensor>& reps, std::size_t batch) const {
  if (reps.size() != cfg_.scales) throw ShapeError("decode: missing scale representations");
  std::vector<Tensor> flat;
  for (std::size_t p = 0; p < cfg_.scales; ++p) {
    const std::size_t n = cfg_.patch_count(p);
    if (reps[p].rank() != 2 || reps[p].rows() != batch * n || reps[p].cols() != cfg_.d_model) {
      throw ShapeError("decode: scale " + std::to_string(p) + " representation has shape " + shape_str(reps[p].shape()));
    }
    flat.push_back(ops::reshape(reps[p], {batch, n * cfg_.d_model}));
  }
  Tensor z = flat.size() == 1 ? flat.front() : ops::concat_cols(flat);
  return dec_out_.forward(ops::gelu(dec_hidden_.forward(z)));
}

std::vector<NamedTensor> MultiRCModel::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t p = 0; p < embeddings_.size(); ++p) {
    const std::string pre = "embed." + std::to_string(p) + ".";
    out.push_back({pre + "weight", embeddings_[p].patch.weight});
    out.push_back({pre + "bias", embeddings_[p].patch.bias});
    out.push_back({pre + "pos", embeddings_[p].pos});
  }
  for (std::size_t s = 0; s < stacks_.size(); ++s) {
    for (std::size_t b = 0; b < stacks_[s].size(); ++b) {
      const std::string pre = "encoder." + std::to_string(s) + ".block." + std::to_string(b) + ".";
      const auto& blk = stacks_[s][b];
      out.push_back({pre + "ln1.gamma", blk.ln1.gamma});
      out.push_back({pre + "ln1.beta", blk.ln1.beta});
      out.push_back({pre + "qkv.weight", blk.qkv.weight});
      out.push_back({pre + "qkv.bias", blk.qkv.bias});
      out.push_back({pre + "proj.weight", blk.proj.weight});
      out.push_back({pre + "proj.bias", blk.proj.bias});
      out.push_back({pre + "ln2.gamma", blk.ln2.gamma});
      out.push_back({pre + "ln2.beta", blk.ln2.beta});
      out.push_back({pre + "ff1.weight", blk.ff1.weight});
      out.push_back({pre + "ff1.bias", blk.ff1.bias});
      out.push_back({pre + "ff2.weight", blk.ff2.weight});
      out.push_back({pre + "ff2.bias", blk.ff2.bias});
    }
  }
  out.push_back({"decoder.hidden.weight", dec_hidden_.weight});
  out.push_back({"decoder.hidden.bias", dec_hidden_.bias});
  out.push_back({"decoder.out.weight", dec_out_.weight});
  out.push_back({"decoder.out.bias", dec_out_.bias});
  return out;
}

std::vector<Tensor> MultiRCModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

std::size_t MultiRCModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.size();
  return n;
}

std::vector<std::vector<double>> snapshot_parameters(const MultiRCModel& model) {
  std::vector<std::vector<double>> out;
  for (const auto& t : model.parameters()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void restore_parameters(MultiRCModel& model, const std::vector<std::vector<double>>& values) {
  auto params = model.parameters();
  if (params.size() != values.size()) throw ShapeError("snapshot does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != values[i].size()) throw ShapeError("snapshot does not match the model");
    std::copy(values[i].begin(), values[i].end(), params[i].mutable_data().begin());
  }
}

std::uint64_t parameter_hash(const MultiRCModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : model.parameters()) {
    for (double v : t.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

std::string model_config_text(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "window=" << cfg.window << '\n'
      << "d_model=" << cfg.d_model << '\n'
      << "heads=" << cfg.heads << '\n'
      << "blocks=" << cfg.blocks << '\n'
      << "ff_width=" << cfg.ff_width << '\n'
      << "base_patch=" << cfg.base_patch << '\n'
      << "scales=" << cfg.scales << '\n'
      << "dropout=" << format_double(cfg.dropout) << '\n'
      << "share_scales=" << (cfg.share_scales ? 1 : 0) << '\n';
  return out.str();
}

ModelConfig parse_model_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed checkpoint config line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("checkpoint config lacks '") + key + "'");
    return it->second;
  };
  ModelConfig cfg;
  try {
    cfg.window = std::stoull(get("window"));
    cfg.d_model = std::stoull(get("d_model"));
    cfg.heads = std::stoull(get("heads"));
    cfg.blocks = std::stoull(get("blocks"));
    cfg.ff_width = std::stoull(get("ff_width"));
    cfg.base_patch = std::stoull(get("base_patch"));
    cfg.scales = std::stoull(get("scales"));
    cfg.dropout = std::stod(get("dropout"));
    cfg.share_scales = get("share_scales") == "1";
  } catch (const std::logic_error&) {
    throw DataError("checkpoint config holds a malformed number");
  }
  return cfg;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MultiRCModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write("MRC1", 4);
  const std::string cfg = model_config_text(model.config());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto params = model.named_parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

MultiRCModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "MRC1", 4) != 0) throw DataError("not a MultiRC checkpoint: " + path.string());
  const auto cfg_len = get<std::uint32_t>(in);
  std::string cfg_text(cfg_len, '\0');
  if (!in.read(cfg_text.data(), cfg_len)) throw DataError("truncated checkpoint");
  MultiRCModel model(parse_model_config_text(cfg_text), 0);
  auto params = model.named_parameters();
  const auto count = get<std::uint32_t>(in);
  if (count != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, config expects " +
                    std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    const auto name_len = get<std::uint32_t>(in);
    std::string stored(name_len, '\0');
    if (!in.read(stored.data(), name_len)) throw DataError("truncated checkpoint");
    if (stored != name) throw DataError("checkpoint tensor '" + stored + "' where '" + name + "' was expected");
    const auto rank = get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in);
    if (shape != t.shape()) {
      throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", config expects " +
                      shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    if (!in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(double)))) {
      throw DataError("truncated checkpoint");
    }
  }
  return model;
}

}  // namespace multirc
