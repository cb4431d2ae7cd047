#include "gpcount/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gpcount/errors.hpp"
#include "gpcount/random.hpp"

namespace gpc {
namespace {

constexpr const char* kCheckpointMagic = "GPCOUNT-CKPT";
constexpr int kCheckpointVersion = 1;
constexpr double kOutputInitGain = 0.1;
constexpr double kOutputInitBias = 0.05;

ConvParams make_conv(std::size_t cout, std::size_t cin, std::size_t k, std::size_t stride,
                     std::size_t padding) {
  ConvParams p;
  p.weight = Array({cout, cin, k, k});
  p.bias = Array({cout});
  p.stride = stride;
  p.padding = padding;
  return p;
}

ModelParams skeleton(const ModelConfig& cfg) {
  if (cfg.encoder_channels.empty()) throw ConfigError("model: at least one encoder stage required");
  if (cfg.latent_channels == 0 || cfg.in_channels == 0) throw ConfigError("model: channel counts must be positive");
  if (cfg.height % cfg.downsample() != 0 || cfg.width % cfg.downsample() != 0) {
    throw ConfigError("model: input size must be a multiple of " + std::to_string(cfg.downsample()));
  }
  ModelParams p;
  p.config = cfg;
  std::size_t cin = cfg.in_channels;
  for (auto c : cfg.encoder_channels) {
    if (c == 0) throw ConfigError("model: encoder channel counts must be positive");
    p.encoder.push_back(make_conv(c, cin, 3, 2, 1));
    cin = c;
  }
  p.encoder.push_back(make_conv(cfg.latent_channels, cin, 1, 1, 0));
  p.decoder.push_back(make_conv(cfg.latent_channels, cfg.latent_channels, 3, 1, 1));
  p.decoder.push_back(make_conv(1, cfg.latent_channels, 1, 1, 0));
  return p;
}

ad::Node apply(const BoundLayer& layer, const ad::Node& x) {
  return ad::conv2d(x, layer.weight, layer.bias, layer.stride, layer.padding);
}

}  // namespace

std::vector<Array*> ModelParams::tensors() {
  std::vector<Array*> out;
  for (auto* group : {&encoder, &decoder}) {
    for (auto& l : *group) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

std::vector<const Array*> ModelParams::tensors() const {
  std::vector<const Array*> out;
  for (const auto* group : {&encoder, &decoder}) {
    for (const auto& l : *group) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  return out;
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    out.push_back("encoder." + std::to_string(i) + ".weight");
    out.push_back("encoder." + std::to_string(i) + ".bias");
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    out.push_back("decoder." + std::to_string(i) + ".weight");
    out.push_back("decoder." + std::to_string(i) + ".bias");
  }
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

std::vector<ad::Node> BoundModel::leaves() const {
  std::vector<ad::Node> out;
  for (const auto* group : {&encoder, &decoder}) {
    for (const auto& l : *group) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
  }
  return out;
}

BoundModel bind(const ModelParams& params, bool trainable) {
  auto leaf = [trainable](const Array& a) {
    return trainable ? ad::Node::parameter(a) : ad::Node::constant(a);
  };
  BoundModel m;
  m.config = params.config;
  for (const auto& l : params.encoder) m.encoder.push_back({leaf(l.weight), leaf(l.bias), l.stride, l.padding});
  for (const auto& l : params.decoder) m.decoder.push_back({leaf(l.weight), leaf(l.bias), l.stride, l.padding});
  return m;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = skeleton(config);
  Rng rng(derive_seed(seed, {0x1a17u}));
  auto tensors = p.tensors();
  const std::size_t n_layers = tensors.size() / 2;
  for (std::size_t li = 0; li < n_layers; ++li) {
    Array& w = *tensors[2 * li];
    Array& b = *tensors[2 * li + 1];
    const std::size_t fan_in = w.dim(1) * w.dim(2) * w.dim(3);
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    const bool last = li + 1 == n_layers;
    if (last) bound *= kOutputInitGain;
    for (auto& v : w.data) v = rng.uniform(-bound, bound);
    for (auto& v : b.data) v = last ? kOutputInitBias : 0.0;
  }
  return p;
}

Encoded encode(const Array& image, const BoundModel& model) {
  const auto& cfg = model.config;
  if (image.rank() != 3 || image.dim(0) != cfg.in_channels) {
    throw ShapeError("encode: expected [" + std::to_string(cfg.in_channels) + "xHxW] input, got " +
                     shape_to_string(image.shape));
  }
  if (image.dim(1) % cfg.downsample() != 0 || image.dim(2) % cfg.downsample() != 0) {
    throw ShapeError("encode: input extents " + shape_to_string(image.shape) +
                     " are not multiples of " + std::to_string(cfg.downsample()));
  }
  ad::Node x = ad::Node::constant(image);
  const std::size_t stages = model.encoder.size() - 1;
  for (std::size_t i = 0; i < stages; ++i) x = ad::relu(apply(model.encoder[i], x));
  x = apply(model.encoder.back(), x);
  Encoded e;
  e.latent = Array({x.size()}, x.value().data);
  e.node = x;
  return e;
}

ad::Node decode(const ad::Node& latent, const BoundModel& model, std::size_t out_h,
                std::size_t out_w) {
  const auto& cfg = model.config;
  if (latent.value().rank() != 3 || latent.shape()[0] != cfg.latent_channels) {
    throw ShapeError("decode: expected [" + std::to_string(cfg.latent_channels) +
                     "xhxw] latent, got " + shape_to_string(latent.shape()));
  }
  ad::Node y = ad::relu(apply(model.decoder[0], latent));
  y = ad::relu(apply(model.decoder[1], y));
  y = ad::scalar_mul(y, cfg.output_scale);
  return ad::bilinear_upsample(y, out_h, out_w);
}

ad::Node forward(const Array& image, const BoundModel& model) {
  auto enc = encode(image, model);
  return decode(enc.node, model, image.dim(1), image.dim(2));
}

double predict_count(const Array& image, const ModelParams& params) {
  const auto model = bind(params, false);
  const auto y = forward(image, model);
  double s = 0.0;
  for (double v : y.value().data) s += v;
  return s;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint " + path.string());
  const auto& c = params.config;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "config " << c.height << ' ' << c.width << ' ' << c.in_channels << ' '
     << c.latent_channels << ' ' << c.encoder_channels.size();
  for (auto ch : c.encoder_channels) os << ' ' << ch;
  os << ' ' << std::bit_cast<std::uint64_t>(c.output_scale) << '\n';
  const auto tensors = params.tensors();
  const auto names = params.tensor_names();
  os << "tensors " << tensors.size() << '\n';
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    os << names[i] << ' ' << tensors[i]->rank();
    for (auto d : tensors[i]->shape) os << ' ' << d;
    os << '\n';
  }
  os << "data\n";
  for (const auto* t : tensors) {
    for (double v : t->data) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
      os.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
  if (!os) throw Error("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path.string() + ": cannot open");
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) -> void {
    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(is, line)) fail("unexpected end of file");
    ++lineno;
    return std::istringstream(line);
  };

  {
    auto ls = next_line();
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != kCheckpointMagic) fail("not a checkpoint file");
    if (version != kCheckpointVersion) fail("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig cfg;
  {
    auto ls = next_line();
    std::string tag;
    std::size_t n_stages = 0;
    std::uint64_t scale_bits = 0;
    ls >> tag >> cfg.height >> cfg.width >> cfg.in_channels >> cfg.latent_channels >> n_stages;
    if (tag != "config" || !ls) fail("malformed config line");
    cfg.encoder_channels.resize(n_stages);
    for (auto& ch : cfg.encoder_channels) ls >> ch;
    ls >> scale_bits;
    if (!ls) fail("malformed config line");
    cfg.output_scale = std::bit_cast<double>(scale_bits);
  }
  ModelParams params;
  try {
    params = skeleton(cfg);
  } catch (const ConfigError& e) {
    fail(e.what());
  }
  auto tensors = params.tensors();
  const auto names = params.tensor_names();
  {
    auto ls = next_line();
    std::string tag;
    std::size_t n = 0;
    ls >> tag >> n;
    if (tag != "tensors" || n != tensors.size()) fail("tensor table does not match the architecture");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto ls = next_line();
    std::string name;
    std::size_t rank = 0;
    ls >> name >> rank;
    Shape shape(rank);
    for (auto& d : shape) ls >> d;
    if (!ls || name != names[i] || shape != tensors[i]->shape) {
      fail("tensor entry does not match expected " + names[i] + " " +
           shape_to_string(tensors[i]->shape));
    }
  }
  {
    next_line();
    if (line != "data") fail("missing data marker");
  }
  for (auto* t : tensors) {
    for (auto& v : t->data) {
      unsigned char bytes[8];
      if (!is.read(reinterpret_cast<char*>(bytes), 8)) fail("truncated tensor data");
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      v = std::bit_cast<double>(bits);
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) fail("trailing bytes after tensor data");
  return params;
}

}  // namespace gpc
