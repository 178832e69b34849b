#include "lanefuse/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace lanefuse {

void MlpBundle::zero_gradients() {
  for (auto& l : layers) {
    l.gw.setZero();
    l.gb.setZero();
  }
}

double MlpBundle::gradient_norm() const {
  double sq = 0.0;
  for (const auto& l : layers) sq += l.gw.squaredNorm() + l.gb.squaredNorm();
  return std::sqrt(sq);
}

double MlpBundle::parameter_norm() const {
  double sq = 0.0;
  for (const auto& l : layers) sq += l.w.squaredNorm() + l.b.squaredNorm();
  return std::sqrt(sq);
}

std::int64_t MlpBundle::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

bool MlpBundle::all_finite() const {
  for (const auto& l : layers) {
    if (!l.w.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

MlpBundle init_params(const MlpSpec& spec, std::uint64_t seed) {
  if (spec.layer_widths.size() < 2) {
    throw std::runtime_error("init_params: spec needs at least input and output widths");
  }
  for (int w : spec.layer_widths) {
    if (w <= 0) throw std::runtime_error("init_params: widths must be positive");
  }
  MlpBundle net;
  net.spec = spec;
  net.seed = seed;
  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  };
  const int n_layers = static_cast<int>(spec.layer_widths.size()) - 1;
  net.layers.resize(static_cast<std::size_t>(n_layers));
  for (int l = 0; l < n_layers; ++l) {
    const int fan_in = spec.layer_widths[static_cast<std::size_t>(l)];
    const int fan_out = spec.layer_widths[static_cast<std::size_t>(l) + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    MlpLayer& layer = net.layers[static_cast<std::size_t>(l)];
    layer.w.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.w(r, c) = scale * uniform();
    }
    layer.b = VecX::Zero(fan_out);
    layer.gw = MatX::Zero(fan_out, fan_in);
    layer.gb = VecX::Zero(fan_out);
    layer.mw = MatX::Zero(fan_out, fan_in);
    layer.vw = MatX::Zero(fan_out, fan_in);
    layer.mb = VecX::Zero(fan_out);
    layer.vb = VecX::Zero(fan_out);
  }
  return net;
}

VecX mlp_forward(const MlpBundle& net, const VecX& input, ForwardTape* tape) {
  if (input.size() != net.spec.input_size()) {
    throw std::runtime_error("mlp_forward: input size " + std::to_string(input.size()) +
                             " != expected " + std::to_string(net.spec.input_size()));
  }
  if (tape != nullptr) {
    tape->input = input;
    tape->pre.clear();
    tape->post.clear();
    tape->revision = net.revision;
  }
  VecX x = input;
  const int n_layers = static_cast<int>(net.layers.size());
  for (int l = 0; l < n_layers; ++l) {
    const MlpLayer& layer = net.layers[static_cast<std::size_t>(l)];
    VecX z = layer.w * x + layer.b;
    if (tape != nullptr) tape->pre.push_back(z);
    if (l + 1 < n_layers) {
      x = z.cwiseMax(0.0);  // ReLU
    } else if (net.spec.output_activation == Activation::kTanh) {
      x = z.array().tanh().matrix();
    } else {
      x = z;
    }
    if (tape != nullptr) tape->post.push_back(x);
  }
  return x;
}

VecX mlp_backward(MlpBundle& net, const ForwardTape& tape, const VecX& output_grad) {
  const int n_layers = static_cast<int>(net.layers.size());
  if (tape.revision != net.revision ||
      static_cast<int>(tape.pre.size()) != n_layers ||
      tape.input.size() != net.spec.input_size()) {
    throw std::runtime_error("mlp_backward: stale or mismatched tape");
  }
  if (output_grad.size() != net.spec.output_size()) {
    throw std::runtime_error("mlp_backward: output_grad size mismatch");
  }
  VecX g = output_grad;
  if (net.spec.output_activation == Activation::kTanh) {
    const VecX& y = tape.post.back();
    g = g.cwiseProduct((1.0 - y.array().square()).matrix());
  }
  for (int l = n_layers - 1; l >= 0; --l) {
    MlpLayer& layer = net.layers[static_cast<std::size_t>(l)];
    const VecX& x = l == 0 ? tape.input : tape.post[static_cast<std::size_t>(l) - 1];
    layer.gw.noalias() += g * x.transpose();
    layer.gb += g;
    VecX gx = layer.w.transpose() * g;
    if (l > 0) {
      const VecX& pre = tape.pre[static_cast<std::size_t>(l) - 1];
      gx = (pre.array() > 0.0).select(gx, 0.0);
    }
    g = std::move(gx);
  }
  return g;
}

void adam_step(MlpBundle& net, double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  net.adam_steps += 1;
  const double t = static_cast<double>(net.adam_steps);
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double bc2 = 1.0 - std::pow(kBeta2, t);
  for (auto& l : net.layers) {
    l.mw = kBeta1 * l.mw + (1.0 - kBeta1) * l.gw;
    l.vw = kBeta2 * l.vw + (1.0 - kBeta2) * l.gw.cwiseProduct(l.gw);
    l.mb = kBeta1 * l.mb + (1.0 - kBeta1) * l.gb;
    l.vb = kBeta2 * l.vb + (1.0 - kBeta2) * l.gb.cwiseProduct(l.gb);
    l.w -= (lr * (l.mw / bc1).array() / ((l.vw / bc2).array().sqrt() + kEps)).matrix();
    l.b -= (lr * (l.mb / bc1).array() / ((l.vb / bc2).array().sqrt() + kEps)).matrix();
  }
  net.zero_gradients();
  net.revision += 1;
  if (!net.all_finite()) {
    throw std::runtime_error("adam_step: parameters became non-finite");
  }
}

namespace {

constexpr char kMagic[4] = {'L', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  write_bytes(out, s.data(), s.size());
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw std::runtime_error(std::string("checkpoint load: unexpected end of file while reading ") + what);
  }
}

template <typename T>
T read_pod(std::ifstream& in, const char* what) {
  T v;
  read_bytes(in, &v, sizeof(T), what);
  return v;
}

std::string read_string(std::ifstream& in, const char* what) {
  const auto n = read_pod<std::uint64_t>(in, what);
  if (n > (1ull << 32)) {
    throw std::runtime_error(std::string("checkpoint load: corrupt length for ") + what);
  }
  std::string s(n, '\0');
  read_bytes(in, s.data(), n, what);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const MlpBundle*>>& bundles,
                     const std::string& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  write_bytes(out, kMagic, 4);
  write_pod<std::uint32_t>(out, kVersion);
  write_string(out, meta);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(bundles.size()));
  for (const auto& [name, net] : bundles) {
    write_string(out, name);
    write_pod<std::uint64_t>(out, net->seed);
    write_pod<std::uint8_t>(out, net->spec.output_activation == Activation::kTanh ? 1 : 0);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net->spec.layer_widths.size()));
    for (int w : net->spec.layer_widths) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    for (const auto& l : net->layers) {
      write_bytes(out, l.w.data(), sizeof(double) * static_cast<std::size_t>(l.w.size()));
      write_bytes(out, l.b.data(), sizeof(double) * static_cast<std::size_t>(l.b.size()));
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint load: " + path + " is not a checkpoint file");
  }
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kVersion) {
    throw std::runtime_error("checkpoint load: version mismatch (found " +
                             std::to_string(version) + ", expected " +
                             std::to_string(kVersion) + ")");
  }
  CheckpointData data;
  data.meta = read_string(in, "metadata");
  const auto n_bundles = read_pod<std::uint32_t>(in, "bundle count");
  for (std::uint32_t i = 0; i < n_bundles; ++i) {
    const std::string name = read_string(in, "bundle name");
    const auto seed = read_pod<std::uint64_t>(in, "seed");
    const auto act = read_pod<std::uint8_t>(in, "activation");
    const auto n_widths = read_pod<std::uint32_t>(in, "width count");
    if (n_widths < 2 || n_widths > 64) {
      throw std::runtime_error("checkpoint load: corrupt width count");
    }
    MlpSpec spec;
    spec.output_activation = act != 0 ? Activation::kTanh : Activation::kNone;
    for (std::uint32_t k = 0; k < n_widths; ++k) {
      spec.layer_widths.push_back(static_cast<int>(read_pod<std::uint32_t>(in, "width")));
    }
    MlpBundle net = init_params(spec, seed);
    for (auto& l : net.layers) {
      read_bytes(in, l.w.data(), sizeof(double) * static_cast<std::size_t>(l.w.size()), "weights");
      read_bytes(in, l.b.data(), sizeof(double) * static_cast<std::size_t>(l.b.size()), "biases");
    }
    data.bundles.emplace(name, std::move(net));
  }
  return data;
}

}  // namespace lanefuse
