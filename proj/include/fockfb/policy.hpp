#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fockfb/fock.hpp"

namespace fockfb {

/// F^4 + 4 F^25.
inline double reward(double fidelity) {
  const double f2 = fidelity * fidelity;
  const double f4 = f2 * f2;
  return f4 + 4.0 * std::pow(fidelity, 25);
}

/// True when the target needs imaginary parts to describe (after removing the
/// global phase of its first populated component).
inline bool needs_complex_mode(const Ket& target, double tol = 1e-12) {
  const auto sup = target.support(1e-20);
  if (sup.empty()) return false;
  const cplx ref = std::polar(1.0, -std::arg(target[sup.front()]));
  for (int n : sup)
    if (std::abs((target[n] * ref).imag()) > tol) return true;
  return false;
}

/// Flattened density matrix fed to the actor: real parts row-major, followed
/// by imaginary parts in complex mode.
struct Observation {
  std::vector<double> values;
  bool complex_mode = false;
  std::size_t size() const { return values.size(); }
};

inline Observation encode_observation(const DensityMatrix& rho, bool complex_mode) {
  const int d = rho.dim();
  Observation obs;
  obs.complex_mode = complex_mode;
  obs.values.reserve(static_cast<std::size_t>(complex_mode ? 2 : 1) * d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) obs.values.push_back(rho(i, j).real());
  if (complex_mode)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) obs.values.push_back(rho(i, j).imag());
  return obs;
}

/// Inverse of the complex-mode encoding.
inline DensityMatrix decode_observation(const Observation& obs) {
  if (!obs.complex_mode) throw std::invalid_argument("decode_observation: real-mode observations are lossy");
  const auto d = static_cast<int>(std::lround(std::sqrt(obs.values.size() / 2.0)));
  if (static_cast<std::size_t>(2 * d * d) != obs.values.size()) throw ShapeMismatch("decode_observation: bad length");
  CMatrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      m(i, j) = cplx(obs.values[static_cast<std::size_t>(i * d + j)],
                     obs.values[static_cast<std::size_t>(d * d + i * d + j)]);
  return DensityMatrix(std::move(m));
}

enum class Activation : std::uint32_t { tanh = 0 };

/// Deterministic actor: tanh hidden layers and a tanh-squashed output.
struct PolicyNet {
  struct Layer {
    RMatrix weight;  // out x in
    RVector bias;
  };
  std::vector<Layer> layers;
  int action_dim = 1;
  Activation activation = Activation::tanh;

  int input_width() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
  int output_width() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

  /// Zero-initialized network of the given widths (input, hidden..., output).
  static PolicyNet zeros(const std::vector<int>& widths) {
    if (widths.size() < 2) throw ShapeMismatch("PolicyNet::zeros: need at least input and output widths");
    PolicyNet net;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k)
      net.layers.push_back({RMatrix::Zero(widths[k + 1], widths[k]), RVector::Zero(widths[k + 1])});
    net.action_dim = widths.back();
    return net;
  }

  std::vector<int> widths() const {
    std::vector<int> w;
    if (layers.empty()) return w;
    w.push_back(input_width());
    for (const auto& l : layers) w.push_back(static_cast<int>(l.weight.rows()));
    return w;
  }
};

inline cplx act(const PolicyNet& net, const Observation& obs) {
  if (net.layers.empty()) throw ShapeMismatch("act: empty network");
  if (static_cast<int>(obs.size()) != net.input_width())
    throw ShapeMismatch("act: observation length " + std::to_string(obs.size()) + " does not match input width " +
                        std::to_string(net.input_width()));
  if (net.output_width() != net.action_dim || (net.action_dim != 1 && net.action_dim != 2))
    throw ShapeMismatch("act: output width does not match action_dim");
  RVector h = Eigen::Map<const RVector>(obs.values.data(), static_cast<Eigen::Index>(obs.values.size()));
  for (const auto& layer : net.layers) {
    RVector z = layer.weight * h + layer.bias;
    h = z.array().tanh().matrix();
  }
  return net.action_dim == 2 ? cplx(h(0), h(1)) : cplx(h(0), 0.0);
}

namespace detail {

inline constexpr char kPolicyMagic[8] = {'F', 'F', 'B', 'P', 'O', 'L', 'C', 'Y'};
inline constexpr std::uint32_t kPolicyVersion = 1;

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}

inline void put_f64(std::vector<unsigned char>& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<unsigned char>(bits >> (8 * k)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b_[pos_ + k]) << (8 * k);
    pos_ += 8;
    double x;
    std::memcpy(&x, &bits, sizeof x);
    return x;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("policy file truncated");
  }
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

}  // namespace detail

/// Portable weight file: magic "FFBPOLCY", u32 version, u32 action_dim,
/// u32 activation, u32 layer count L, u32 widths[L + 1], then per layer the
/// row-major weight matrix and the bias as f64, then a CRC-32 of everything
/// before it. All integers and floats little-endian.
inline std::vector<unsigned char> encode_policy(const PolicyNet& net) {
  if (net.layers.empty()) throw ShapeMismatch("encode_policy: empty network");
  for (std::size_t k = 0; k + 1 < net.layers.size(); ++k)
    if (net.layers[k].weight.rows() != net.layers[k + 1].weight.cols())
      throw ShapeMismatch("encode_policy: consecutive layers do not chain");
  for (const auto& l : net.layers)
    if (l.bias.size() != l.weight.rows()) throw ShapeMismatch("encode_policy: bias width mismatch");
  std::vector<unsigned char> out(std::begin(detail::kPolicyMagic), std::end(detail::kPolicyMagic));
  detail::put_u32(out, detail::kPolicyVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(net.action_dim));
  detail::put_u32(out, static_cast<std::uint32_t>(net.activation));
  detail::put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (int w : net.widths()) detail::put_u32(out, static_cast<std::uint32_t>(w));
  for (const auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) detail::put_f64(out, l.weight(i, j));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) detail::put_f64(out, l.bias(i));
  }
  detail::put_u32(out, detail::crc32_of(out.data(), out.size()));
  return out;
}

inline PolicyNet decode_policy(const std::vector<unsigned char>& bytes) {
  constexpr std::size_t kMinSize = 8 + 4 * 4 + 4;
  if (bytes.size() < kMinSize) throw FormatError("policy file too short");
  if (std::memcmp(bytes.data(), detail::kPolicyMagic, 8) != 0) throw FormatError("policy file: bad magic");
  std::vector<unsigned char> body(bytes.begin() + 8, bytes.end());
  detail::ByteReader rd(body);
  const std::uint32_t version = rd.u32();
  if (version != detail::kPolicyVersion) throw FormatError("policy file: unsupported version " + std::to_string(version));
  PolicyNet net;
  net.action_dim = static_cast<int>(rd.u32());
  const std::uint32_t act_tag = rd.u32();
  if (act_tag != static_cast<std::uint32_t>(Activation::tanh)) throw FormatError("policy file: unknown activation");
  const std::uint32_t n_layers = rd.u32();
  if (n_layers == 0 || n_layers > 64) throw FormatError("policy file: implausible layer count");
  std::vector<std::uint64_t> widths;
  for (std::uint32_t k = 0; k <= n_layers; ++k) widths.push_back(rd.u32());
  std::uint64_t n_params = 0;
  for (std::uint32_t k = 0; k < n_layers; ++k) {
    if (widths[k] == 0 || widths[k + 1] == 0 || widths[k] > (1u << 24) || widths[k + 1] > (1u << 24))
      throw FormatError("policy file: implausible layer width");
    n_params += widths[k + 1] * widths[k] + widths[k + 1];
  }
  const std::uint64_t expected = 8 + rd.pos() + 8 * n_params + 4;
  if (bytes.size() != expected) throw FormatError("policy file: size does not match header (truncated or padded)");
  const std::size_t crc_at = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int k = 0; k < 4; ++k) stored |= static_cast<std::uint32_t>(bytes[crc_at + k]) << (8 * k);
  if (stored != detail::crc32_of(bytes.data(), crc_at)) throw ChecksumError("policy file: checksum mismatch");
  for (std::uint32_t k = 0; k < n_layers; ++k) {
    PolicyNet::Layer layer{RMatrix(widths[k + 1], widths[k]), RVector(widths[k + 1])};
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = rd.f64();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rd.f64();
    net.layers.push_back(std::move(layer));
  }
  if (net.action_dim != 1 && net.action_dim != 2) throw ShapeMismatch("policy file: action_dim must be 1 or 2");
  if (static_cast<int>(widths.back()) != net.action_dim)
    throw ShapeMismatch("policy file: output width does not match action_dim");
  return net;
}

inline void save_policy(const PolicyNet& net, const std::string& path) {
  const auto bytes = encode_policy(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline PolicyNet load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_policy(bytes);
}

/// Training hyperparameters recorded next to exported weights.
struct TrainingManifest {
  std::string algorithm = "tqc";
  int n_layers = 2;
  int actor_width = 256;
  int critic_width = 512;
  int n_critics = 5;
  double gamma = 0.95;
  int batch_size = 1024;
  std::string activation = "tanh";
  double ent_coef = 0.09;
  double learning_rate = 1e-4;
  double tau = 0.001;
  int n_steps = 0;

  static TrainingManifest tqc() { return {}; }
  static TrainingManifest ppo() {
    TrainingManifest m;
    m.algorithm = "ppo";
    m.critic_width = 256;
    m.n_critics = 1;
    m.batch_size = 256;
    m.ent_coef = 0.0;
    m.tau = 0.0;
    m.n_steps = 2048;
    return m;
  }
};

inline void to_json(nlohmann::json& j, const TrainingManifest& m) {
  j = nlohmann::json{{"algorithm", m.algorithm},   {"n_layers", m.n_layers},     {"actor_width", m.actor_width},
                     {"critic_width", m.critic_width}, {"n_critics", m.n_critics}, {"gamma", m.gamma},
                     {"batch_size", m.batch_size}, {"activation", m.activation}, {"ent_coef", m.ent_coef},
                     {"learning_rate", m.learning_rate}, {"tau", m.tau},         {"n_steps", m.n_steps}};
}

inline void from_json(const nlohmann::json& j, TrainingManifest& m) {
  TrainingManifest d = j.value("algorithm", std::string("tqc")) == "ppo" ? TrainingManifest::ppo() : TrainingManifest::tqc();
  m.algorithm = j.value("algorithm", d.algorithm);
  m.n_layers = j.value("n_layers", d.n_layers);
  m.actor_width = j.value("actor_width", d.actor_width);
  m.critic_width = j.value("critic_width", d.critic_width);
  m.n_critics = j.value("n_critics", d.n_critics);
  m.gamma = j.value("gamma", d.gamma);
  m.batch_size = j.value("batch_size", d.batch_size);
  m.activation = j.value("activation", d.activation);
  m.ent_coef = j.value("ent_coef", d.ent_coef);
  m.learning_rate = j.value("learning_rate", d.learning_rate);
  m.tau = j.value("tau", d.tau);
  m.n_steps = j.value("n_steps", d.n_steps);
}

}  // namespace fockfb
