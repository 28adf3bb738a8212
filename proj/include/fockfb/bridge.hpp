#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fockfb/config.hpp"
#include "fockfb/policy.hpp"
#include "fockfb/simulator.hpp"

namespace fockfb {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

/// One environment behind the wire protocol. Not thread-safe; each connection
/// owns its own session.
class BridgeSession {
 public:
  explicit BridgeSession(ExperimentConfig cfg) : base_(std::move(cfg)) {
    // Fail early on an invalid base configuration.
    const EpisodeConfig e = build_episode(base_);
    complex_mode_ = needs_complex_mode(e.target);
  }

  bool closed() const { return closed_; }

  /// Parses one request and returns exactly one reply.
  nlohmann::json handle(const std::string& text) {
    nlohmann::json req = nlohmann::json::parse(text, nullptr, false);
    if (req.is_discarded()) return error(nullptr, "ProtocolError", "request is not valid JSON");
    return handle(req);
  }

  nlohmann::json handle(const nlohmann::json& req) {
    if (!req.is_object()) return error(nullptr, "ProtocolError", "request must be a JSON object");
    const nlohmann::json id = req.contains("id") ? req["id"] : nlohmann::json(nullptr);
    if (!id.is_number_integer()) return error(id, "ProtocolError", "id must be an integer");
    const auto id_value = id.get<std::int64_t>();
    if (last_id_ && id_value <= *last_id_) return error(id, "ProtocolError", "id must be strictly increasing");
    last_id_ = id_value;
    if (closed_) return error(id, "ProtocolError", "session is closed");
    if (!req.contains("kind") || !req["kind"].is_string()) return error(id, "ProtocolError", "kind must be a string");
    const std::string kind = req["kind"].get<std::string>();
    const nlohmann::json payload = req.contains("payload") ? req["payload"] : nlohmann::json::object();
    if (!payload.is_object()) return error(id, "ProtocolError", "payload must be an object");
    try {
      if (kind == "spec") return spec_reply(id);
      if (kind == "reset") return reset(id, payload);
      if (kind == "step") return step(id, payload);
      if (kind == "close") {
        closed_ = true;
        return ok(id);
      }
      return error(id, "ProtocolError", "unknown kind '" + kind + "'");
    } catch (const ProtocolError& e) {
      return error(id, "ProtocolError", e.what());
    } catch (const ConfigError& e) {
      return error(id, "ConfigError", e.what());
    } catch (const ShapeMismatch& e) {
      return error(id, "ShapeMismatch", e.what());
    } catch (const std::exception& e) {
      return error(id, "Error", e.what());
    }
  }

  /// Environment description for the current base configuration.
  nlohmann::json spec_message() const {
    const EpisodeConfig e = build_episode(active_);
    const int d = e.space.dim();
    return {{"observation_length", complex_mode_ ? 2 * d * d : d * d},
            {"action_dim", complex_mode_ ? 2 : 1},
            {"action_low", -1.0},
            {"action_high", 1.0},
            {"max_cycles", e.max_cycles},
            {"dim", d},
            {"delta_n", e.setup.delta_n},
            {"complex_mode", complex_mode_},
            {"noisy", e.noise.has_value()},
            {"config_hash", config_hash(active_)}};
  }

 private:
  static nlohmann::json ok(const nlohmann::json& id) { return {{"v", kProtocolVersion}, {"id", id}, {"ok", true}}; }

  static nlohmann::json error(const nlohmann::json& id, const std::string& type, const std::string& message) {
    return {{"v", kProtocolVersion},
            {"id", id},
            {"ok", false},
            {"error", {{"type", type}, {"message", message}}}};
  }

  nlohmann::json spec_reply(const nlohmann::json& id) const {
    nlohmann::json r = ok(id);
    r["spec"] = spec_message();
    return r;
  }

  nlohmann::json observe(const nlohmann::json& id) const {
    nlohmann::json r = ok(id);
    const double ff = episode_->filter_fidelity();
    r["observation"] = encode_observation(episode_->filter().tracked(), complex_mode_).values;
    r["reward"] = reward(ff);
    r["done"] = episode_->done();
    r["info"] = {{"filter_fidelity", ff},
                 {"true_fidelity", episode_->true_fidelity()},
                 {"cycle", episode_->next_cycle()},
                 {"status", to_string(episode_->status())}};
    return r;
  }

  static std::uint64_t non_negative(const nlohmann::json& v, const std::string& what) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ProtocolError(what + " must be a non-negative integer");
  }

  /// payload: optional "seed", "trajectory" and "config" (dotted-path
  /// overrides applied on top of the session's base configuration).
  nlohmann::json reset(const nlohmann::json& id, const nlohmann::json& payload) {
    ExperimentConfig cfg = base_;
    if (payload.contains("config")) {
      const auto& ov = payload["config"];
      if (!ov.is_object()) throw ProtocolError("payload.config must be an object of dotted paths");
      nlohmann::json j = base_;
      for (const auto& [k, v] : ov.items()) apply_override(j, k + "=" + v.dump());
      cfg = j.get<ExperimentConfig>();
    }
    if (payload.contains("seed")) cfg.seed = non_negative(payload["seed"], "payload.seed");
    std::uint64_t trajectory = next_trajectory_;
    if (payload.contains("trajectory")) trajectory = non_negative(payload["trajectory"], "payload.trajectory");
    EpisodeConfig e = build_episode(cfg);
    const bool cm = needs_complex_mode(e.target);
    episode_ = std::make_unique<Episode>(std::move(e), trajectory);
    active_ = cfg;
    complex_mode_ = cm;
    next_trajectory_ = trajectory + 1;
    return observe(id);
  }

  /// payload: "action", an array of action_dim numbers.
  nlohmann::json step(const nlohmann::json& id, const nlohmann::json& payload) {
    if (!episode_) throw ProtocolError("step before reset");
    if (episode_->done()) throw ProtocolError("episode is done; send reset");
    if (!payload.contains("action") || !payload["action"].is_array())
      throw ProtocolError("payload.action must be an array");
    const auto& a = payload["action"];
    const std::size_t want = complex_mode_ ? 2 : 1;
    if (a.size() != want)
      throw ProtocolError("payload.action must have " + std::to_string(want) + " element(s)");
    for (const auto& x : a)
      if (!x.is_number()) throw ProtocolError("payload.action entries must be numbers");
    const cplx alpha(a[0].get<double>(), want == 2 ? a[1].get<double>() : 0.0);
    episode_->step(alpha);
    return observe(id);
  }

  ExperimentConfig base_;
  ExperimentConfig active_ = base_;
  bool complex_mode_ = false;
  bool closed_ = false;
  std::optional<std::int64_t> last_id_;
  std::unique_ptr<Episode> episode_;
  std::uint64_t next_trajectory_ = 0;
};

/// Newline-delimited JSON: one request per line, one reply per line. Returns
/// on close or end of input.
inline void serve_stdio(BridgeSession& session, std::istream& in, std::ostream& out) {
  std::string line;
  while (!session.closed() && std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out << session.handle(line).dump() << '\n';
    out.flush();
  }
}

namespace detail {

inline bool read_exact(int fd, void* buf, std::size_t n) {
  auto* p = static_cast<unsigned char*>(buf);
  while (n > 0) {
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r <= 0) return false;
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

inline bool write_exact(int fd, const void* buf, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(buf);
  while (n > 0) {
    const ssize_t r = ::send(fd, p, n, MSG_NOSIGNAL);
    if (r <= 0) return false;
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace detail

/// Frame = 4-byte little-endian payload length, then UTF-8 JSON.
inline bool write_frame(int fd, const std::string& payload) {
  const auto n = static_cast<std::uint32_t>(payload.size());
  const unsigned char hdr[4] = {static_cast<unsigned char>(n), static_cast<unsigned char>(n >> 8),
                                static_cast<unsigned char>(n >> 16), static_cast<unsigned char>(n >> 24)};
  return detail::write_exact(fd, hdr, 4) && detail::write_exact(fd, payload.data(), payload.size());
}

/// nullopt when the peer closed the connection or sent an oversized frame.
inline std::optional<std::string> read_frame(int fd) {
  unsigned char hdr[4];
  if (!detail::read_exact(fd, hdr, 4)) return std::nullopt;
  const std::uint32_t n = hdr[0] | (hdr[1] << 8) | (hdr[2] << 16) | (static_cast<std::uint32_t>(hdr[3]) << 24);
  if (n > kMaxFrameBytes) return std::nullopt;
  std::string payload(n, '\0');
  if (n > 0 && !detail::read_exact(fd, payload.data(), n)) return std::nullopt;
  return payload;
}

/// Serves framed requests on a connected socket until close or disconnect.
inline void serve_connection(BridgeSession& session, int fd) {
  while (!session.closed()) {
    auto frame = read_frame(fd);
    if (!frame) break;
    if (!write_frame(fd, session.handle(*frame).dump())) break;
  }
}

/// Listens on host:port; every accepted connection gets its own thread and
/// its own session built from the same configuration.
class TcpServer {
 public:
  TcpServer(ExperimentConfig cfg, const std::string& host, std::uint16_t port) : cfg_(std::move(cfg)) {
    BridgeSession probe(cfg_);  // validates the configuration
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw Error("socket: " + std::string(std::strerror(errno)));
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd_);
      throw Error("invalid IPv4 address '" + host + "'");
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 16) < 0) {
      const std::string msg = std::strerror(errno);
      ::close(fd_);
      throw Error("bind/listen on " + host + ":" + std::to_string(port) + ": " + msg);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;
  ~TcpServer() {
    if (fd_ >= 0) ::close(fd_);
    for (auto& t : threads_)
      if (t.joinable()) t.join();
  }

  std::uint16_t port() const { return port_; }

  /// Accepts connections; stops after max_connections when it is nonzero and
  /// waits for their sessions to finish.
  void run(std::size_t max_connections = 0) {
    for (std::size_t accepted = 0; max_connections == 0 || accepted < max_connections; ++accepted) {
      const int client = ::accept(fd_, nullptr, nullptr);
      if (client < 0) {
        if (errno == EINTR) continue;
        break;
      }
      threads_.emplace_back([cfg = cfg_, client] {
        BridgeSession session(cfg);
        serve_connection(session, client);
        ::close(client);
      });
    }
    for (auto& t : threads_) t.join();
    threads_.clear();
  }

 private:
  ExperimentConfig cfg_;
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::vector<std::thread> threads_;
};

}  // namespace fockfb
