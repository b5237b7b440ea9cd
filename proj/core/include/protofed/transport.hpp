#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "protofed/prototypes.hpp"

namespace protofed {

// Wire frame: | length u32 | msg_type u8 | round u32 | client_id u32 | payload |
// All integers big-endian; length counts payload bytes only. client_id 0
// marks server-origin frames.

enum class MsgType : std::uint8_t {
  prototype_upload = 1,
  global_broadcast = 2,
  param_upload = 3,
  param_broadcast = 4,
  round_control = 5,
  error = 6,
};

enum class ControlCode : std::uint8_t {
  hello = 1,   // client registration, sent once before round 1
  finish = 2,  // server closes the experiment
  retry = 3,   // server asks the client to redo the current round
};

struct Message {
  MsgType type = MsgType::round_control;
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;

  PrototypeSet prototypes;        // prototype_upload / global_broadcast
  std::vector<double> params;     // param_upload / param_broadcast
  std::uint64_t sample_count = 0; // weighting for param frames
  ControlCode control = ControlCode::hello;  // round_control
  std::string error_text;         // error

  bool operator==(const Message&) const = default;
};

constexpr std::size_t kFrameHeaderBytes = 13;
constexpr std::size_t kMaxPayloadBytes = 64ull << 20;  // 64 MiB

std::vector<std::uint8_t> encode_frame(const Message& msg);
/// Decodes one complete frame; rejects truncated, oversized or trailing
/// bytes and unknown message types.
Message decode_frame(const std::uint8_t* data, std::size_t size);
inline Message decode_frame(const std::vector<std::uint8_t>& bytes) {
  return decode_frame(bytes.data(), bytes.size());
}

/// Payload bytes of a prototype message for the given set
/// (2 + per class: 2 + 8 + 4 + 8 * dim).
std::size_t prototype_payload_bytes(const PrototypeSet& set);

/// Reliable ordered bidirectional message pipe. Byte counters split data
/// frames (prototype/param) from control frames (round_control/error) so
/// reports can compare payload traffic across carriers.
class Session {
 public:
  struct Counters {
    std::uint64_t data_sent = 0;
    std::uint64_t data_received = 0;
    std::uint64_t control_sent = 0;
    std::uint64_t control_received = 0;
  };

  virtual ~Session() = default;
  virtual void send(const Message& msg) = 0;
  /// Blocks until a message arrives; throws SessionError when the peer is
  /// gone.
  virtual Message recv() = 0;
  virtual void close() = 0;
  virtual Counters counters() const = 0;
};

/// In-process carrier: two connected endpoints backed by byte queues. The
/// full encode/decode path runs so byte accounting matches TCP exactly.
std::pair<std::unique_ptr<Session>, std::unique_ptr<Session>> make_inproc_pair();

/// Loopback TCP carrier.
class TcpListener {
 public:
  /// Binds and listens on 127.0.0.1:port (port 0 picks an ephemeral port).
  explicit TcpListener(std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Session> accept();
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<Session> tcp_connect(const std::string& host, std::uint16_t port);

/// Accepts connections until `expected` distinct client ids have sent a
/// hello control frame. Malformed registrations and duplicate ids receive
/// an Error frame and are disconnected. Returns sessions keyed by id.
std::map<std::uint32_t, std::unique_ptr<Session>> accept_clients(
    TcpListener& listener, std::size_t expected);

}  // namespace protofed
