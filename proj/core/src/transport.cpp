#include "protofed/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

namespace protofed {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>(v >> shift));
  }
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>(v >> shift));
  }
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { return data_[need(1)]; }
  std::uint16_t u16() {
    const std::size_t o = need(2);
    return static_cast<std::uint16_t>(data_[o] << 8 | data_[o + 1]);
  }
  std::uint32_t u32() {
    const std::size_t o = need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | data_[o + i];
    return v;
  }
  std::uint64_t u64() {
    const std::size_t o = need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | data_[o + i];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text(std::size_t n) {
    const std::size_t o = need(n);
    return std::string(reinterpret_cast<const char*>(data_ + o), n);
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  std::size_t need(std::size_t n) {
    if (pos_ + n > size_) throw ProtocolError("frame truncated inside payload");
    const std::size_t o = pos_;
    pos_ += n;
    return o;
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void encode_prototypes(std::vector<std::uint8_t>& out, const PrototypeSet& set) {
  std::uint16_t class_count = 0;
  for (int cls = 0; cls < PrototypeSet::kNumClasses; ++cls) {
    if (set.has(cls)) ++class_count;
  }
  put_u16(out, class_count);
  for (int cls = 0; cls < PrototypeSet::kNumClasses; ++cls) {
    if (!set.has(cls)) continue;
    put_u16(out, static_cast<std::uint16_t>(cls));
    put_u64(out, set.count(cls));
    const auto& v = set.vec(cls);
    put_u32(out, static_cast<std::uint32_t>(v.size()));
    for (double x : v) put_f64(out, x);
  }
}

PrototypeSet decode_prototypes(Reader& r) {
  PrototypeSet set;
  const std::uint16_t class_count = r.u16();
  for (std::uint16_t i = 0; i < class_count; ++i) {
    const std::uint16_t cls = r.u16();
    if (cls >= PrototypeSet::kNumClasses) {
      throw ProtocolError("prototype payload: class id " + std::to_string(cls) +
                          " out of range");
    }
    const std::uint64_t count = r.u64();
    if (count == 0) throw ProtocolError("prototype payload: zero sample count");
    const std::uint32_t dim = r.u32();
    std::vector<double> v(dim);
    for (auto& x : v) x = r.f64();
    set.set(static_cast<int>(cls), std::move(v), count);
  }
  return set;
}

bool is_control(MsgType t) {
  return t == MsgType::round_control || t == MsgType::error;
}

}  // namespace

std::size_t prototype_payload_bytes(const PrototypeSet& set) {
  std::size_t bytes = 2;
  for (int cls = 0; cls < PrototypeSet::kNumClasses; ++cls) {
    if (set.has(cls)) bytes += 2 + 8 + 4 + 8 * set.vec(cls).size();
  }
  return bytes;
}

std::vector<std::uint8_t> encode_frame(const Message& msg) {
  std::vector<std::uint8_t> payload;
  switch (msg.type) {
    case MsgType::prototype_upload:
    case MsgType::global_broadcast:
      payload.reserve(prototype_payload_bytes(msg.prototypes));
      encode_prototypes(payload, msg.prototypes);
      break;
    case MsgType::param_upload:
    case MsgType::param_broadcast:
      payload.reserve(12 + 8 * msg.params.size());
      put_u64(payload, msg.sample_count);
      put_u32(payload, static_cast<std::uint32_t>(msg.params.size()));
      for (double v : msg.params) put_f64(payload, v);
      break;
    case MsgType::round_control:
      payload.push_back(static_cast<std::uint8_t>(msg.control));
      break;
    case MsgType::error:
      payload.insert(payload.end(), msg.error_text.begin(), msg.error_text.end());
      break;
    default:
      throw ProtocolError("encode_frame: unknown message type");
  }
  if (payload.size() > kMaxPayloadBytes) {
    throw ProtocolError("encode_frame: payload exceeds 64 MiB");
  }

  std::vector<std::uint8_t> frame;
  frame.reserve(kFrameHeaderBytes + payload.size());
  put_u32(frame, static_cast<std::uint32_t>(payload.size()));
  frame.push_back(static_cast<std::uint8_t>(msg.type));
  put_u32(frame, msg.round);
  put_u32(frame, msg.client_id);
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

Message decode_frame(const std::uint8_t* data, std::size_t size) {
  if (size < kFrameHeaderBytes) throw ProtocolError("frame shorter than its header");
  Reader header(data, kFrameHeaderBytes);
  const std::uint32_t length = header.u32();
  const std::uint8_t type = header.u8();
  if (length > kMaxPayloadBytes) throw ProtocolError("frame payload exceeds 64 MiB");
  if (size != kFrameHeaderBytes + length) {
    throw ProtocolError("frame length field does not match buffer size");
  }

  Message msg;
  msg.round = header.u32();
  msg.client_id = header.u32();
  if (type < 1 || type > 6) {
    throw ProtocolError("unknown message type " + std::to_string(type));
  }
  msg.type = static_cast<MsgType>(type);

  Reader r(data + kFrameHeaderBytes, length);
  switch (msg.type) {
    case MsgType::prototype_upload:
    case MsgType::global_broadcast:
      msg.prototypes = decode_prototypes(r);
      break;
    case MsgType::param_upload:
    case MsgType::param_broadcast: {
      msg.sample_count = r.u64();
      const std::uint32_t count = r.u32();
      msg.params.resize(count);
      for (auto& v : msg.params) v = r.f64();
      break;
    }
    case MsgType::round_control: {
      const std::uint8_t code = r.u8();
      if (code < 1 || code > 3) {
        throw ProtocolError("unknown control code " + std::to_string(code));
      }
      msg.control = static_cast<ControlCode>(code);
      break;
    }
    case MsgType::error:
      msg.error_text = r.text(r.remaining());
      break;
  }
  if (r.remaining() != 0) throw ProtocolError("frame has trailing payload bytes");
  return msg;
}

// ---------------------------------------------------------------------------
// In-process sessions

namespace {

struct InprocChannel {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> a_to_b;
  std::deque<std::vector<std::uint8_t>> b_to_a;
  bool a_open = true;
  bool b_open = true;
};

class InprocSession final : public Session {
 public:
  InprocSession(std::shared_ptr<InprocChannel> ch, bool is_a)
      : channel_(std::move(ch)), is_a_(is_a) {}

  ~InprocSession() override { close(); }

  void send(const Message& msg) override {
    std::vector<std::uint8_t> frame = encode_frame(msg);
    account_send(msg.type, frame.size());
    std::lock_guard lock(channel_->mu);
    if (!(is_a_ ? channel_->b_open : channel_->a_open)) {
      throw SessionError("inproc peer closed");
    }
    (is_a_ ? channel_->a_to_b : channel_->b_to_a).push_back(std::move(frame));
    channel_->cv.notify_all();
  }

  Message recv() override {
    std::vector<std::uint8_t> frame;
    {
      std::unique_lock lock(channel_->mu);
      auto& queue = is_a_ ? channel_->b_to_a : channel_->a_to_b;
      channel_->cv.wait(lock, [&] {
        return !queue.empty() || !(is_a_ ? channel_->b_open : channel_->a_open);
      });
      if (queue.empty()) throw SessionError("inproc peer closed");
      frame = std::move(queue.front());
      queue.pop_front();
    }
    Message msg = decode_frame(frame);
    account_recv(msg.type, frame.size());
    return msg;
  }

  void close() override {
    std::lock_guard lock(channel_->mu);
    (is_a_ ? channel_->a_open : channel_->b_open) = false;
    channel_->cv.notify_all();
  }

  Counters counters() const override { return counters_; }

 private:
  void account_send(MsgType t, std::size_t bytes) {
    (is_control(t) ? counters_.control_sent : counters_.data_sent) += bytes;
  }
  void account_recv(MsgType t, std::size_t bytes) {
    (is_control(t) ? counters_.control_received : counters_.data_received) += bytes;
  }

  std::shared_ptr<InprocChannel> channel_;
  bool is_a_;
  Counters counters_;
};

}  // namespace

std::pair<std::unique_ptr<Session>, std::unique_ptr<Session>> make_inproc_pair() {
  auto channel = std::make_shared<InprocChannel>();
  return {std::make_unique<InprocSession>(channel, true),
          std::make_unique<InprocSession>(channel, false)};
}

// ---------------------------------------------------------------------------
// TCP sessions

namespace {

class TcpSession final : public Session {
 public:
  explicit TcpSession(int fd) : fd_(fd) {
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  ~TcpSession() override { close(); }

  void send(const Message& msg) override {
    const std::vector<std::uint8_t> frame = encode_frame(msg);
    std::size_t off = 0;
    while (off < frame.size()) {
      const ssize_t n =
          ::send(fd_, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
      if (n <= 0) throw SessionError("tcp send failed");
      off += static_cast<std::size_t>(n);
    }
    (is_control(msg.type) ? counters_.control_sent : counters_.data_sent) +=
        frame.size();
  }

  Message recv() override {
    std::uint8_t header[kFrameHeaderBytes];
    read_exact(header, kFrameHeaderBytes);
    std::uint32_t length = 0;
    for (int i = 0; i < 4; ++i) length = length << 8 | header[i];
    if (length > kMaxPayloadBytes) throw ProtocolError("tcp frame exceeds 64 MiB");
    std::vector<std::uint8_t> frame(kFrameHeaderBytes + length);
    std::memcpy(frame.data(), header, kFrameHeaderBytes);
    read_exact(frame.data() + kFrameHeaderBytes, length);
    Message msg = decode_frame(frame);
    (is_control(msg.type) ? counters_.control_received : counters_.data_received) +=
        frame.size();
    return msg;
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

  Counters counters() const override { return counters_; }

 private:
  void read_exact(std::uint8_t* dst, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
      const ssize_t got = ::recv(fd_, dst + off, n - off, 0);
      if (got == 0) throw SessionError("tcp peer closed mid-frame");
      if (got < 0) throw SessionError("tcp recv failed");
      off += static_cast<std::size_t>(got);
    }
  }

  int fd_;
  Counters counters_;
};

}  // namespace

TcpListener::TcpListener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw SessionError("cannot create tcp socket");
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw SessionError("cannot bind tcp port " + std::to_string(port));
  }
  if (::listen(fd_, 64) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw SessionError("cannot listen on tcp port " + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<Session> TcpListener::accept() {
  const int client = ::accept(fd_, nullptr, nullptr);
  if (client < 0) throw SessionError("tcp accept failed");
  return std::make_unique<TcpSession>(client);
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

std::unique_ptr<Session> tcp_connect(const std::string& host, std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw SessionError("cannot create tcp socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw SessionError("invalid tcp host: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw SessionError("cannot connect to " + host + ":" + std::to_string(port));
  }
  return std::make_unique<TcpSession>(fd);
}

std::map<std::uint32_t, std::unique_ptr<Session>> accept_clients(
    TcpListener& listener, std::size_t expected) {
  std::map<std::uint32_t, std::unique_ptr<Session>> registry;
  while (registry.size() < expected) {
    std::unique_ptr<Session> session = listener.accept();
    Message hello;
    try {
      hello = session->recv();
    } catch (const SessionError&) {
      continue;  // peer vanished before registering
    }
    const bool valid = hello.type == MsgType::round_control &&
                       hello.control == ControlCode::hello && hello.client_id != 0 &&
                       registry.count(hello.client_id) == 0;
    if (!valid) {
      Message err;
      err.type = MsgType::error;
      err.error_text =
          "registration rejected for client id " + std::to_string(hello.client_id);
      try {
        session->send(err);
      } catch (const SessionError&) {
      }
      session->close();
      continue;
    }
    registry[hello.client_id] = std::move(session);
  }
  return registry;
}

}  // namespace protofed
