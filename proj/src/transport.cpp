#include "fedner/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>

namespace fedner {

namespace {

bool same_vector(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(),
                     static_cast<size_t>(a.size()) * sizeof(double)) == 0;
}

struct Writer {
  std::vector<std::uint8_t> buf;
  void u8(std::uint8_t v) { buf.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back((v >> (8 * i)) & 0xff);
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back((v >> (8 * i)) & 0xff);
  }
  void f64(double v) {
    if (std::isnan(v)) throw EncodeError("encode: NaN rejected");
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void vec(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
};

struct Reader {
  std::span<const std::uint8_t> data;
  size_t pos = 0;
  void need(size_t n) const {
    if (pos + n > data.size()) throw DecodeError("decode: truncated frame");
  }
  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(data[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(data[pos++]) << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  Eigen::VectorXd vec() {
    const std::uint64_t n = u64();
    need(n * 8);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
      v(static_cast<Eigen::Index>(i)) = f64();
    }
    return v;
  }
};

}  // namespace

bool Message::operator==(const Message& o) const {
  return kind == o.kind && sender == o.sender && round == o.round &&
         batch_size == o.batch_size && do_eval == o.do_eval &&
         train_size == o.train_size &&
         same_vector(theta, o.theta) &&
         packet.platform_id == o.packet.platform_id &&
         packet.round == o.packet.round &&
         packet.sample_weight == o.packet.sample_weight &&
         same_vector(packet.shared_grad, o.packet.shared_grad) &&
         stats == o.stats;
}

std::vector<std::uint8_t> encode(const Message& m) {
  Writer w;
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.u32(m.sender);
  switch (m.kind) {
    case MsgKind::Register:
      w.u64(m.train_size);
      break;
    case MsgKind::RoundStart:
      w.u32(m.round);
      w.u32(m.batch_size);
      w.u8(m.do_eval ? 1 : 0);
      w.vec(m.theta);
      break;
    case MsgKind::Gradient:
      w.u32(m.packet.platform_id);
      w.u32(m.packet.round);
      w.u64(m.packet.sample_weight);
      w.vec(m.packet.shared_grad);
      w.f64(m.stats.batch_loss);
      w.u8(m.stats.has_eval ? 1 : 0);
      if (m.stats.has_eval) {
        w.f64(m.stats.strict_p);
        w.f64(m.stats.strict_r);
        w.f64(m.stats.strict_f1);
        w.f64(m.stats.relax_p);
        w.f64(m.stats.relax_r);
        w.f64(m.stats.relax_f1);
      }
      break;
    case MsgKind::ModelBroadcast:
      w.u32(m.round);
      w.vec(m.theta);
      break;
    case MsgKind::Shutdown:
      break;
    default:
      throw EncodeError("encode: bad message kind");
  }
  // Prepend the big-endian frame length.
  std::vector<std::uint8_t> out;
  const std::uint32_t len = static_cast<std::uint32_t>(w.buf.size());
  out.reserve(4 + w.buf.size());
  out.push_back((len >> 24) & 0xff);
  out.push_back((len >> 16) & 0xff);
  out.push_back((len >> 8) & 0xff);
  out.push_back(len & 0xff);
  out.insert(out.end(), w.buf.begin(), w.buf.end());
  return out;
}

namespace {

Message decode_payload(std::span<const std::uint8_t> payload) {
  Reader r{payload};
  const std::uint8_t version = r.u8();
  if (version != kProtocolVersion) {
    throw DecodeError("decode: bad protocol version " +
                      std::to_string(version));
  }
  const std::uint8_t kind = r.u8();
  Message m;
  m.sender = r.u32();
  switch (kind) {
    case static_cast<std::uint8_t>(MsgKind::Register):
      m.kind = MsgKind::Register;
      m.train_size = r.u64();
      break;
    case static_cast<std::uint8_t>(MsgKind::RoundStart):
      m.kind = MsgKind::RoundStart;
      m.round = r.u32();
      m.batch_size = r.u32();
      m.do_eval = r.u8() != 0;
      m.theta = r.vec();
      break;
    case static_cast<std::uint8_t>(MsgKind::Gradient):
      m.kind = MsgKind::Gradient;
      m.packet.platform_id = r.u32();
      m.packet.round = r.u32();
      m.packet.sample_weight = r.u64();
      m.packet.shared_grad = r.vec();
      m.stats.batch_loss = r.f64();
      m.stats.has_eval = r.u8() != 0;
      if (m.stats.has_eval) {
        m.stats.strict_p = r.f64();
        m.stats.strict_r = r.f64();
        m.stats.strict_f1 = r.f64();
        m.stats.relax_p = r.f64();
        m.stats.relax_r = r.f64();
        m.stats.relax_f1 = r.f64();
      }
      break;
    case static_cast<std::uint8_t>(MsgKind::ModelBroadcast):
      m.kind = MsgKind::ModelBroadcast;
      m.round = r.u32();
      m.theta = r.vec();
      break;
    case static_cast<std::uint8_t>(MsgKind::Shutdown):
      m.kind = MsgKind::Shutdown;
      break;
    default:
      throw DecodeError("decode: bad kind tag " + std::to_string(kind));
  }
  if (r.pos != payload.size()) {
    throw DecodeError("decode: trailing bytes in frame");
  }
  return m;
}

std::uint32_t read_be32(std::span<const std::uint8_t> b) {
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Message decode(std::span<const std::uint8_t> frame) {
  if (frame.size() < 4) throw DecodeError("decode: truncated frame");
  const std::uint32_t len = read_be32(frame.subspan(0, 4));
  if (frame.size() != 4u + len) {
    throw DecodeError("decode: frame length field " + std::to_string(len) +
                      " does not match payload size " +
                      std::to_string(frame.size() - 4));
  }
  return decode_payload(frame.subspan(4));
}

std::vector<Message> decode_stream(std::span<const std::uint8_t> bytes) {
  std::vector<Message> out;
  size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 4) throw DecodeError("decode: truncated frame");
    const std::uint32_t len = read_be32(bytes.subspan(pos, 4));
    if (bytes.size() - pos < 4u + len) {
      throw DecodeError("decode: truncated frame");
    }
    out.push_back(decode_payload(bytes.subspan(pos + 4, len)));
    pos += 4u + len;
  }
  return out;
}

namespace {

/// One direction of an in-process pair.
struct InProcQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Message> items;
  bool closed = false;

  void push(Message m) {
    {
      std::lock_guard<std::mutex> lk(mu);
      if (closed) throw std::runtime_error("in-process channel closed");
      items.push_back(std::move(m));
    }
    cv.notify_one();
  }
  Message pop() {
    std::unique_lock<std::mutex> lk(mu);
    cv.wait(lk, [&] { return !items.empty() || closed; });
    if (items.empty()) {
      throw std::runtime_error("in-process channel closed");
    }
    Message m = std::move(items.front());
    items.pop_front();
    return m;
  }
  void close() {
    {
      std::lock_guard<std::mutex> lk(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

class InProcChannel : public Channel {
 public:
  InProcChannel(std::shared_ptr<InProcQueue> out,
                std::shared_ptr<InProcQueue> in)
      : out_(std::move(out)), in_(std::move(in)) {}
  ~InProcChannel() override {
    out_->close();
    in_->close();
  }
  void send(const Message& m) override { out_->push(m); }
  Message recv() override { return in_->pop(); }

 private:
  std::shared_ptr<InProcQueue> out_, in_;
};

class SocketChannel : public Channel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~SocketChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }
  void send(const Message& m) override {
    const std::vector<std::uint8_t> frame = encode(m);
    size_t off = 0;
    while (off < frame.size()) {
      const ssize_t n = ::write(fd_, frame.data() + off, frame.size() - off);
      if (n <= 0) throw std::runtime_error("socket send failed");
      off += static_cast<size_t>(n);
    }
  }
  Message recv() override {
    std::uint8_t head[4];
    read_exact(head, 4);
    const std::uint32_t len = read_be32(std::span<const std::uint8_t>(head, 4));
    std::vector<std::uint8_t> payload(len);
    read_exact(payload.data(), payload.size());
    return decode_payload(payload);
  }

 private:
  void read_exact(std::uint8_t* dst, size_t n) {
    size_t off = 0;
    while (off < n) {
      const ssize_t r = ::read(fd_, dst + off, n - off);
      if (r <= 0) throw std::runtime_error("socket connection dropped");
      off += static_cast<size_t>(r);
    }
  }
  int fd_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>>
in_process_pair() {
  auto a_to_b = std::make_shared<InProcQueue>();
  auto b_to_a = std::make_shared<InProcQueue>();
  return {std::make_unique<InProcChannel>(a_to_b, b_to_a),
          std::make_unique<InProcChannel>(b_to_a, a_to_b)};
}

SocketListener::SocketListener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw std::runtime_error("bind failed on port " + std::to_string(port));
  }
  if (::listen(fd_, 16) != 0) {
    ::close(fd_);
    throw std::runtime_error("listen failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

SocketListener::~SocketListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> SocketListener::accept() {
  const int cfd = ::accept(fd_, nullptr, nullptr);
  if (cfd < 0) throw std::runtime_error("accept failed");
  return std::make_unique<SocketChannel>(cfd);
}

std::unique_ptr<Channel> socket_connect(const std::string& host,
                                        std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw std::runtime_error("bad address " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw std::runtime_error("connect to " + host + ":" +
                             std::to_string(port) + " failed");
  }
  return std::make_unique<SocketChannel>(fd);
}

}  // namespace fedner
