#pragma once

#include "fedner/packet.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fedner {

inline constexpr std::uint8_t kProtocolVersion = 1;

enum class MsgKind : std::uint8_t {
  Register = 1,
  RoundStart = 2,
  Gradient = 3,
  ModelBroadcast = 4,
  Shutdown = 5,
};

/// Aggregate platform statistics riding along with a gradient upload. Scalars
/// only; no sentence or label content.
struct TrainStats {
  double batch_loss = 0;
  bool has_eval = false;
  double strict_p = 0, strict_r = 0, strict_f1 = 0;
  double relax_p = 0, relax_r = 0, relax_f1 = 0;
  bool operator==(const TrainStats&) const = default;
};

struct Message {
  MsgKind kind = MsgKind::Shutdown;
  std::uint32_t sender = 0;
  std::uint32_t round = 0;       // RoundStart, ModelBroadcast
  std::uint32_t batch_size = 0;  // RoundStart: N_i
  bool do_eval = false;          // RoundStart: evaluate after this round
  std::uint64_t train_size = 0;  // Register: |S_i|
  Eigen::VectorXd theta;         // RoundStart, ModelBroadcast
  GradientPacket packet;         // Gradient
  TrainStats stats;              // Gradient

  bool operator==(const Message& o) const;
};

struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EncodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Frame layout: 4-byte big-endian payload length, then payload =
/// [version u8][kind u8][sender u32 LE][kind-specific body]. All integers in
/// the body are little-endian; doubles are IEEE-754 bit patterns, verbatim.
/// NaN doubles are rejected at encode time.
std::vector<std::uint8_t> encode(const Message& m);
/// Decodes exactly one frame; the input must be a whole frame.
Message decode(std::span<const std::uint8_t> frame);
/// Splits and decodes a run of concatenated frames.
std::vector<Message> decode_stream(std::span<const std::uint8_t> bytes);

/// Ordered, reliable, at-most-once message channel. recv() blocks; it throws
/// when the peer is gone with messages outstanding.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const Message& m) = 0;
  virtual Message recv() = 0;
};

/// Two connected in-process endpoints (the default simulation transport).
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>>
in_process_pair();

/// Stream-socket transport with the frame format above. port 0 picks a free
/// port; port() reports the bound one.
class SocketListener {
 public:
  explicit SocketListener(std::uint16_t port);
  ~SocketListener();
  SocketListener(const SocketListener&) = delete;
  SocketListener& operator=(const SocketListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Channel> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<Channel> socket_connect(const std::string& host,
                                        std::uint16_t port);

}  // namespace fedner
