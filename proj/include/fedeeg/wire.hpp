#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedeeg {

using PartyId = std::uint32_t;
inline constexpr PartyId kServerId = 0xFFFFFFFFu;
inline constexpr std::uint32_t kWireVersion = 1;

enum class MessageKind : std::uint8_t {
  Broadcast = 1,        // server -> client: global ParamVector
  ClientUpdate = 2,     // client -> server: local ParamVector
  MaskedStatShare = 3,  // client -> server: MaskedShare
  StatBroadcast = 4,    // server -> client: GlobalStats
};

std::string to_string(MessageKind kind);

// Binary envelope, all integers little-endian:
//   version u32 | round u64 | kind u8 | sender u32 | payload_len u32 | payload
struct RoundMessage {
  std::uint32_t version = kWireVersion;
  std::uint64_t round = 0;
  MessageKind kind = MessageKind::Broadcast;
  PartyId sender = kServerId;
  std::vector<std::uint8_t> payload;

  std::vector<std::uint8_t> encode() const;
  // Throws ProtocolError on malformed bytes or unknown kind.
  static RoundMessage decode(std::span<const std::uint8_t> bytes);
  // Structured-text rendering for logs; the payload is hex encoded.
  std::string debug_json() const;

  bool operator==(const RoundMessage&) const = default;
};

// Rejects a message that does not belong to (round, kind) of the current step.
void check_message(const RoundMessage& msg, std::uint64_t round, MessageKind kind);

// Reliable, ordered point-to-point delivery between parties.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(PartyId to, const RoundMessage& msg) = 0;
  virtual std::optional<RoundMessage> receive(PartyId party) = 0;
};

// In-process transport. Every message crosses as encoded bytes and is kept
// in a log so tests can inspect exactly what left each party.
class LoopbackTransport final : public Transport {
 public:
  struct LogEntry {
    PartyId to;
    std::vector<std::uint8_t> bytes;
  };

  explicit LoopbackTransport(bool keep_log = false) : logging_(keep_log) {}

  void send(PartyId to, const RoundMessage& msg) override;
  std::optional<RoundMessage> receive(PartyId party) override;

  const std::vector<LogEntry>& log() const noexcept { return log_; }
  void clear_log() { log_.clear(); }
  void set_logging(bool on) noexcept { logging_ = on; }
  std::size_t pending(PartyId party) const;

 private:
  std::map<PartyId, std::deque<std::vector<std::uint8_t>>> queues_;
  std::vector<LogEntry> log_;
  bool logging_;
};

}  // namespace fedeeg
