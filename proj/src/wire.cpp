#include "fedeeg/wire.hpp"

#include <nlohmann/json.hpp>

#include "fedeeg/bytes.hpp"
#include "fedeeg/error.hpp"

namespace fedeeg {

std::string to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::Broadcast: return "Broadcast";
    case MessageKind::ClientUpdate: return "ClientUpdate";
    case MessageKind::MaskedStatShare: return "MaskedStatShare";
    case MessageKind::StatBroadcast: return "StatBroadcast";
  }
  return "Unknown";
}

std::vector<std::uint8_t> RoundMessage::encode() const {
  ByteWriter w;
  w.buffer().reserve(21 + payload.size());
  w.u32(version);
  w.u64(round);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u32(sender);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload);
  return w.take();
}

RoundMessage RoundMessage::decode(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader r(bytes);
    RoundMessage m;
    m.version = r.u32();
    m.round = r.u64();
    const auto kind = r.u8();
    if (kind < 1 || kind > 4) throw ProtocolError("unknown message kind " + std::to_string(kind));
    m.kind = static_cast<MessageKind>(kind);
    m.sender = r.u32();
    const auto len = r.u32();
    if (r.remaining() != len) throw ProtocolError("payload length field does not match envelope");
    auto p = r.bytes(len);
    m.payload.assign(p.begin(), p.end());
    return m;
  } catch (const ProtocolError&) {
    throw;
  } catch (const Error& e) {
    throw ProtocolError(std::string("malformed envelope: ") + e.what());
  }
}

std::string RoundMessage::debug_json() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(payload.size() * 2);
  for (auto b : payload) {
    hex.push_back(kHex[b >> 4]);
    hex.push_back(kHex[b & 0xF]);
  }
  nlohmann::ordered_json j;
  j["version"] = version;
  j["round"] = round;
  j["kind"] = to_string(kind);
  j["sender"] = sender;
  j["payload_len"] = payload.size();
  j["payload_hex"] = hex;
  return j.dump();
}

void check_message(const RoundMessage& msg, std::uint64_t round, MessageKind kind) {
  if (msg.version != kWireVersion) {
    throw ProtocolError("wire version " + std::to_string(msg.version) + " != " +
                        std::to_string(kWireVersion));
  }
  if (msg.round != round) {
    throw ProtocolError("message for round " + std::to_string(msg.round) +
                        " received in round " + std::to_string(round));
  }
  if (msg.kind != kind) {
    throw ProtocolError("expected " + to_string(kind) + ", got " + to_string(msg.kind));
  }
}

void LoopbackTransport::send(PartyId to, const RoundMessage& msg) {
  auto bytes = msg.encode();
  if (logging_) log_.push_back({to, bytes});
  queues_[to].push_back(std::move(bytes));
}

std::optional<RoundMessage> LoopbackTransport::receive(PartyId party) {
  auto it = queues_.find(party);
  if (it == queues_.end() || it->second.empty()) return std::nullopt;
  auto bytes = std::move(it->second.front());
  it->second.pop_front();
  return RoundMessage::decode(bytes);
}

std::size_t LoopbackTransport::pending(PartyId party) const {
  auto it = queues_.find(party);
  return it == queues_.end() ? 0 : it->second.size();
}

}  // namespace fedeeg
