#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "fedeeg/error.hpp"
#include "fedeeg/model.hpp"
#include "fedeeg/wire.hpp"

using namespace fedeeg;

TEST_CASE("envelope layout is little-endian and length-prefixed") {
  const RoundMessage m{1, 0x0102030405060708ULL, MessageKind::ClientUpdate, 7, {0xAA, 0xBB}};
  const auto b = m.encode();
  REQUIRE(b.size() == 4 + 8 + 1 + 4 + 4 + 2);
  CHECK(b[0] == 1);
  CHECK(b[4] == 0x08);
  CHECK(b[11] == 0x01);
  CHECK(b[12] == 2);
  CHECK(b[13] == 7);
  CHECK(b[17] == 2);
  CHECK(b[21] == 0xAA);
  CHECK(RoundMessage::decode(b) == m);
}

TEST_CASE("decode rejects malformed envelopes") {
  const RoundMessage m{1, 3, MessageKind::Broadcast, kServerId, ParamVector(3, 1.0).serialize()};
  auto b = m.encode();
  auto cut = b;
  cut.pop_back();
  CHECK_THROWS_AS(RoundMessage::decode(cut), ProtocolError);
  auto extra = b;
  extra.push_back(0);
  CHECK_THROWS_AS(RoundMessage::decode(extra), ProtocolError);
  auto kind = b;
  kind[12] = 9;
  CHECK_THROWS_AS(RoundMessage::decode(kind), ProtocolError);
  CHECK_THROWS_AS(RoundMessage::decode(std::vector<std::uint8_t>{1, 2}), ProtocolError);
}

TEST_CASE("check_message enforces version, round and kind") {
  RoundMessage m{kWireVersion, 4, MessageKind::ClientUpdate, 0, {}};
  CHECK_NOTHROW(check_message(m, 4, MessageKind::ClientUpdate));
  CHECK_THROWS_AS(check_message(m, 5, MessageKind::ClientUpdate), ProtocolError);
  CHECK_THROWS_AS(check_message(m, 4, MessageKind::Broadcast), ProtocolError);
  m.version = 2;
  CHECK_THROWS_AS(check_message(m, 4, MessageKind::ClientUpdate), ProtocolError);
}

TEST_CASE("debug encoding is structured text") {
  const RoundMessage m{1, 2, MessageKind::StatBroadcast, kServerId, {0x0f, 0xa0}};
  const auto j = nlohmann::json::parse(m.debug_json());
  CHECK(j["round"] == 2);
  CHECK(j["kind"] == "StatBroadcast");
  CHECK(j["payload_hex"] == "0fa0");
  CHECK(j["payload_len"] == 2);
}

TEST_CASE("loopback transport is ordered per party and logs bytes") {
  LoopbackTransport t(true);
  for (std::uint64_t r = 0; r < 3; ++r) t.send(1, {kWireVersion, r, MessageKind::Broadcast, kServerId, {}});
  t.send(2, {kWireVersion, 9, MessageKind::Broadcast, kServerId, {}});
  CHECK(t.pending(1) == 3);
  for (std::uint64_t r = 0; r < 3; ++r) CHECK(t.receive(1)->round == r);
  CHECK_FALSE(t.receive(1));
  CHECK(t.receive(2)->round == 9);
  CHECK(t.log().size() == 4);
  CHECK(t.log()[3].to == 2);
}
