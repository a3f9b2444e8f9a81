#include "doctest.h"

#include <random>
#include <thread>

#include "minidse/codec.hpp"
#include "minidse/events.hpp"
#include "minidse/vm.hpp"
#include "support.hpp"

using namespace minidse;

namespace {

Operand random_operand(std::mt19937_64& rng) {
  Operand op;
  switch (rng() % 4) {
    case 0: op = Operand::make_reg({static_cast<uint8_t>(rng() % kNumRegs), 32}, Access::ReadWrite); break;
    case 1: {
      MemRef m;
      m.base = static_cast<int8_t>(rng() % 9) - 1;
      m.index = static_cast<int8_t>(rng() % 9) - 1;
      m.scale = static_cast<uint8_t>(1U << (rng() % 4));
      m.disp = static_cast<int64_t>(rng());
      m.size = static_cast<uint32_t>(1 + rng() % 64);
      op = Operand::make_mem(m, Access::Read);
      op.addr = rng();
      op.base_value = rng();
      op.index_value = rng();
      break;
    }
    case 2: op = Operand::make_imm(rng(), 64); break;
    default: op = Operand::make_flag(static_cast<Flag>(rng() % kNumFlags), Access::Write); break;
  }
  op.value = op.kind == OperandKind::Flag ? rng() & 1U : rng();
  return op;
}

Event random_event(std::mt19937_64& rng) {
  switch (rng() % 5) {
    case 0: return ReadSymbolicInput{rng(), rng() % 4096, rng() % 4096};
    case 1: return WriteSymbolicInput{rng(), rng() % 4096, rng() % 4096};
    case 2: {
      InstructionEvent ie;
      ie.insn.address = rng();
      ie.insn.opcode = static_cast<Opcode>(rng() % kNumOpcodes);
      ie.insn.width = static_cast<uint8_t>(8U << (rng() % 4));
      ie.insn.step = rng();
      for (unsigned i = rng() % 4; i > 0; --i) ie.insn.explicit_ops.push_back(random_operand(rng));
      for (unsigned i = rng() % 5; i > 0; --i) ie.insn.implicit_ops.push_back(random_operand(rng));
      return ie;
    }
    case 3: return ThreadSwitch{static_cast<uint32_t>(rng()), static_cast<uint32_t>(rng())};
    default: return Exit{static_cast<int32_t>(rng())};
  }
}

}  // namespace

TEST_SUITE("events") {

TEST_CASE("exit frame layout") {
  const auto bytes = encode(Exit{0});
  CHECK(bytes == std::vector<uint8_t>{0x05, 4, 0, 0, 0, 0, 0, 0, 0});
  const auto [ev, used] = decode(bytes);
  CHECK(used == 9);
  CHECK(ev == Event{Exit{0}});
}

TEST_CASE("read event round trip") {
  const Event e = ReadSymbolicInput{0x1000, 24, 0};
  const auto bytes = encode(e);
  CHECK(bytes[0] == 0x01);
  CHECK(decode(bytes).first == e);
}

TEST_CASE("random events round trip") {
  std::mt19937_64 rng(42);
  std::vector<uint8_t> stream;
  std::vector<Event> all;
  for (int i = 0; i < 1000; ++i) {
    Event e = random_event(rng);
    const auto bytes = encode(e);
    CHECK(decode(bytes).first == e);
    encode_into(e, stream);
    all.push_back(std::move(e));
  }
  CHECK(decode_stream(stream) == all);
}

TEST_CASE("framing of concatenated frames") {
  auto bytes = encode(ThreadSwitch{0, 1});
  const size_t first = bytes.size();
  encode_into(Exit{7}, bytes);
  const auto [ev, used] = decode(bytes);
  CHECK(ev == Event{ThreadSwitch{0, 1}});
  CHECK(used == first);
  const auto [ev2, used2] = decode(std::span<const uint8_t>(bytes).subspan(used));
  CHECK(ev2 == Event{Exit{7}});
  CHECK(used + used2 == bytes.size());
}

TEST_CASE("malformed frames") {
  const std::vector<uint8_t> bad_tag{0xFF, 0, 0, 0, 0};
  CHECK_THROWS_AS(decode(bad_tag), DecodeError);
  const std::vector<uint8_t> short_header{0x05, 4, 0};
  CHECK_THROWS_AS(decode(short_header), DecodeError);
  const std::vector<uint8_t> short_payload{0x05, 4, 0, 0, 0, 1};
  CHECK_THROWS_AS(decode(short_payload), DecodeError);
  const std::vector<uint8_t> long_payload{0x05, 5, 0, 0, 0, 1, 2, 3, 4, 5};
  CHECK_THROWS_AS(decode(long_payload), DecodeError);
}

TEST_CASE("vm event stream survives a dump") {
  const Program p = testing::load_sample("minsearch");
  const auto seed = testing::sample_seed("minsearch");
  std::vector<Event> events;
  std::vector<uint8_t> dump;
  run_concrete(p, seed, {}, [&](Event&& e) {
    encode_into(e, dump);
    events.push_back(std::move(e));
  });
  CHECK(decode_stream(dump) == events);
  bool saw_switch = false;
  for (const auto& e : events) saw_switch |= std::holds_alternative<ThreadSwitch>(e);
  CHECK(saw_switch);
}

TEST_CASE("bounded channel preserves order and closes") {
  EventChannel ch(4);
  constexpr int kCount = 2000;
  std::thread producer([&] {
    for (int i = 0; i < kCount; ++i) ch.push(Exit{i});
    ch.close();
  });
  int expected = 0;
  while (auto e = ch.pop()) {
    REQUIRE(std::holds_alternative<Exit>(*e));
    CHECK(std::get<Exit>(*e).exit_code == expected);
    ++expected;
  }
  producer.join();
  CHECK(expected == kCount);
  CHECK_FALSE(ch.pop().has_value());
}

}
