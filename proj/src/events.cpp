#include "minidse/events.hpp"

#include "minidse/codec.hpp"

namespace minidse {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

void encode_into(const Event& ev, std::vector<uint8_t>& out) {
  ByteWriter w;
  const EventTag tag = std::visit(
      Overloaded{
          [&](const ReadSymbolicInput& e) {
            w.u64(e.buffer_addr);
            w.u64(e.length);
            w.u64(e.file_offset);
            return EventTag::ReadSymbolicInput;
          },
          [&](const WriteSymbolicInput& e) {
            w.u64(e.buffer_addr);
            w.u64(e.length);
            w.u64(e.file_offset);
            return EventTag::WriteSymbolicInput;
          },
          [&](const InstructionEvent& e) {
            write_instruction(w, e.insn);
            return EventTag::Instruction;
          },
          [&](const ThreadSwitch& e) {
            w.u32(e.from_tid);
            w.u32(e.to_tid);
            return EventTag::ThreadSwitch;
          },
          [&](const Exit& e) {
            w.u32(static_cast<uint32_t>(e.exit_code));
            return EventTag::Exit;
          },
      },
      ev);
  const auto& payload = w.data();
  out.push_back(static_cast<uint8_t>(tag));
  const auto len = static_cast<uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
  out.insert(out.end(), payload.begin(), payload.end());
}

std::vector<uint8_t> encode(const Event& ev) {
  std::vector<uint8_t> out;
  encode_into(ev, out);
  return out;
}

std::pair<Event, size_t> decode(std::span<const uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize) throw DecodeError("truncated frame header");
  const uint8_t tag = bytes[0];
  if (tag < 0x01 || tag > 0x05) throw DecodeError("unknown event tag");
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(bytes[1 + i]) << (8 * i);
  if (bytes.size() - kFrameHeaderSize < len) throw DecodeError("truncated frame payload");
  ByteReader r(bytes.subspan(kFrameHeaderSize, len));

  Event ev;
  switch (static_cast<EventTag>(tag)) {
    case EventTag::ReadSymbolicInput: {
      ReadSymbolicInput e;
      e.buffer_addr = r.u64();
      e.length = r.u64();
      e.file_offset = r.u64();
      ev = e;
      break;
    }
    case EventTag::WriteSymbolicInput: {
      WriteSymbolicInput e;
      e.buffer_addr = r.u64();
      e.length = r.u64();
      e.file_offset = r.u64();
      ev = e;
      break;
    }
    case EventTag::Instruction:
      ev = InstructionEvent{read_instruction(r)};
      break;
    case EventTag::ThreadSwitch: {
      ThreadSwitch e;
      e.from_tid = r.u32();
      e.to_tid = r.u32();
      ev = e;
      break;
    }
    case EventTag::Exit:
      ev = Exit{static_cast<int32_t>(r.u32())};
      break;
  }
  if (r.remaining() != 0) throw DecodeError("payload length mismatch");
  return {std::move(ev), kFrameHeaderSize + len};
}

std::vector<Event> decode_stream(std::span<const uint8_t> bytes) {
  std::vector<Event> out;
  size_t pos = 0;
  while (pos < bytes.size()) {
    auto [ev, used] = decode(bytes.subspan(pos));
    out.push_back(std::move(ev));
    pos += used;
  }
  return out;
}

void EventChannel::push(Event ev) {
  std::unique_lock lock(mu_);
  if (queue_.size() >= capacity_) {
    ++producer_waits_;
    not_full_.wait(lock, [&] { return queue_.size() < capacity_ || closed_; });
  }
  if (closed_) return;
  queue_.push_back(std::move(ev));
  not_empty_.notify_one();
}

std::optional<Event> EventChannel::pop() {
  std::unique_lock lock(mu_);
  not_empty_.wait(lock, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  Event ev = std::move(queue_.front());
  queue_.pop_front();
  not_full_.notify_one();
  return ev;
}

void EventChannel::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  not_empty_.notify_all();
  not_full_.notify_all();
}

size_t EventChannel::producer_waits() const {
  std::lock_guard lock(mu_);
  return producer_waits_;
}

}  // namespace minidse
