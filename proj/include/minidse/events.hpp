#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "minidse/isa.hpp"

namespace minidse {

struct ReadSymbolicInput {
  uint64_t buffer_addr = 0;
  uint64_t length = 0;
  uint64_t file_offset = 0;
  friend bool operator==(const ReadSymbolicInput&, const ReadSymbolicInput&) = default;
};

struct WriteSymbolicInput {
  uint64_t buffer_addr = 0;
  uint64_t length = 0;
  uint64_t file_offset = 0;
  friend bool operator==(const WriteSymbolicInput&, const WriteSymbolicInput&) = default;
};

struct InstructionEvent {
  Instruction insn;
  friend bool operator==(const InstructionEvent&, const InstructionEvent&) = default;
};

struct ThreadSwitch {
  uint32_t from_tid = 0;
  uint32_t to_tid = 0;
  friend bool operator==(const ThreadSwitch&, const ThreadSwitch&) = default;
};

struct Exit {
  int32_t exit_code = 0;
  friend bool operator==(const Exit&, const Exit&) = default;
};

using Event = std::variant<ReadSymbolicInput, WriteSymbolicInput, InstructionEvent, ThreadSwitch, Exit>;

enum class EventTag : uint8_t {
  ReadSymbolicInput = 0x01,
  WriteSymbolicInput = 0x02,
  Instruction = 0x03,
  ThreadSwitch = 0x04,
  Exit = 0x05,
};

/// Frame header: 1 tag byte + 4-byte little-endian payload length.
inline constexpr size_t kFrameHeaderSize = 5;

std::vector<uint8_t> encode(const Event& ev);
void encode_into(const Event& ev, std::vector<uint8_t>& out);

/// Decodes one frame from the front of `bytes`; returns the event and the
/// number of bytes consumed.  Throws DecodeError (see codec.hpp).
std::pair<Event, size_t> decode(std::span<const uint8_t> bytes);

/// Decodes a whole dumped stream.
std::vector<Event> decode_stream(std::span<const uint8_t> bytes);

using EventSink = std::function<void(Event&&)>;

/// Bounded single-producer/single-consumer queue between the concrete and
/// symbolic executors.  `push` blocks while full; `pop` blocks while empty
/// and returns nullopt once the channel is closed and drained.
class EventChannel {
 public:
  static constexpr size_t kDefaultCapacity = 4096;

  explicit EventChannel(size_t capacity = kDefaultCapacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  void push(Event ev);
  std::optional<Event> pop();
  void close();

  size_t capacity() const { return capacity_; }
  /// Number of times the producer had to wait for space.
  size_t producer_waits() const;

 private:
  const size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<Event> queue_;
  bool closed_ = false;
  size_t producer_waits_ = 0;
};

}  // namespace minidse
