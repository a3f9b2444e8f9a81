#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <unordered_map>

namespace minidse {

/// Sparse little-endian byte-addressable memory.  Never-written bytes read
/// as zero.
class SparseMemory {
 public:
  static constexpr uint64_t kPageBits = 12;
  static constexpr uint64_t kPageSize = uint64_t{1} << kPageBits;

  SparseMemory() = default;
  SparseMemory(const SparseMemory& other) { *this = other; }
  SparseMemory& operator=(const SparseMemory& other) {
    if (this == &other) return *this;
    pages_.clear();
    for (const auto& [k, p] : other.pages_) pages_.emplace(k, std::make_unique<Page>(*p));
    return *this;
  }
  SparseMemory(SparseMemory&&) noexcept = default;
  SparseMemory& operator=(SparseMemory&&) noexcept = default;

  uint8_t read_byte(uint64_t addr) const {
    auto it = pages_.find(addr >> kPageBits);
    return it == pages_.end() ? 0 : (*it->second)[addr & (kPageSize - 1)];
  }
  void write_byte(uint64_t addr, uint8_t v) {
    auto& page = pages_[addr >> kPageBits];
    if (!page) page = std::make_unique<Page>();
    (*page)[addr & (kPageSize - 1)] = v;
  }

  /// Reads `size` (1..8) bytes little-endian.
  uint64_t load(uint64_t addr, unsigned size) const {
    uint64_t v = 0;
    for (unsigned i = 0; i < size; ++i) v |= static_cast<uint64_t>(read_byte(addr + i)) << (8 * i);
    return v;
  }
  void store(uint64_t addr, unsigned size, uint64_t v) {
    for (unsigned i = 0; i < size; ++i) write_byte(addr + i, static_cast<uint8_t>(v >> (8 * i)));
  }
  void write_bytes(uint64_t addr, std::span<const uint8_t> bytes) {
    for (size_t i = 0; i < bytes.size(); ++i) write_byte(addr + i, bytes[i]);
  }

 private:
  struct Page : std::array<uint8_t, kPageSize> {
    Page() { fill(0); }
  };
  std::unordered_map<uint64_t, std::unique_ptr<Page>> pages_;
};

}  // namespace minidse
