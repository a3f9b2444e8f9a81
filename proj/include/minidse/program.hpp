#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "minidse/isa.hpp"

namespace minidse {

/// Assembly failure; `line()` is 1-based (0 when not tied to a line).
class AsmError : public std::runtime_error {
 public:
  AsmError(size_t line, const std::string& msg);
  size_t line() const { return line_; }

 private:
  size_t line_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Program {
  uint64_t code_base = kDefaultCodeBase;
  std::vector<Instruction> code;
  uint64_t data_base = kDefaultDataBase;
  std::vector<uint8_t> data;
  uint64_t entry = kDefaultCodeBase;
  std::map<std::string, uint64_t> labels;

  uint64_t code_end() const { return code_base + code.size() * kInsnSize; }
  uint64_t data_end() const { return data_base + data.size(); }
  bool is_code_address(uint64_t addr) const {
    return addr >= code_base && addr < code_end() && (addr - code_base) % kInsnSize == 0;
  }
  /// Instruction at `addr`, or nullptr if `addr` is not a code address.
  const Instruction* at(uint64_t addr) const {
    return is_code_address(addr) ? &code[(addr - code_base) / kInsnSize] : nullptr;
  }
  uint64_t label(const std::string& name) const;
};

/// Assembles mini-ISA source text.  Throws AsmError.
Program assemble(std::string_view source);
Program assemble_file(const std::string& path);

/// Binary container: magic "MDSP", u16 version, then length-prefixed
/// sections (u8 id, u32 length, payload).  Little-endian throughout.
inline constexpr uint16_t kContainerVersion = 1;
std::vector<uint8_t> serialize_program(const Program& prog);
Program deserialize_program(std::span<const uint8_t> bytes);

/// Loads either a binary container or assembly text, by content sniffing.
Program load_program(const std::string& path);

}  // namespace minidse
