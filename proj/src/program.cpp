#include "minidse/program.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

#include "minidse/codec.hpp"

namespace minidse {

AsmError::AsmError(size_t line, const std::string& msg)
    : std::runtime_error(line ? fmt::format("line {}: {}", line, msg) : msg), line_(line) {}

uint64_t Program::label(const std::string& name) const {
  auto it = labels.find(name);
  if (it == labels.end()) throw std::out_of_range("unknown label: " + name);
  return it->second;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

bool is_identifier(std::string_view s) {
  if (s.empty() || !is_ident_start(s[0])) return false;
  return std::all_of(s.begin(), s.end(), is_ident_char);
}

/// Strips a `;` comment, respecting string and character literals.
std::string_view strip_comment(std::string_view line) {
  char quote = 0;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\') {
        ++i;
      } else if (c == quote) {
        quote = 0;
      }
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == ';') {
      return line.substr(0, i);
    }
  }
  return line;
}

/// Splits on commas outside brackets and quotes.
std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  int depth = 0;
  char quote = 0;
  size_t start = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quote) {
      if (c == '\\') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    } else if (c == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

char unescape(char c) {
  switch (c) {
    case 'n': return '\n';
    case 't': return '\t';
    case 'r': return '\r';
    case '0': return '\0';
    default: return c;
  }
}

std::optional<RegRef> parse_reg(std::string_view s) {
  if (s.size() < 2 || s.size() > 3 || s[0] != 'r' || s[1] < '0' || s[1] > '7') return std::nullopt;
  RegRef r{static_cast<uint8_t>(s[1] - '0'), 64};
  if (s.size() == 3) {
    switch (s[2]) {
      case 'b': r.width = 8; break;
      case 'w': r.width = 16; break;
      case 'd': r.width = 32; break;
      default: return std::nullopt;
    }
  }
  return r;
}

enum class Section { Code, Data };

class Assembler {
 public:
  explicit Assembler(std::string_view src) {
    std::string_view rest = src;
    while (!rest.empty()) {
      const size_t nl = rest.find('\n');
      lines_.push_back(rest.substr(0, nl));
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
  }

  Program run() {
    pass(false);
    pass(true);
    auto it = prog_.labels.find("main");
    prog_.entry = it != prog_.labels.end() ? it->second : prog_.code_base;
    if (prog_.code.empty()) throw AsmError(0, "program has no instructions");
    const bool overlap = prog_.data_base < prog_.code_end() && prog_.code_base < prog_.data_end();
    if (!prog_.data.empty() && overlap) throw AsmError(0, "data section overlaps code section");
    for (const auto& insn : prog_.code) {
      if (is_control_transfer(insn.opcode) || insn.opcode == Opcode::Spawn) {
        const size_t n = insn.opcode == Opcode::Spawn ? 2 : insn.explicit_ops.size();
        for (size_t k = 0; k < n; ++k) {
          const Operand& op = insn.explicit_ops[k];
          if (op.kind == OperandKind::Imm && !prog_.is_code_address(op.value)) {
            throw AsmError(0, fmt::format("branch target {:#x} at {:#x} is not a code address", op.value,
                                          insn.address));
          }
        }
      }
    }
    return std::move(prog_);
  }

 private:
  void pass(bool emit) {
    emit_ = emit;
    section_ = Section::Code;
    code_count_ = 0;
    data_loc_ = prog_.data_base;
    if (emit) prog_.code.clear();
    for (size_t i = 0; i < lines_.size(); ++i) {
      line_no_ = i + 1;
      std::string_view line = trim(strip_comment(lines_[i]));
      // Leading `label:` definitions.
      while (true) {
        const size_t colon = line.find(':');
        if (colon == std::string_view::npos) break;
        std::string_view name = trim(line.substr(0, colon));
        if (!is_identifier(name)) break;
        define_label(std::string(name));
        line = trim(line.substr(colon + 1));
      }
      if (line.empty()) continue;
      if (line[0] == '.') {
        directive(line);
      } else {
        instruction(line);
      }
    }
  }

  [[noreturn]] void fail(const std::string& msg) const { throw AsmError(line_no_, msg); }

  void define_label(const std::string& name) {
    const uint64_t addr = section_ == Section::Code ? prog_.code_base + code_count_ * kInsnSize : data_loc_;
    if (!emit_) {
      if (!prog_.labels.emplace(name, addr).second) fail("duplicate label: " + name);
    }
  }

  void directive(std::string_view line) {
    size_t sp = 0;
    while (sp < line.size() && !std::isspace(static_cast<unsigned char>(line[sp]))) ++sp;
    const std::string_view name = line.substr(0, sp);
    const std::string_view args = trim(line.substr(sp));
    if (name == ".data") {
      section_ = Section::Data;
    } else if (name == ".code" || name == ".text") {
      section_ = Section::Code;
    } else if (name == ".org") {
      const bool first = !seen_data_;
      require_data(name);
      const auto target = static_cast<uint64_t>(eval(args));
      if (!emit_ && first) {
        prog_.data_base = target;
        data_loc_ = target;
      } else if (target < data_loc_) {
        fail(".org cannot move backwards");
      } else {
        put_zero(target - data_loc_);
      }
    } else if (name == ".bytes") {
      require_data(name);
      std::istringstream in{std::string(args)};
      std::string tok;
      while (in >> tok) {
        if (tok.size() > 2 || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); })) {
          fail("bad hex byte: " + tok);
        }
        put_byte(static_cast<uint8_t>(std::stoul(tok, nullptr, 16)));
      }
    } else if (name == ".ascii") {
      require_data(name);
      if (args.size() < 2 || args.front() != '"' || args.back() != '"') fail(".ascii expects a quoted string");
      for (size_t i = 1; i + 1 < args.size(); ++i) {
        char c = args[i];
        if (c == '\\' && i + 2 < args.size()) c = unescape(args[++i]);
        put_byte(static_cast<uint8_t>(c));
      }
    } else if (name == ".zero") {
      require_data(name);
      put_zero(static_cast<uint64_t>(eval(args)));
    } else if (name == ".quad" || name == ".dword") {
      require_data(name);
      const int n = name == ".quad" ? 8 : 4;
      for (auto item : split_operands(args)) {
        const uint64_t v = emit_ ? static_cast<uint64_t>(eval(item)) : 0;
        for (int b = 0; b < n; ++b) put_byte(static_cast<uint8_t>(v >> (8 * b)));
      }
    } else {
      fail("unknown directive: " + std::string(name));
    }
  }

  void require_data(std::string_view name) {
    if (section_ != Section::Data) fail(std::string(name) + " is only valid in .data");
    seen_data_ = true;
  }

  void put_byte(uint8_t b) {
    if (emit_) prog_.data.push_back(b);
    ++data_loc_;
  }
  void put_zero(uint64_t n) {
    for (uint64_t i = 0; i < n; ++i) put_byte(0);
  }

  /// `term ((+|-) term)*` where a term is a number, char literal or label.
  int64_t eval(std::string_view text) {
    text = trim(text);
    if (text.empty()) fail("missing value");
    int64_t acc = 0;
    int sign = 1;
    size_t i = 0;
    bool expect_term = true;
    while (i < text.size()) {
      const char c = text[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (expect_term) {
        if (c == '-') {
          sign = -sign;
          ++i;
          continue;
        }
        if (c == '+') {
          ++i;
          continue;
        }
        size_t j = i;
        if (c == '\'') {
          j = text.find('\'', i + (text.size() > i + 1 && text[i + 1] == '\\' ? 3 : 2));
          if (j == std::string_view::npos) fail("unterminated character literal");
          ++j;
        } else {
          while (j < text.size() && (is_ident_char(text[j]))) ++j;
        }
        acc += sign * term(text.substr(i, j - i));
        sign = 1;
        i = j;
        expect_term = false;
      } else {
        if (c == '+') sign = 1;
        else if (c == '-') sign = -1;
        else fail("unexpected '" + std::string(1, c) + "' in expression");
        ++i;
        expect_term = true;
      }
    }
    if (expect_term) fail("dangling operator in expression");
    return acc;
  }

  int64_t term(std::string_view t) {
    if (t.empty()) fail("missing term");
    if (t[0] == '\'') {
      if (t.size() == 3) return static_cast<unsigned char>(t[1]);
      if (t.size() == 4 && t[1] == '\\') return static_cast<unsigned char>(unescape(t[2]));
      fail("bad character literal");
    }
    if (std::isdigit(static_cast<unsigned char>(t[0]))) {
      try {
        size_t used = 0;
        const uint64_t v = std::stoull(std::string(t), &used, 0);
        if (used != t.size()) fail("bad number: " + std::string(t));
        return static_cast<int64_t>(v);
      } catch (const std::logic_error&) {
        fail("bad number: " + std::string(t));
      }
    }
    if (!is_identifier(t)) fail("bad term: " + std::string(t));
    if (!emit_) return 0;
    auto it = prog_.labels.find(std::string(t));
    if (it == prog_.labels.end()) fail("undefined label: " + std::string(t));
    return static_cast<int64_t>(it->second);
  }

  MemRef parse_mem(std::string_view text, unsigned width) {
    text = trim(text);
    if (text.size() < 2 || text.front() != '[' || text.back() != ']') fail("bad memory operand");
    std::string_view inner = trim(text.substr(1, text.size() - 2));
    MemRef m;
    m.size = width / 8;
    int64_t disp = 0;
    int sign = 1;
    size_t i = 0;
    while (i < inner.size()) {
      const char c = inner[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (c == '+' || c == '-') {
        sign = c == '-' ? -1 : 1;
        ++i;
        continue;
      }
      size_t j = i;
      while (j < inner.size() && inner[j] != '+' && inner[j] != '-') {
        if (inner[j] == '\'') {
          j = inner.find('\'', j + 2);
          if (j == std::string_view::npos) fail("unterminated character literal");
        }
        ++j;
      }
      std::string_view tok = trim(inner.substr(i, j - i));
      i = j;
      const size_t star = tok.find('*');
      std::string_view reg_tok = star == std::string_view::npos ? tok : trim(tok.substr(0, star));
      if (auto r = parse_reg(reg_tok)) {
        if (r->width != 64) fail("address registers must be 64-bit: " + std::string(reg_tok));
        if (sign < 0) fail("address registers cannot be subtracted");
        unsigned scale = 1;
        if (star != std::string_view::npos) {
          const int64_t s = term(trim(tok.substr(star + 1)));
          if (s != 1 && s != 2 && s != 4 && s != 8) fail("scale must be 1, 2, 4 or 8");
          scale = static_cast<unsigned>(s);
        }
        if (star == std::string_view::npos && m.base == kNoReg) {
          m.base = static_cast<int8_t>(r->id);
        } else if (m.index == kNoReg) {
          m.index = static_cast<int8_t>(r->id);
          m.scale = static_cast<uint8_t>(scale);
        } else {
          fail("too many registers in memory operand");
        }
      } else {
        disp += sign * term(tok);
      }
      sign = 1;
    }
    m.disp = disp;
    return m;
  }

  enum class Form { Reg, Mem, Imm };

  Form form_of(std::string_view t) {
    if (!t.empty() && t.front() == '[') return Form::Mem;
    if (parse_reg(t)) return Form::Reg;
    return Form::Imm;
  }

  Operand reg_operand(std::string_view t, Access a, unsigned width) {
    auto r = parse_reg(t);
    if (!r) fail("expected register, got '" + std::string(t) + "'");
    if (r->width != width) {
      fail(fmt::format("operand width mismatch: {} is {}-bit, instruction is {}-bit", t, r->width, width));
    }
    return Operand::make_reg(*r, a);
  }

  Operand imm_operand(std::string_view t, unsigned width) {
    const int64_t v = eval(t);
    if (width < 64) {
      const int64_t lo = -(int64_t{1} << (width - 1));
      const int64_t hi = (int64_t{1} << width) - 1;
      if (v < lo || v > hi) fail(fmt::format("immediate {} does not fit in {} bits", v, width));
    }
    const uint64_t mask = width == 64 ? ~uint64_t{0} : (uint64_t{1} << width) - 1;
    return Operand::make_imm(static_cast<uint64_t>(v) & mask, static_cast<uint8_t>(width));
  }

  Operand src_operand(std::string_view t, unsigned width) {
    switch (form_of(t)) {
      case Form::Reg: return reg_operand(t, Access::Read, width);
      case Form::Imm: return imm_operand(t, width);
      case Form::Mem: break;
    }
    fail("memory operand not allowed here");
  }

  void instruction(std::string_view line) {
    size_t sp = 0;
    while (sp < line.size() && !std::isspace(static_cast<unsigned char>(line[sp]))) ++sp;
    std::string mnemonic(line.substr(0, sp));
    const auto ops = split_operands(line.substr(sp));
    if (section_ != Section::Code) fail("instruction outside .code section");

    const uint64_t address = prog_.code_base + code_count_ * kInsnSize;
    ++code_count_;
    if (!emit_) return;

    unsigned width = 64;
    bool has_suffix = false;
    if (const size_t dot = mnemonic.find('.'); dot != std::string::npos) {
      const std::string suffix = mnemonic.substr(dot + 1);
      mnemonic.resize(dot);
      has_suffix = true;
      if (suffix == "b") width = 8;
      else if (suffix == "w") width = 16;
      else if (suffix == "d") width = 32;
      else if (suffix == "q") width = 64;
      else fail("unknown width suffix ." + suffix);
    }
    auto opcode = opcode_from_name(mnemonic);
    if (!opcode) fail("unknown mnemonic: " + mnemonic);

    Instruction insn;
    insn.address = address;
    insn.opcode = *opcode;
    insn.width = static_cast<uint8_t>(width);

    auto expect = [&](size_t n) {
      if (ops.size() != n) fail(fmt::format("{} expects {} operand(s), got {}", mnemonic, n, ops.size()));
    };
    auto only_q = [&] {
      if (has_suffix && width != 64) fail(mnemonic + " only supports 64-bit operands");
    };
    auto& ex = insn.explicit_ops;

    switch (insn.opcode) {
      case Opcode::Mov: {
        expect(2);
        const Form d = form_of(ops[0]);
        const Form s = form_of(ops[1]);
        if (d == Form::Mem) {
          insn.opcode = Opcode::Store;
          ex.push_back(Operand::make_mem(parse_mem(ops[0], width), Access::Write));
          ex.push_back(src_operand(ops[1], width));
        } else if (s == Form::Mem) {
          insn.opcode = Opcode::Load;
          ex.push_back(reg_operand(ops[0], Access::Write, width));
          ex.push_back(Operand::make_mem(parse_mem(ops[1], width), Access::Read));
        } else {
          ex.push_back(reg_operand(ops[0], Access::Write, width));
          ex.push_back(src_operand(ops[1], width));
        }
        break;
      }
      case Opcode::Load:
        expect(2);
        ex.push_back(reg_operand(ops[0], Access::Write, width));
        if (form_of(ops[1]) != Form::Mem) fail("load expects a memory source");
        ex.push_back(Operand::make_mem(parse_mem(ops[1], width), Access::Read));
        break;
      case Opcode::Store:
        expect(2);
        if (form_of(ops[0]) != Form::Mem) fail("store expects a memory destination");
        ex.push_back(Operand::make_mem(parse_mem(ops[0], width), Access::Write));
        ex.push_back(src_operand(ops[1], width));
        break;
      case Opcode::Addr:
        expect(2);
        only_q();
        ex.push_back(reg_operand(ops[0], Access::Write, 64));
        if (form_of(ops[1]) != Form::Mem) fail("addr expects a memory operand");
        ex.push_back(Operand::make_mem(parse_mem(ops[1], 64), Access::Read));
        break;
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Mul:
      case Opcode::And:
      case Opcode::Or:
      case Opcode::Xor:
      case Opcode::Shl:
      case Opcode::Shr:
      case Opcode::Sar:
        expect(2);
        ex.push_back(reg_operand(ops[0], Access::ReadWrite, width));
        ex.push_back(src_operand(ops[1], width));
        break;
      case Opcode::Not:
      case Opcode::Neg:
        expect(1);
        ex.push_back(reg_operand(ops[0], Access::ReadWrite, width));
        break;
      case Opcode::Cmp:
      case Opcode::Test:
        expect(2);
        ex.push_back(reg_operand(ops[0], Access::Read, width));
        ex.push_back(src_operand(ops[1], width));
        break;
      case Opcode::Jmp: {
        expect(1);
        only_q();
        const Form f = form_of(ops[0]);
        if (f == Form::Reg) ex.push_back(reg_operand(ops[0], Access::Read, 64));
        else if (f == Form::Mem) ex.push_back(Operand::make_mem(parse_mem(ops[0], 64), Access::Read));
        else ex.push_back(imm_operand(ops[0], 64));
        break;
      }
      case Opcode::Spawn:
        expect(3);
        only_q();
        ex.push_back(reg_operand(ops[0], Access::Write, 64));
        ex.push_back(imm_operand(ops[1], 64));
        ex.push_back(src_operand(ops[2], 64));
        break;
      case Opcode::Join:
      case Opcode::Exit:
        expect(1);
        only_q();
        ex.push_back(src_operand(ops[0], 64));
        break;
      case Opcode::Yield:
        expect(0);
        only_q();
        break;
      case Opcode::Open:
        expect(1);
        only_q();
        ex.push_back(reg_operand(ops[0], Access::Write, 64));
        break;
      case Opcode::Read:
      case Opcode::Write:
        expect(3);
        only_q();
        for (auto op : ops) ex.push_back(src_operand(op, 64));
        break;
      default:  // conditional jumps
        expect(1);
        only_q();
        if (form_of(ops[0]) != Form::Imm) fail(mnemonic + " expects a label");
        ex.push_back(imm_operand(ops[0], 64));
        break;
    }
    add_implicit_operands(insn);
    prog_.code.push_back(std::move(insn));
  }

  std::vector<std::string_view> lines_;
  Program prog_;
  bool emit_ = false;
  bool seen_data_ = false;
  Section section_ = Section::Code;
  uint64_t code_count_ = 0;
  uint64_t data_loc_ = 0;
  size_t line_no_ = 0;
};

enum SectionId : uint8_t { kSecCode = 1, kSecData = 2, kSecLabels = 3 };
constexpr uint8_t kMagic[4] = {'M', 'D', 'S', 'P'};

}  // namespace

Program assemble(std::string_view source) { return Assembler(source).run(); }

Program assemble_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw AsmError(0, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return assemble(ss.str());
}

std::vector<uint8_t> serialize_program(const Program& prog) {
  ByteWriter w;
  for (uint8_t b : kMagic) w.u8(b);
  w.u16(kContainerVersion);

  auto section = [&w](uint8_t id, auto&& body) {
    w.u8(id);
    const size_t len_pos = w.size();
    w.u32(0);
    body();
    w.patch_u32(len_pos, static_cast<uint32_t>(w.size() - len_pos - 4));
  };
  section(kSecCode, [&] {
    w.u64(prog.code_base);
    w.u64(prog.entry);
    w.u32(static_cast<uint32_t>(prog.code.size()));
    for (const auto& insn : prog.code) write_instruction(w, insn);
  });
  section(kSecData, [&] {
    w.u64(prog.data_base);
    w.bytes(prog.data);
  });
  section(kSecLabels, [&] {
    w.u32(static_cast<uint32_t>(prog.labels.size()));
    for (const auto& [name, addr] : prog.labels) {
      w.str(name);
      w.u64(addr);
    }
  });
  return std::move(w.data());
}

Program deserialize_program(std::span<const uint8_t> bytes) {
  try {
    ByteReader r(bytes);
    auto magic = r.bytes(4);
    if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw FormatError("not a program container");
    const uint16_t version = r.u16();
    if (version != kContainerVersion) throw FormatError(fmt::format("unsupported container version {}", version));
    Program prog;
    bool have_code = false;
    while (r.remaining() > 0) {
      const uint8_t id = r.u8();
      const uint32_t len = r.u32();
      ByteReader s(r.bytes(len));
      switch (id) {
        case kSecCode: {
          prog.code_base = s.u64();
          prog.entry = s.u64();
          const uint32_t n = s.u32();
          for (uint32_t i = 0; i < n; ++i) prog.code.push_back(read_instruction(s));
          have_code = true;
          break;
        }
        case kSecData:
          prog.data_base = s.u64();
          {
            auto d = s.bytes(s.remaining());
            prog.data.assign(d.begin(), d.end());
          }
          break;
        case kSecLabels: {
          const uint32_t n = s.u32();
          for (uint32_t i = 0; i < n; ++i) {
            std::string name = s.str();
            prog.labels[name] = s.u64();
          }
          break;
        }
        default:
          break;  // unknown sections are skipped
      }
    }
    if (!have_code) throw FormatError("container has no code section");
    return prog;
  } catch (const DecodeError& e) {
    throw FormatError(std::string("malformed program container: ") + e.what());
  }
}

Program load_program(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AsmError(0, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 4 && std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    return deserialize_program(bytes);
  }
  return assemble(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace minidse
