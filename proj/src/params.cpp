#include "fedgai/params.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace fedgai {

namespace {

constexpr char kMagic[4] = {'F', 'G', 'A', 'I'};

int64_t shape_prod(const std::vector<int>& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) fail("[params] nonpositive dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v & 0xff));
  b.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& b, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(b, u);
}

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : b_(b) {}

  uint8_t u8() { return take(1)[0]; }
  uint16_t u16() {
    auto p = take(2);
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }
  uint32_t u32() {
    auto p = take(4);
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  }
  float f32() {
    uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string str(size_t n) {
    auto p = take(n);
    return std::string(reinterpret_cast<const char*>(p.data()), n);
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const uint8_t> take(size_t n) {
    if (pos_ + n > b_.size())
      fail("[params] truncated checkpoint: needed " + std::to_string(n) +
           " bytes at offset " + std::to_string(pos_));
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::span<const uint8_t> b_;
  size_t pos_ = 0;
};

}  // namespace

const char* role_name(ParamRole r) {
  switch (r) {
    case ParamRole::kGenerator: return "generator";
    case ParamRole::kDiscriminator: return "discriminator";
    case ParamRole::kEncoder: return "encoder";
  }
  return "?";
}

const char* kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::kConvW: return "conv_w";
    case ParamKind::kConvB: return "conv_b";
    case ParamKind::kDenseW: return "dense_w";
    case ParamKind::kDenseB: return "dense_b";
    case ParamKind::kBnGamma: return "bn_gamma";
    case ParamKind::kBnBeta: return "bn_beta";
    case ParamKind::kBnRunningMean: return "bn_running_mean";
    case ParamKind::kBnRunningVar: return "bn_running_var";
    case ParamKind::kOther: return "other";
  }
  return "?";
}

void ParamSet::add(ParamEntry e) {
  if (e.name.empty()) fail("[params] empty entry name");
  if (e.name.size() > 0xffff) fail("[params] name too long: " + e.name);
  if (e.shape.size() > 0xff)
    fail("[params] rank " + std::to_string(e.shape.size()) + " exceeds format limit");
  if (find(e.name)) fail("[params] duplicate entry name: " + e.name);
  if (shape_prod(e.shape) != static_cast<int64_t>(e.values.size()))
    fail("[params] entry " + e.name + ": shape " + shape_str(e.shape) +
         " does not match " + std::to_string(e.values.size()) + " values");
  entries_.push_back(std::move(e));
}

const ParamEntry* ParamSet::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

int64_t ParamSet::scalar_count() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += static_cast<int64_t>(e.values.size());
  return n;
}

ParamSet ParamSet::with_role(ParamRole role) const {
  ParamSet out;
  for (const auto& e : entries_)
    if (e.role == role) out.entries_.push_back(e);
  return out;
}

ParamSet ParamSet::without_kinds(std::span<const ParamKind> kinds) const {
  ParamSet out;
  for (const auto& e : entries_)
    if (std::find(kinds.begin(), kinds.end(), e.kind) == kinds.end())
      out.entries_.push_back(e);
  return out;
}

ParamSet ParamSet::without_bn() const {
  ParamSet out;
  for (const auto& e : entries_)
    if (!is_bn_kind(e.kind)) out.entries_.push_back(e);
  return out;
}

std::vector<uint8_t> ParamSet::encode() const {
  std::vector<uint8_t> b;
  b.reserve(wire_bytes(*this));
  b.insert(b.end(), kMagic, kMagic + 4);
  put_u16(b, kCheckpointVersion);
  put_u32(b, static_cast<uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_u16(b, static_cast<uint16_t>(e.name.size()));
    b.insert(b.end(), e.name.begin(), e.name.end());
    b.push_back(static_cast<uint8_t>(e.role));
    b.push_back(static_cast<uint8_t>(e.kind));
    b.push_back(static_cast<uint8_t>(e.shape.size()));
    for (int d : e.shape) put_u32(b, static_cast<uint32_t>(d));
    for (double v : e.values) put_f32(b, static_cast<float>(v));
  }
  return b;
}

ParamSet ParamSet::decode(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  const std::string magic = r.str(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    fail("[params] bad magic '" + magic + "', expected 'FGAI'");
  const uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    fail("[params] unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = r.u32();
  ParamSet out;
  for (uint32_t i = 0; i < count; ++i) {
    ParamEntry e;
    const uint16_t name_len = r.u16();
    e.name = r.str(name_len);
    const uint8_t role = r.u8();
    if (role > 2) fail("[params] bad role code " + std::to_string(role));
    e.role = static_cast<ParamRole>(role);
    const uint8_t kind = r.u8();
    if (kind > 8) fail("[params] bad kind code " + std::to_string(kind));
    e.kind = static_cast<ParamKind>(kind);
    const uint8_t rank = r.u8();
    int64_t n = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      const uint32_t dim = r.u32();
      if (dim == 0) fail("[params] zero dimension in entry " + e.name);
      e.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    e.values.reserve(static_cast<size_t>(n));
    for (int64_t v = 0; v < n; ++v) e.values.push_back(static_cast<double>(r.f32()));
    out.add(std::move(e));
  }
  if (!r.done()) fail("[params] trailing bytes after last entry");
  return out;
}

void ParamSet::save(const std::string& path) const {
  const auto bytes = encode();
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("[params] cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) fail("[params] write failed: " + path);
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("[params] cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return decode(bytes);
}

size_t wire_bytes(const ParamSet& p) {
  size_t n = kCheckpointHeaderBytes;
  for (const auto& e : p.entries())
    n += 2 + e.name.size() + 1 + 1 + 1 + 4 * e.shape.size() + 4 * e.values.size();
  return n;
}

}  // namespace fedgai
