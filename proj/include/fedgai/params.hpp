#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedgai/common.hpp"

namespace fedgai {

// ---------------------------------------------------------------------------
// Tagged parameter sets: the unit of checkpointing and federated exchange.
//
// Wire layout (little-endian throughout):
//   magic "FGAI" (4) | format version u16 (2) | entry count u32 (4)
//   per entry: name length u16 | name bytes | role u8 | kind u8 | rank u8
//              | rank x dim u32 | prod(dims) x value f32
// Training math runs in f64; the wire carries f32.
// ---------------------------------------------------------------------------

enum class ParamRole : uint8_t {
  kGenerator = 0,
  kDiscriminator = 1,
  kEncoder = 2,
};

enum class ParamKind : uint8_t {
  kConvW = 0,
  kConvB = 1,
  kDenseW = 2,
  kDenseB = 3,
  kBnGamma = 4,
  kBnBeta = 5,
  kBnRunningMean = 6,
  kBnRunningVar = 7,
  kOther = 8,
};

inline bool is_bn_kind(ParamKind k) {
  return k == ParamKind::kBnGamma || k == ParamKind::kBnBeta ||
         k == ParamKind::kBnRunningMean || k == ParamKind::kBnRunningVar;
}

const char* role_name(ParamRole r);
const char* kind_name(ParamKind k);

struct ParamEntry {
  std::string name;
  ParamRole role = ParamRole::kGenerator;
  ParamKind kind = ParamKind::kOther;
  std::vector<int> shape;
  std::vector<double> values;
};

class ParamSet {
 public:
  void add(ParamEntry e);  // rejects duplicate names and shape/value mismatches

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  const ParamEntry* find(const std::string& name) const;
  int64_t scalar_count() const;

  // Order-preserving filters.
  ParamSet with_role(ParamRole role) const;
  ParamSet without_kinds(std::span<const ParamKind> kinds) const;
  ParamSet without_bn() const;

  std::vector<uint8_t> encode() const;
  static ParamSet decode(std::span<const uint8_t> bytes);

  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

 private:
  std::vector<ParamEntry> entries_;
};

inline constexpr uint16_t kCheckpointVersion = 1;
inline constexpr size_t kCheckpointHeaderBytes = 10;  // magic + version + count

// Exact encoded size without materializing the buffer.
size_t wire_bytes(const ParamSet& p);

}  // namespace fedgai
