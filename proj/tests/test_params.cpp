#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <vector>

#include "fedgai/params.hpp"

using namespace fedgai;

namespace {

ParamSet sample_set() {
  ParamSet p;
  p.add({"g.block1.conv.w", ParamRole::kGenerator, ParamKind::kConvW,
         {2, 1, 3, 3}, std::vector<double>(18, 0.25)});
  p.add({"g.block1.bn.gamma", ParamRole::kGenerator, ParamKind::kBnGamma,
         {2}, {1.0, 1.0}});
  p.add({"g.block1.bn.running_mean", ParamRole::kGenerator,
         ParamKind::kBnRunningMean, {2}, {0.0, 0.5}});
  p.add({"d.fc1.w", ParamRole::kDiscriminator, ParamKind::kDenseW,
         {4, 3}, std::vector<double>(12, -0.125)});
  p.add({"d.fc1.b", ParamRole::kDiscriminator, ParamKind::kDenseB,
         {4}, {0.0, 1.0, 2.0, 3.0}});
  return p;
}

}  // namespace

TEST_CASE("byte layout: header and per-entry sizes") {
  // magic(4) + version u16(2) + count u32(4) = 10 bytes.
  ParamSet empty;
  CHECK(wire_bytes(empty) == 10);
  CHECK(empty.encode().size() == 10);

  // One rank-1 entry "w" with 3 values:
  // name(2+1) + role(1) + kind(1) + rank(1) + dims(4) + values(12) = 22.
  ParamSet one;
  one.add({"w", ParamRole::kGenerator, ParamKind::kOther, {3}, {1.0, 2.0, 3.0}});
  CHECK(wire_bytes(one) == 10 + 22);
  CHECK(one.encode().size() == 32);

  // Adding a scalar to an entry grows the encoding by exactly 4 bytes.
  ParamSet two;
  two.add({"w", ParamRole::kGenerator, ParamKind::kOther, {4}, {1.0, 2.0, 3.0, 4.0}});
  CHECK(wire_bytes(two) == wire_bytes(one) + 4);

  const auto bytes = one.encode();
  CHECK(bytes[0] == 'F');
  CHECK(bytes[1] == 'G');
  CHECK(bytes[2] == 'A');
  CHECK(bytes[3] == 'I');
  CHECK(bytes[4] == 1);  // version LE low byte
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 1);  // count LE low byte
  CHECK(bytes[10] == 1);  // name length low byte
  CHECK(bytes[12] == 'w');
}

TEST_CASE("encode/decode round trip preserves order, tags, shapes, values") {
  ParamSet p = sample_set();
  auto bytes = p.encode();
  ParamSet q = ParamSet::decode(bytes);
  REQUIRE(q.size() == p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    const auto& a = p.entries()[i];
    const auto& b = q.entries()[i];
    CHECK(a.name == b.name);
    CHECK(a.role == b.role);
    CHECK(a.kind == b.kind);
    CHECK(a.shape == b.shape);
    CHECK(a.values == b.values);  // sample values are exactly f32-representable
  }
  // Second encode is bit-identical: the f32 quantization is a fixed point.
  CHECK(q.encode() == bytes);
}

TEST_CASE("re-encode after decode is a fixed point even for non-f32 values") {
  ParamSet p;
  p.add({"w", ParamRole::kGenerator, ParamKind::kOther, {2}, {0.1, 1.0 / 3.0}});
  auto b1 = p.encode();
  auto b2 = ParamSet::decode(b1).encode();
  auto b3 = ParamSet::decode(b2).encode();
  CHECK(b1 == b2);
  CHECK(b2 == b3);
}

TEST_CASE("file round trip") {
  ParamSet p = sample_set();
  const std::string path = "params_roundtrip.fgai";
  p.save(path);
  ParamSet q = ParamSet::load(path);
  CHECK(q.encode() == p.encode());
  std::remove(path.c_str());
}

TEST_CASE("filters preserve order and drop the right entries") {
  ParamSet p = sample_set();
  ParamSet d = p.with_role(ParamRole::kDiscriminator);
  REQUIRE(d.size() == 2);
  CHECK(d.entries()[0].name == "d.fc1.w");
  CHECK(d.entries()[1].name == "d.fc1.b");

  ParamSet no_bn = p.without_bn();
  REQUIRE(no_bn.size() == 3);
  for (const auto& e : no_bn.entries()) CHECK_FALSE(is_bn_kind(e.kind));

  const ParamKind drop[] = {ParamKind::kDenseB};
  ParamSet no_db = p.without_kinds(drop);
  CHECK(no_db.size() == 4);
  CHECK(no_db.find("d.fc1.b") == nullptr);
}

TEST_CASE("scalar_count sums entry sizes") {
  ParamSet p = sample_set();
  CHECK(p.scalar_count() == 18 + 2 + 2 + 12 + 4);
  CHECK(ParamSet{}.scalar_count() == 0);
}

TEST_CASE("malformed inputs are rejected") {
  ParamSet p = sample_set();
  SUBCASE("duplicate name") {
    CHECK_THROWS_AS(
        p.add({"d.fc1.w", ParamRole::kDiscriminator, ParamKind::kDenseW, {1}, {0.0}}),
        Error);
  }
  SUBCASE("shape/value mismatch") {
    CHECK_THROWS_AS(
        p.add({"x", ParamRole::kGenerator, ParamKind::kOther, {3}, {1.0}}), Error);
  }
  SUBCASE("bad magic") {
    auto bytes = p.encode();
    bytes[0] = 'X';
    CHECK_THROWS_AS((void)ParamSet::decode(bytes), Error);
  }
  SUBCASE("truncation") {
    auto bytes = p.encode();
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS((void)ParamSet::decode(bytes), Error);
  }
  SUBCASE("trailing garbage") {
    auto bytes = p.encode();
    bytes.push_back(0);
    CHECK_THROWS_AS((void)ParamSet::decode(bytes), Error);
  }
  SUBCASE("bad version") {
    auto bytes = p.encode();
    bytes[4] = 9;
    CHECK_THROWS_AS((void)ParamSet::decode(bytes), Error);
  }
}
