// Copyright 2026 The GERA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gera/cache.hpp"

#include "gera/geometry.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace gera;
namespace gt = gera::test;
using Outcome = DescriptorStore::Outcome;

namespace {

struct Fixture {
  gt::TempDir dir{"cache"};
  std::filesystem::path cloud_file = dir / "a.xyz";
  PointCloud cloud = gt::random_cloud(64, 1);
  std::vector<std::string> warnings;

  Fixture() { save_cloud(cloud, cloud_file); }

  DescriptorStore store(int n_desc = 5) {
    DescriptorStore s(dir / "desc", n_desc);
    s.warn = [this](const std::string& w) { warnings.push_back(w); };
    return s;
  }
};

bool same(const DescriptorSet& a, const DescriptorSet& b) {
  return a.n_desc == b.n_desc && a.vectors == b.vectors;
}

}  // namespace

TEST(Cache, MissThenHit) {
  Fixture f;
  auto s = f.store();
  Outcome o{};
  const DescriptorSet first = s.get(f.cloud_file, "a", &o);
  EXPECT_EQ(o, Outcome::encoded);
  EXPECT_TRUE(same(first, encode_cloud(load_cloud(f.cloud_file), 5)));
  const DescriptorSet second = s.get(f.cloud_file, "a", &o);
  EXPECT_EQ(o, Outcome::hit);
  EXPECT_TRUE(same(first, second));
  EXPECT_EQ(s.constructions(), 1u);
  EXPECT_EQ(s.hits(), 1u);

  // a fresh store over the same directory reuses the entry
  auto again = f.store();
  again.get(f.cloud_file, "a", &o);
  EXPECT_EQ(o, Outcome::hit);
  EXPECT_EQ(again.constructions(), 0u);
  EXPECT_TRUE(f.warnings.empty());
}

TEST(Cache, EntriesAreKeyedByNeighbourhoodSize) {
  Fixture f;
  auto s5 = f.store(5);
  auto s6 = f.store(6);
  EXPECT_NE(s5.cache_path("a"), s6.cache_path("a"));
  s5.get(f.cloud_file, "a");
  Outcome o{};
  EXPECT_EQ(s6.get(f.cloud_file, "a", &o).n_desc, 6);
  EXPECT_EQ(o, Outcome::encoded);
}

TEST(Cache, StaleSourceIsReencoded) {
  Fixture f;
  f.store().get(f.cloud_file, "a");
  const PointCloud changed = gt::random_cloud(64, 2);
  save_cloud(changed, f.cloud_file);
  auto s = f.store();
  Outcome o{};
  const DescriptorSet d = s.get(f.cloud_file, "a", &o);
  EXPECT_EQ(o, Outcome::recovered);
  EXPECT_TRUE(same(d, encode_cloud(load_cloud(f.cloud_file), 5)));
  ASSERT_EQ(f.warnings.size(), 1u);
  EXPECT_NE(f.warnings[0].find("stale"), std::string::npos);
  EXPECT_EQ(s.recovered(), 1u);
  EXPECT_EQ(s.constructions(), 1u);
}

TEST(Cache, CorruptPayloadIsReencoded) {
  Fixture f;
  auto first = f.store();
  first.get(f.cloud_file, "a");
  std::string bytes = read_file(first.cache_path("a"));
  bytes[bytes.size() - 3] ^= 0x5a;
  write_file(first.cache_path("a"), bytes);

  auto s = f.store();
  Outcome o{};
  const DescriptorSet d = s.get(f.cloud_file, "a", &o);
  EXPECT_EQ(o, Outcome::recovered);
  EXPECT_TRUE(same(d, encode_cloud(f.cloud, 5)));
  ASSERT_EQ(f.warnings.size(), 1u);
  EXPECT_NE(f.warnings[0].find("corrupt"), std::string::npos);
  s.get(f.cloud_file, "a", &o);
  EXPECT_EQ(o, Outcome::hit);
}

TEST(Cache, MissingOrGarbledMetaIsReencoded) {
  Fixture f;
  auto first = f.store();
  first.get(f.cloud_file, "a");
  auto meta = first.cache_path("a");
  meta += ".meta";
  write_file(meta, "{not json");
  Outcome o{};
  f.store().get(f.cloud_file, "a", &o);
  EXPECT_EQ(o, Outcome::recovered);
  std::filesystem::remove(meta);
  f.store().get(f.cloud_file, "a", &o);
  EXPECT_EQ(o, Outcome::recovered);
  EXPECT_EQ(f.warnings.size(), 2u);
}

TEST(Cache, TruncatedPayloadIsReencoded) {
  Fixture f;
  auto first = f.store();
  first.get(f.cloud_file, "a");
  const std::string bytes = read_file(first.cache_path("a"));
  write_file(first.cache_path("a"), bytes.substr(0, bytes.size() / 2));
  Outcome o{};
  f.store().get(f.cloud_file, "a", &o);
  EXPECT_EQ(o, Outcome::recovered);
}

TEST(Cache, RejectsTinyNeighbourhoods) {
  gt::TempDir dir("cache_bad");
  EXPECT_THROW(DescriptorStore(dir.path(), 2), Error);
}
