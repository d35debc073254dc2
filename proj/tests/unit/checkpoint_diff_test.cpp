#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "cocola/checkpoint_diff.hpp"
#include "tensor_fixtures.hpp"

using namespace cocola;
using namespace testing_support;

namespace {

TensorMeta meta_of(const Manifest& m, const std::string& name) { return *m.find(name); }

/// Copy of `t` with every element shifted by `step * k` in double precision, stored as f64.
TensorData shifted_f64(const KnownTensor& t, const std::vector<double>& step, double k) {
  std::vector<double> v(t.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = t.values[i] + k * step[i];
  return make_tensor<double>(t.data.name, DType::F64, t.data.shape, v);
}

TensorData as_f64(const KnownTensor& t) { return make_tensor<double>(t.data.name, DType::F64, t.data.shape, t.values); }

DiffEntry diff_files(const std::filesystem::path& a, const std::filesystem::path& b, const std::string& name,
                     std::size_t chunk = kDefaultChunkElements) {
  const auto ma = read_manifest(a), mb = read_manifest(b);
  std::ifstream sa(a, std::ios::binary), sb(b, std::ios::binary);
  return diff_tensor(meta_of(ma, name), sa, meta_of(mb, name), sb, chunk);
}

}  // namespace

TEST(DiffTensor, SmallExample) {
  TempDir dir;
  const std::vector<float> p{1, 2}, f{2, 4};
  write_container(dir / "p", std::vector<TensorData>{make_tensor<float>("w", DType::F32, {2}, p)});
  write_container(dir / "f", std::vector<TensorData>{make_tensor<float>("w", DType::F32, {2}, f)});
  const auto e = diff_files(dir / "p", dir / "f", "w");
  EXPECT_EQ(e.mean_abs_delta, 1.5);
  EXPECT_EQ(e.n, 2u);
}

TEST(DiffTensor, MatchesFullLoadOracleForEveryDtypeAndChunkSize) {
  TempDir dir;
  std::mt19937_64 rng(21);
  for (auto dt : {DType::F64, DType::F32, DType::F16, DType::BF16, DType::I32, DType::U8}) {
    for (std::uint64_t n : {1u, 7u, 1000u, 70001u}) {
      const auto a = random_tensor("t", dt, {n}, rng);
      const auto b = random_tensor("t", dt, {n}, rng);
      write_container(dir / "a", std::vector<TensorData>{a.data});
      write_container(dir / "b", std::vector<TensorData>{b.data});
      const double want = oracle_mean_abs_diff(a.values, b.values);
      for (std::size_t chunk : {std::size_t{1}, std::size_t{333}, kDefaultChunkElements}) {
        if (chunk == 1 && n > 1000) continue;
        const auto e = diff_files(dir / "a", dir / "b", "t", chunk);
        EXPECT_NEAR(e.mean_abs_delta, want, 1e-12 * std::max(1.0, want)) << to_string(dt) << " n=" << n << " chunk=" << chunk;
      }
    }
  }
}

TEST(DiffTensor, MismatchesAreErrorsNamingTheTensor) {
  TempDir dir;
  std::mt19937_64 rng(2);
  write_container(dir / "a", std::vector<TensorData>{random_tensor("w", DType::F32, {4}, rng).data});
  write_container(dir / "b", std::vector<TensorData>{random_tensor("w", DType::F32, {2, 2}, rng).data});
  write_container(dir / "c", std::vector<TensorData>{random_tensor("w", DType::F16, {4}, rng).data});
  try {
    diff_files(dir / "a", dir / "b", "w");
    FAIL();
  } catch (const ContainerError& e) {
    EXPECT_NE(std::string(e.what()).find("[w]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos);
  }
  EXPECT_THROW(diff_files(dir / "a", dir / "c", "w"), ContainerError);

  // A stream shorter than the manifest claims.
  const auto m = read_manifest(dir / "a");
  std::istringstream full(slurp(dir / "a"));
  std::istringstream cut(slurp(dir / "a").substr(0, m.tensors[0].byte_offset + 6));
  EXPECT_THROW(diff_tensor(m.tensors[0], full, m.tensors[0], cut, 2), ContainerError);
}

TEST(DiffCheckpoints, SelfDiffIsZeroAndDiffIsSymmetric) {
  TempDir dir;
  std::mt19937_64 rng(5);
  std::vector<TensorData> a, b;
  for (int l = 0; l < 3; ++l) {
    for (const char* part : {"attn.qkv.weight", "mlp.fc.weight", "ln1.weight"}) {
      const std::string name = "layers." + std::to_string(l) + "." + part;
      a.push_back(random_tensor(name, DType::BF16, {17, 3}, rng).data);
      b.push_back(random_tensor(name, DType::BF16, {17, 3}, rng).data);
    }
  }
  a.push_back(random_tensor("embed.weight", DType::F16, {10, 4}, rng).data);
  b.push_back(random_tensor("embed.weight", DType::F16, {10, 4}, rng).data);
  write_container(dir / "a", a);
  write_container(dir / "b", b);
  const auto ma = read_manifest(dir / "a"), mb = read_manifest(dir / "b");
  const auto scheme = toy_scheme();

  const auto self = diff_checkpoints(ma, ma, scheme);
  for (const auto& e : self.entries) EXPECT_EQ(e.mean_abs_delta, 0.0) << e.name;
  for (auto k : self.matrix.kinds()) {
    for (int l = 0; l < self.matrix.layer_count(); ++l) EXPECT_EQ(self.matrix.at(k, l).value_or(0.0), 0.0);
  }

  DiffOptions one;
  one.threads = 1;
  DiffOptions many;
  many.threads = 4;
  many.chunk_elements = 5;
  const auto ab = diff_checkpoints(ma, mb, scheme, one);
  const auto ba = diff_checkpoints(mb, ma, scheme, many);
  ASSERT_EQ(ab.entries.size(), 10u);
  for (std::size_t i = 0; i < ab.entries.size(); ++i) {
    EXPECT_EQ(ab.entries[i].name, ba.entries[i].name);
    EXPECT_NEAR(ab.entries[i].mean_abs_delta, ba.entries[i].mean_abs_delta, 1e-15);
  }
  EXPECT_EQ(ab.matrix.layer_count(), 3);
  EXPECT_EQ(ab.matrix.kinds(), (std::vector<ModuleKind>{ModuleKind::attention, ModuleKind::mlp, ModuleKind::norm}));
  EXPECT_EQ(ab.entries[0].name, "embed.weight");
  EXPECT_FALSE(ab.entries[0].layer);
}

TEST(DiffCheckpoints, ScalingTheUpdateScalesEveryCell) {
  TempDir dir;
  std::mt19937_64 rng(8);
  std::vector<TensorData> base, tuned1;
  std::vector<KnownTensor> known;
  std::vector<std::vector<double>> steps;
  for (int l = 0; l < 4; ++l) {
    const auto t = random_tensor("layers." + std::to_string(l) + ".mlp.fc.weight", DType::F32, {257}, rng);
    std::vector<double> step(257);
    std::uniform_real_distribution<double> u(-1e-3, 1e-3);
    for (auto& s : step) s = u(rng);
    known.push_back(t);
    steps.push_back(step);
    base.push_back(as_f64(t));
    tuned1.push_back(shifted_f64(t, step, 1.0));
  }
  write_container(dir / "base", base);
  write_container(dir / "t1", tuned1);
  const auto m0 = read_manifest(dir / "base");
  const auto d1 = diff_checkpoints(m0, read_manifest(dir / "t1"), toy_scheme());
  for (double k : {0.5, 2.0, 3.0, 10.0}) {
    std::vector<TensorData> tk;
    for (std::size_t i = 0; i < known.size(); ++i) tk.push_back(shifted_f64(known[i], steps[i], k));
    write_container(dir / "tk", tk);
    const auto dk = diff_checkpoints(m0, read_manifest(dir / "tk"), toy_scheme());
    for (int l = 0; l < 4; ++l) {
      const double one = *d1.matrix.at(ModuleKind::mlp, l);
      EXPECT_NEAR(*dk.matrix.at(ModuleKind::mlp, l), k * one, 1e-9 * k * one) << "k=" << k << " layer " << l;
    }
  }
}

TEST(DiffCheckpoints, TensorMissingOnOneSideIsAnError) {
  TempDir dir;
  std::mt19937_64 rng(4);
  write_container(dir / "a", std::vector<TensorData>{random_tensor("x", DType::F32, {2}, rng).data,
                                                     random_tensor("y", DType::F32, {2}, rng).data});
  write_container(dir / "b", std::vector<TensorData>{random_tensor("x", DType::F32, {2}, rng).data});
  EXPECT_THROW(diff_checkpoints(read_manifest(dir / "a"), read_manifest(dir / "b"), toy_scheme()), ContainerError);
  EXPECT_THROW(diff_checkpoints(read_manifest(dir / "b"), read_manifest(dir / "a"), toy_scheme()), ContainerError);
}

TEST(BuildMatrix, WeightedMeanExamples) {
  std::vector<DiffEntry> one{{"a", 0, ModuleKind::mlp, 0.25, 4}};
  EXPECT_EQ(*build_matrix(one).at(ModuleKind::mlp, 0), 0.25);
  std::vector<DiffEntry> two{{"a", 2, ModuleKind::mlp, 1.0, 10}, {"b", 2, ModuleKind::mlp, 3.0, 30}};
  const auto m = build_matrix(two);
  EXPECT_EQ(m.layer_count(), 3);
  EXPECT_EQ(*m.at(ModuleKind::mlp, 2), 2.5);
  EXPECT_EQ(m.weight(ModuleKind::mlp, 2), 40u);
  EXPECT_FALSE(m.at(ModuleKind::mlp, 0));
  EXPECT_FALSE(m.at(ModuleKind::attention, 2));
}

TEST(BuildMatrix, MatchesGroupByOracleOnFuzzedEntries) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> layer(-1, 7), kind(0, 5), n(0, 1000);
  std::uniform_real_distribution<double> d(0.0, 2.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<DiffEntry> entries;
    std::map<std::pair<ModuleKind, int>, std::pair<long double, long double>> oracle;
    const int count = std::uniform_int_distribution<int>(1, 40)(rng);
    for (int i = 0; i < count; ++i) {
      DiffEntry e;
      e.name = "t" + std::to_string(i);
      const int l = layer(rng);
      if (l >= 0) e.layer = l;
      e.kind = kAllModuleKinds[static_cast<std::size_t>(kind(rng))];
      e.mean_abs_delta = d(rng);
      e.n = static_cast<std::uint64_t>(n(rng));
      if (e.layer && e.n > 0) {
        auto& [s, w] = oracle[{e.kind, l}];
        s += static_cast<long double>(e.mean_abs_delta) * e.n;
        w += e.n;
      }
      entries.push_back(e);
    }
    const auto m = build_matrix(entries, 8);
    for (const auto& [key, sw] : oracle) {
      const auto v = m.at(key.first, key.second);
      ASSERT_TRUE(v);
      const double want = static_cast<double>(sw.first / sw.second);
      EXPECT_NEAR(*v, want, 1e-12);
    }
    // Zero-element tensors leave their cell empty.
    for (auto k : m.kinds()) {
      for (int l = 0; l < 8; ++l) EXPECT_EQ(m.at(k, l).has_value(), oracle.contains({k, l}));
    }
  }
}

TEST(MatrixCsv, RoundTripsAtFullPrecision) {
  std::vector<DiffEntry> entries{{"a", 0, ModuleKind::mlp, 1.0 / 3.0, 3},
                                 {"b", 2, ModuleKind::attention, 2e-7, 5},
                                 {"c", 1, ModuleKind::mlp, 0.1, 1}};
  const auto m = build_matrix(entries);
  std::stringstream s;
  write_matrix_csv(s, m);
  EXPECT_EQ(s.str().substr(0, s.str().find('\n')), "module_kind,layer_1,layer_2,layer_3");
  const auto back = read_matrix_csv(s);
  EXPECT_EQ(back.kinds(), m.kinds());
  for (auto k : m.kinds()) {
    for (int l = 0; l < 3; ++l) EXPECT_EQ(back.at(k, l), m.at(k, l));
  }
  std::istringstream bad("module_kind,layer_1\nffn,1\n");
  EXPECT_THROW(read_matrix_csv(bad), IngestError);
  std::istringstream ragged("module_kind,layer_1,layer_2\nmlp,1\n");
  EXPECT_THROW(read_matrix_csv(ragged), IngestError);
  std::istringstream nonnum("module_kind,layer_1\nmlp,abc\n");
  EXPECT_THROW(read_matrix_csv(nonnum), IngestError);
}

TEST(EntriesCsv, RendersOneIndexedLayers) {
  std::vector<DiffEntry> entries{{"layers.0.mlp.w", 0, ModuleKind::mlp, 0.5, 2}, {"embed.w", std::nullopt, ModuleKind::embedding, 0.25, 4}};
  std::ostringstream s;
  write_entries_csv(s, entries);
  EXPECT_EQ(s.str(), "name,layer,module_kind,mean_abs_delta,n\nlayers.0.mlp.w,1,mlp,0.5,2\nembed.w,,embedding,0.25,4\n");
}
