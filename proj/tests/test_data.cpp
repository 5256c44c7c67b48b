#include <algorithm>
#include <filesystem>
#include <set>

#include "aldk/dataset.hpp"
#include "aldk/errors.hpp"
#include "aldk/losses.hpp"
#include "aldk/metrics.hpp"
#include "aldk/vol_io.hpp"
#include "test_util.hpp"

namespace aldk {
namespace {

using test::random_tensor;

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

TEST(SplitMix, ReferenceVector) {
  SplitMix64 s(0);
  EXPECT_EQ(s.next(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(s.next(), 0x6E789E6AA1B965F4ULL);
}

TEST(SplitMix, SameSeedSameStreamDistinctSeedsDiffer) {
  SplitMix64 a(77), b(77);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
  std::set<std::uint64_t> first;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) first.insert(SplitMix64(seed).next());
  EXPECT_EQ(first.size(), 1000u);
}

TEST(SplitMix, UniformInRange) {
  SplitMix64 s(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(s.below(7), 7u);
  }
}

TEST(Phantom, MaskBinaryNonEmptyAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = gen_phantom(PhantomSpec{.seed = seed});
    for (float v : p.mask.grid().data()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
    EXPECT_GT(p.mask.count(), 0);
    const auto [lo, hi] = std::minmax_element(p.image.grid().data().begin(), p.image.grid().data().end());
    EXPECT_GE(*lo, 0.0f);
    EXPECT_LE(*hi, 1.0f);
    EXPECT_LT(*lo, *hi);
    const auto again = gen_phantom(PhantomSpec{.seed = seed});
    EXPECT_TRUE(bit_equal(p.image.grid(), again.image.grid()));
    EXPECT_TRUE(bit_equal(p.mask.grid(), again.mask.grid()));
  }
  EXPECT_FALSE(bit_equal(gen_phantom(PhantomSpec{.seed = 1}).image.grid(),
                         gen_phantom(PhantomSpec{.seed = 2}).image.grid()));
}

TEST(Phantom, HistogramSpansHalfTheRange) {
  // Fraction of ten equal-width bins in [0,1] that receive at least one voxel.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = gen_phantom(PhantomSpec{.seed = seed});
    std::set<int> bins;
    for (float v : p.image.grid().data()) bins.insert(std::min(9, static_cast<int>(v * 10.0f)));
    EXPECT_GE(bins.size() / 10.0, 0.5) << "seed " << seed;
  }
}

TEST(Phantom, RejectsInvalidSpecs) {
  EXPECT_THROW(gen_phantom(PhantomSpec{.extent = 8}), ConfigError);
  EXPECT_THROW(gen_phantom(PhantomSpec{.extent = 24}), ConfigError);
  EXPECT_THROW(gen_phantom(PhantomSpec{.organ_axis_min = 0.3, .organ_axis_max = 0.2}), ConfigError);
}

TEST(SmoothField, ZeroAmplitudeGivesZeroField) {
  SplitMix64 s(5);
  const auto f = gen_smooth_field(FieldSpec{.amplitude = 0.0}, 32, s);
  for (float v : f.u().data()) ASSERT_EQ(v, 0.0f);
}

TEST(SmoothField, FoldFreeBoundedAndDerivativeLimited) {
  const FieldSpec spec{.amplitude = 3.0};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SplitMix64 s(seed);
    const auto f = gen_smooth_field(spec, 32, s);
    EXPECT_EQ(folding_count(f), 0) << "seed " << seed;
    double max_abs = 0.0;
    for (float v : f.u().data()) max_abs = std::max(max_abs, static_cast<double>(std::abs(v)));
    EXPECT_LE(max_abs, spec.amplitude + 1e-6) << "seed " << seed;
    EXPECT_LE(max_abs_derivative(f), spec.max_derivative + 1e-6);
  }
}

TEST(MakePair, ConstructionIdentities) {
  SplitMix64 s(9);
  for (int i = 0; i < 4; ++i) {
    const auto p = make_pair(PhantomSpec{.seed = static_cast<std::uint64_t>(i)}, FieldSpec{}, s);
    const Volume warped = warp(p.moving, p.ground_truth);
    EXPECT_EQ(rec_loss(Var::constant(warped.grid()), Var::constant(p.fixed.grid())).item(), 0.0f);
    EXPECT_EQ(dice(warp(p.moving_mask, p.ground_truth), p.fixed_mask), 1.0);
  }
}

TEST(MakePair, DeformationMovesTheOrgan) {
  const auto data = make_dataset(PhantomSpec{}, FieldSpec{.amplitude = 2.0}, 20, 4);
  for (const auto& p : data.pairs) EXPECT_LT(dice(p.moving_mask, p.fixed_mask), 1.0);
}

TEST(Dataset, RecordsAreIndependentlyRegenerable) {
  const auto data = make_dataset(PhantomSpec{.extent = 16}, FieldSpec{}, 4, 8);
  const auto third = generate_record(PhantomSpec{.extent = 16}, FieldSpec{}, 8, 2);
  EXPECT_TRUE(bit_equal(data.pairs[2].moving.grid(), third.moving.grid()));
  EXPECT_TRUE(bit_equal(data.pairs[2].ground_truth.u(), third.ground_truth.u()));
  EXPECT_FALSE(bit_equal(data.pairs[1].moving.grid(), third.moving.grid()));
}

TEST(Vol1, RoundTripsEveryKind) {
  const Tensor img = random_tensor({1, 4, 8, 16}, 1, 0, 1);
  const Tensor field = random_tensor({3, 4, 8, 16}, 2);
  Tensor mask({1, 4, 8, 16}, 0.0f);
  for (std::int64_t i = 0; i < mask.numel(); i += 3) mask[i] = 1.0f;
  for (auto [kind, t] : {std::pair{VolKind::Intensity, img}, {VolKind::Displacement, field}, {VolKind::Mask, mask}}) {
    const auto back = decode_vol(encode_vol(kind, t));
    EXPECT_EQ(back.kind, kind);
    EXPECT_TRUE(bit_equal(back.data, t));
  }
}

TEST(Vol1, LayoutIsChannelFastest) {
  Tensor field({3, 1, 1, 2}, 0.0f);
  for (std::int64_t i = 0; i < 6; ++i) field[i] = static_cast<float>(i);  // c0: 0,1  c1: 2,3  c2: 4,5
  const auto bytes = encode_vol(VolKind::Displacement, field);
  ASSERT_EQ(bytes.size(), 4u + 4 * 6 + 4 * 6);
  auto f32_at = [&](std::size_t k) {
    float v;
    std::memcpy(&v, bytes.data() + 28 + 4 * k, 4);
    return v;
  };
  const float expected[] = {0, 2, 4, 1, 3, 5};
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(f32_at(k), expected[k]);
}

TEST(Vol1, ErrorsAreTyped) {
  const auto bytes = encode_vol(VolKind::Intensity, random_tensor({1, 2, 2, 2}, 3));
  auto kind_of = [](const std::vector<std::uint8_t>& b) {
    try {
      decode_vol(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "decoded a corrupt payload";
    return FormatError::Kind::Schema;
  };
  auto magic = bytes;
  magic[1] = 'X';
  EXPECT_EQ(kind_of(magic), FormatError::Kind::BadMagic);
  EXPECT_EQ(kind_of({bytes.begin(), bytes.end() - 4}), FormatError::Kind::Truncated);
  EXPECT_EQ(kind_of({bytes.begin(), bytes.begin() + 10}), FormatError::Kind::Truncated);
  auto longer = bytes;
  longer.insert(longer.end(), 4, 0);
  EXPECT_EQ(kind_of(longer), FormatError::Kind::Inconsistent);
  auto channels = bytes;
  channels[24] = 3;  // intensity with three channels
  EXPECT_NE(kind_of(channels), FormatError::Kind::BadMagic);

  auto mask = encode_vol(VolKind::Mask, Tensor({1, 2, 2, 2}, 1.0f));
  std::memcpy(mask.data() + 28, "\x00\x00\x00\x3f", 4);  // 0.5
  EXPECT_EQ(kind_of(mask), FormatError::Kind::NonBinaryMask);
}

class DatasetFiles : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "aldk_dataset_test";
  void SetUp() override { std::filesystem::remove_all(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(DatasetFiles, WriteLoadMatchesInMemory) {
  const PhantomSpec ps{.extent = 16};
  const auto manifest = write_dataset(ps, FieldSpec{}, 3, 5, dir);
  const auto reread = read_manifest(dir / "manifest.json");
  EXPECT_EQ(reread.records.size(), 3u);
  EXPECT_EQ(reread.seed, 5u);
  EXPECT_EQ(to_json(reread.phantom), to_json(ps));
  const auto loaded = load_dataset(reread);
  const auto memory = make_dataset(ps, FieldSpec{}, 3, 5);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(bit_equal(loaded.pairs[i].fixed.grid(), memory.pairs[i].fixed.grid()));
    EXPECT_TRUE(bit_equal(loaded.pairs[i].fixed_mask.grid(), memory.pairs[i].fixed_mask.grid()));
    EXPECT_TRUE(bit_equal(loaded.pairs[i].ground_truth.u(), memory.pairs[i].ground_truth.u()));
  }
}

TEST_F(DatasetFiles, RegenerationIsByteIdentical) {
  write_dataset(PhantomSpec{.extent = 16}, FieldSpec{}, 2, 5, dir / "a");
  write_dataset(PhantomSpec{.extent = 16}, FieldSpec{}, 2, 5, dir / "b");
  for (const auto& e : std::filesystem::directory_iterator(dir / "a"))
    EXPECT_EQ(read_file(e.path()), read_file(dir / "b" / e.path().filename())) << e.path().filename();
}

TEST_F(DatasetFiles, TeacherProviders) {
  const auto manifest = write_dataset(PhantomSpec{.extent = 16}, FieldSpec{}, 2, 6, dir);
  const auto data = load_dataset(manifest);
  const auto gt = teacher_from_ground_truth(manifest);
  const auto files = teacher_from_files(manifest);
  ASSERT_EQ(gt->size(), 2u);
  ASSERT_EQ(files->size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_TRUE(bit_equal(gt->teacher(i).u(), data.pairs[i].ground_truth.u()));
    EXPECT_TRUE(bit_equal(files->teacher(i).u(), data.pairs[i].ground_truth.u()));
  }

  // An externally distilled field replaces the teacher of record 1.
  auto custom = manifest;
  const auto field = DisplacementField(random_tensor({3, 16, 16, 16}, 4));
  write_vol(dir / "distilled.vol", field);
  custom.records[1].teacher = "distilled.vol";
  EXPECT_TRUE(bit_equal(teacher_from_files(custom)->teacher(1).u(), field.u()));

  write_vol(dir / "small.vol", DisplacementField::zeros({8, 8, 8}));
  custom.records[1].teacher = "small.vol";
  try {
    teacher_from_files(custom);
    FAIL() << "expected an extent error";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
  }
  custom.records[1].teacher = "absent.vol";
  EXPECT_THROW(teacher_from_files(custom), IoError);
}

TEST_F(DatasetFiles, ManifestErrors) {
  EXPECT_THROW(read_manifest(dir / "none.json"), IoError);
  std::filesystem::create_directories(dir);
  write_file(dir / "bad.json", {'{', '}'});
  EXPECT_THROW(read_manifest(dir / "bad.json"), FormatError);
}

}  // namespace
}  // namespace aldk
