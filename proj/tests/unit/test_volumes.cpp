#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "rubikssl/errors.hpp"
#include "rubikssl/synthetic.hpp"
#include "rubikssl/volume.hpp"

using namespace rubikssl;
namespace fs = std::filesystem;

namespace {

Volume random_volume(Shape4 s, unsigned seed) {
  std::mt19937 g(seed);
  std::normal_distribution<float> d(0.0f, 3.0f);
  std::vector<float> v(static_cast<std::size_t>(s.numel()));
  for (auto& x : v) x = d(g);
  return Volume(s, v, {0.5, 1.0, 2.5});
}

// Raw RV01 writer so malformed files can be produced on purpose.
void write_raw(const fs::path& p, const std::string& header, std::size_t floats) {
  std::ofstream out(p, std::ios::binary);
  out << header << "\n";
  std::vector<float> zeros(floats, 1.0f);
  out.write(reinterpret_cast<const char*>(zeros.data()), static_cast<std::streamsize>(floats * sizeof(float)));
}

const char* kHeader = R"({"magic":"RV01","dtype":"f32","shape":[1,4,4,2],"spacing":[1,1,1],"modalities":["ct"]})";

}  // namespace

TEST_CASE("volume construction enforces its invariants") {
  CHECK_THROWS_AS(Volume({0, 2, 2, 2}, {}), ValidationError);
  CHECK_THROWS_AS(Volume({1, 2, 2, 2}, std::vector<float>(7)), ValidationError);
  CHECK_THROWS_AS(Volume({1, 1, 1, 1}, {0.0f}, {1.0, 0.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(Volume({2, 1, 1, 1}, {0.0f, 0.0f}, {1, 1, 1}, {"a"}), ValidationError);
  const Volume v({2, 1, 1, 1}, {1.0f, 2.0f});
  CHECK(v.modality_names() == std::vector<std::string>{"ch0", "ch1"});
}

TEST_CASE("RV01 round trip is bit exact") {
  oracle::ScopedDir dir("vol");
  for (unsigned seed = 0; seed < 5; ++seed) {
    const Volume v = random_volume({1 + seed % 3, 5, 3, 4}, seed);
    save_volume(v, dir.path / "v.rv01");
    const Volume back = load_volume(dir.path / "v.rv01");
    CHECK(back == v);
    CHECK(std::memcmp(back.data().data(), v.data().data(), v.data().size_bytes()) == 0);
  }
}

TEST_CASE("header with 32 payload floats loads as (1,4,4,2)") {
  oracle::ScopedDir dir("vol");
  write_raw(dir.path / "ok.rv01", kHeader, 32);
  const Volume v = load_volume(dir.path / "ok.rv01");
  CHECK(v.shape() == Shape4{1, 4, 4, 2});
  CHECK(v.modality_names().front() == "ct");
}

TEST_CASE("payload size mismatches are corruption errors") {
  oracle::ScopedDir dir("vol");
  write_raw(dir.path / "short.rv01", kHeader, 31);
  CHECK_THROWS_AS(load_volume(dir.path / "short.rv01"), CorruptionError);
  write_raw(dir.path / "long.rv01", kHeader, 33);
  CHECK_THROWS_AS(load_volume(dir.path / "long.rv01"), CorruptionError);
}

TEST_CASE("malformed headers are format errors") {
  oracle::ScopedDir dir("vol");
  write_raw(dir.path / "a.rv01", R"({"magic":"RV02","dtype":"f32","shape":[1,4,4,2],"spacing":[1,1,1]})", 32);
  CHECK_THROWS_AS(load_volume(dir.path / "a.rv01"), FormatError);
  write_raw(dir.path / "b.rv01", "not json", 32);
  CHECK_THROWS_AS(load_volume(dir.path / "b.rv01"), FormatError);
  write_raw(dir.path / "c.rv01", R"({"magic":"RV01","dtype":"f32","shape":[1,4,4],"spacing":[1,1,1]})", 32);
  CHECK_THROWS_AS(load_volume(dir.path / "c.rv01"), FormatError);
}

TEST_CASE("non-finite voxels are rejected on load, naming the index") {
  oracle::ScopedDir dir("vol");
  const fs::path p = dir.path / "nan.rv01";
  {
    std::ofstream out(p, std::ios::binary);
    out << kHeader << "\n";
    std::vector<float> v(32, 0.0f);
    v[1 * 8 + 2 * 2 + 1] = std::numeric_limits<float>::quiet_NaN();  // (0,1,2,1)
    out.write(reinterpret_cast<const char*>(v.data()), 32 * sizeof(float));
  }
  try {
    load_volume(p);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("(0,1,2,1)") != std::string::npos);
  }
}

TEST_CASE("saving NaN writes nothing") {
  oracle::ScopedDir dir("vol");
  std::vector<float> d(8, 1.0f);
  d[3] = std::numeric_limits<float>::quiet_NaN();
  const Volume v({1, 2, 2, 2}, d);
  CHECK_THROWS_AS(save_volume(v, dir.path / "x.rv01"), ValidationError);
  CHECK(fs::is_empty(dir.path));
}

TEST_CASE("a 1x1x1x1 zero volume has a 4 byte payload") {
  oracle::ScopedDir dir("vol");
  save_volume(Volume({1, 1, 1, 1}, {0.0f}), dir.path / "z.rv01");
  std::ifstream in(dir.path / "z.rv01", std::ios::binary);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind(R"({"magic":"RV01")", 0) == 0);
  std::string rest((std::istreambuf_iterator<char>(in)), {});
  CHECK(rest == std::string(4, '\0'));
}

TEST_CASE("mask round trip") {
  oracle::ScopedDir dir("vol");
  Mask m{3, 2, 2, {0, 1, 1, 0, 2, 0, 1, 1, 0, 0, 0, 1}};
  save_mask(m, dir.path / "m.rv01");
  CHECK(load_mask(dir.path / "m.rv01") == m);
  CHECK_THROWS_AS(load_volume(dir.path / "m.rv01"), FormatError);
}

TEST_CASE("normalize_intensity examples") {
  const Volume a = normalize_intensity(Volume({1, 3, 1, 1}, {0.0f, 2.0f, 4.0f}));
  CHECK(a.at(0, 0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(a.at(0, 1, 0, 0) == doctest::Approx(0.0));
  CHECK(a.at(0, 2, 0, 0) == doctest::Approx(1.0).epsilon(1e-7));
  const Volume c = normalize_intensity(Volume({1, 3, 1, 1}, {5.0f, 5.0f, 5.0f}));
  for (float x : c.data()) CHECK(x == 0.0f);
}

TEST_CASE("normalize_intensity stays in [-1, 1] with zero channel means") {
  for (unsigned seed = 0; seed < 20; ++seed) {
    const Volume v = random_volume({3, 4, 5, 3}, 100 + seed);
    for (const Volume& n : {normalize_intensity(v), normalize_intensity(normalize_intensity(v))}) {
      for (std::int64_t c = 0; c < 3; ++c) {
        double mean = 0;
        for (float x : n.channel(c)) {
          CHECK(x >= -1.0f);
          CHECK(x <= 1.0f);
          mean += x;
        }
        CHECK(std::abs(mean / static_cast<double>(n.shape().spatial())) < 1e-5);
      }
    }
  }
}

TEST_CASE("center_crop crops around the center and zero pads") {
  std::vector<float> d(4 * 4 * 1);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(i);
  const Volume v({1, 4, 4, 1}, d);
  const Volume c = center_crop(v, 2, 2, 1);
  CHECK(c.shape() == Shape4{1, 2, 2, 1});
  CHECK(c.at(0, 0, 0, 0) == v.at(0, 1, 1, 0));
  const Volume p = center_crop(v, 6, 4, 1);
  CHECK(p.at(0, 0, 0, 0) == 0.0f);
  CHECK(p.at(0, 1, 0, 0) == v.at(0, 0, 0, 0));
}

TEST_CASE("synthetic generator is deterministic and balanced") {
  const auto a = generate_synthetic_dataset(6, {1, 40, 36, 32}, 3, 11);
  const auto b = generate_synthetic_dataset(6, {1, 40, 36, 32}, 3, 11);
  const auto c = generate_synthetic_dataset(6, {1, 40, 36, 32}, 3, 12);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].volume == b[i].volume);
    CHECK(a[i].seg_mask == b[i].seg_mask);
    CHECK(a[i].class_label == b[i].class_label);
  }
  CHECK_FALSE(a[0].volume == c[0].volume);

  const SyntheticGenerator gen(100, {1, 32, 32, 32}, 2, 5);
  int ones = 0;
  for (int i = 0; i < 100; ++i) ones += gen.class_of(i);
  CHECK(ones >= 45);
  CHECK(ones <= 55);
}

TEST_CASE("synthetic masks are valid and non-empty") {
  const SyntheticGenerator gen(8, {2, 32, 40, 32}, 4, 9);
  for (int i = 0; i < 8; ++i) {
    const auto lv = gen.make(i);
    REQUIRE(lv.seg_mask);
    CHECK(lv.seg_mask->x == 32);
    CHECK(lv.seg_mask->z == 32);
    std::size_t fg = 0;
    for (auto l : lv.seg_mask->labels) {
      CHECK(l < 2);
      fg += l;
    }
    CHECK(fg > 0);
    CHECK(lv.class_label.value() >= 0);
    CHECK(lv.class_label.value() < 4);
    CHECK_FALSE(lv.volume.first_non_finite());
  }
}

TEST_CASE("synthetic generator rejects small extents") {
  CHECK_THROWS_AS(SyntheticGenerator(1, {1, 31, 64, 64}, 2, 0), ConfigError);
  CHECK_THROWS_AS(SyntheticGenerator(0, {1, 64, 64, 64}, 2, 0), ConfigError);
}

TEST_CASE("landmarks leave the lesions alone and share one layout") {
  SyntheticOptions with;
  with.landmarks = 8;
  const SyntheticGenerator plain(4, {1, 40, 40, 40}, 2, 21);
  const SyntheticGenerator marked(4, {1, 40, 40, 40}, 2, 21, with);

  std::vector<std::vector<float>> diffs;
  for (int i = 0; i < 4; ++i) {
    const auto a = plain.make(i), b = marked.make(i);
    CHECK(a.seg_mask == b.seg_mask);
    CHECK(a.class_label == b.class_label);
    std::vector<float> d(a.volume.data().size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = b.volume.data()[k] - a.volume.data()[k];
    diffs.push_back(std::move(d));
  }
  // Same anatomy up to jitter: landmark maps of different volumes correlate.
  auto corr = [](const std::vector<float>& u, const std::vector<float>& v) {
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      uv += double(u[k]) * v[k];
      uu += double(u[k]) * u[k];
      vv += double(v[k]) * v[k];
    }
    return uv / std::sqrt(uu * vv);
  };
  CHECK(corr(diffs[0], diffs[0]) == doctest::Approx(1.0));
  for (int i = 1; i < 4; ++i) CHECK(corr(diffs[0], diffs[static_cast<std::size_t>(i)]) > 0.5);
}

TEST_CASE("ramp_scale 0 removes the background ramp") {
  SyntheticOptions flat;
  flat.ramp_scale = 0.0;
  flat.blob_amplitude = 0.0;
  flat.noise_sigma = 0.0;
  const auto lv = SyntheticGenerator(1, {1, 32, 32, 32}, 2, 3, flat).make(0);
  float peak = 0.0f;
  for (float v : lv.volume.data()) peak = std::max(peak, std::abs(v));
  CHECK(peak == 0.0f);
}
