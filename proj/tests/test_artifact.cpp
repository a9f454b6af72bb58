#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "hlglm/artifact.hpp"
#include "hlglm/simulate.hpp"
#include "helpers.hpp"

using namespace hlglm;
using testutil::thrown_code;

namespace {

std::filesystem::path scratch_dir() {
  auto p = std::filesystem::temp_directory_path() / "hlglm_artifact_tests";
  std::filesystem::create_directories(p);
  return p;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// rewrite the trailing checksum after an in-place patch
void reseal(std::vector<char>& bytes) {
  REQUIRE(bytes.size() > 8);
  std::uint64_t sum = fnv1a64(bytes.data(), bytes.size() - 8);
  for (int i = 0; i < 8; ++i)
    bytes[bytes.size() - 8 + static_cast<std::size_t>(i)] =
        static_cast<char>((sum >> (8 * i)) & 0xff);
}

ModelArtifact fitted_artifact() {
  FamilySpec fam{Family::gaussian, 1.0};
  SyntheticData sim = gen_hierarchical(2, 3, 300, 0.3, 1.0, 2, fam, 51);
  FitConfig cfg;
  cfg.truncation = 1;
  ModelArtifact art;
  art.model = fit_adaptive(sim.data, sim.truth.lattice, fam, cfg);
  art.zscore = fit_zscore(sim.data.X);
  art.schema.response = "y";
  art.schema.features = {"x1", "x2"};
  art.config_hash = fnv1a_hex("test-config");
  art.tool = "hlglm/test";
  return art;
}

}  // namespace

TEST_CASE("fnv1a64 reproduces the published test vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ull);
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
  // chained calls equal one pass over the concatenation
  CHECK(fnv1a64("bar", 3, fnv1a64("foo", 3)) == fnv1a64("foobar", 6));
}

TEST_CASE("lattice json round trip keeps dim structure") {
  std::vector<LatticeDim> dims;
  dims.push_back(build_categorical_dim("site", {"a", "b", "c"}));
  dims.push_back(build_explicit_bins("age", {30.0, 50.0}));
  LatticeSpec spec((std::vector<LatticeDim>(dims)));
  LatticeSpec back = lattice_from_json(lattice_to_json(spec));
  REQUIRE(back.dim_count() == 2);
  CHECK(back.dims()[0].name == "site");
  CHECK(back.dims()[0].labels == dims[0].labels);
  CHECK(back.dims()[1].edges == dims[1].edges);
  CHECK(back.cell_count() == 9);
}

TEST_CASE("model artifacts survive a save/load round trip exactly") {
  auto dir = scratch_dir();
  auto path = (dir / "model.hlgm").string();
  ModelArtifact art = fitted_artifact();
  save_model(art, path);
  ModelArtifact back = load_model(path);

  CHECK(back.version == kArtifactVersion);
  CHECK(back.tool == art.tool);
  CHECK(back.config_hash == art.config_hash);
  CHECK(back.schema.response == "y");
  CHECK(back.schema.features == art.schema.features);
  CHECK(back.zscore.mean == art.zscore.mean);
  CHECK(back.zscore.sd == art.zscore.sd);
  CHECK(back.model.family.family == Family::gaussian);
  CHECK(back.model.family.dispersion == art.model.family.dispersion);
  CHECK(back.model.fisher.global_wbar == art.model.fisher.global_wbar);
  CHECK(back.model.diag.final_loss == art.model.diag.final_loss);

  // every tensor and every penalty scale is bit-identical, infinities
  // included (the order-0 reference tau is finite but the free plan case
  // is covered below)
  REQUIRE(back.model.intercept.component_count() ==
          art.model.intercept.component_count());
  for (int i = 0; i < art.model.intercept.component_count(); ++i)
    CHECK(back.model.intercept.tensor(i).cwiseEqual(
        art.model.intercept.tensor(i)).all());
  for (std::size_t i = 0; i < art.model.plan.intercept.comps.size(); ++i) {
    const auto& a = art.model.plan.intercept.comps[i].tau;
    const auto& b = back.model.plan.intercept.comps[i].tau;
    REQUIRE(a.size() == b.size());
    for (Eigen::Index c = 0; c < a.size(); ++c)
      CHECK(std::memcmp(&a[c], &b[c], sizeof(double)) == 0);
  }

  // predictions from the reloaded model match to the bit
  FamilySpec fam{Family::gaussian, 1.0};
  SyntheticData fresh = gen_hierarchical(2, 3, 64, 0.3, 1.0, 2, fam, 99);
  Eigen::VectorXd ref = predict(art.model, fresh.data).eta;
  Eigen::VectorXd got = predict(back.model, fresh.data).eta;
  CHECK(ref.cwiseEqual(got).all());
}

TEST_CASE("infinite penalty scales persist through the binary payload") {
  auto dir = scratch_dir();
  auto path = (dir / "free.hlgm").string();
  std::vector<int> levels{2};
  LatticeSpec spec = testutil::grid(levels);
  Eigen::VectorXd y(4);
  y << 0.1, -0.2, 0.3, 0.0;
  Dataset data = testutil::dataset_on(spec, {0, 1, 0, 1}, y);
  FitConfig cfg;
  cfg.truncation = 1;
  auto [i0, c0] = make_shapes(spec, 0, cfg);
  RegularizationPlan plan = build_free_plan(i0, c0);
  FamilySpec fam{Family::gaussian, 1.0};
  ModelArtifact art;
  art.model = map_fit(data, spec, fam, plan, cfg, std::move(i0), std::move(c0));
  save_model(art, path);
  ModelArtifact back = load_model(path);
  CHECK(std::isinf(back.model.plan.intercept.comps[0].tau[0]));
  CHECK(std::isinf(back.model.plan.intercept.comps[1].tau[1]));
}

TEST_CASE("the same artifact saves to the same bytes") {
  auto dir = scratch_dir();
  ModelArtifact art = fitted_artifact();
  auto p1 = (dir / "one.hlgm").string();
  auto p2 = (dir / "two.hlgm").string();
  save_model(art, p1);
  save_model(art, p2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("corruption and truncation are checksum errors") {
  auto dir = scratch_dir();
  auto path = dir / "victim.hlgm";
  ModelArtifact art = fitted_artifact();
  save_model(art, path.string());
  std::vector<char> bytes = slurp(path);

  // flip one payload byte
  std::vector<char> flipped = bytes;
  flipped[bytes.size() / 2] = static_cast<char>(flipped[bytes.size() / 2] ^ 0x40);
  auto flipped_path = dir / "flipped.hlgm";
  spit(flipped_path, flipped);
  CHECK(thrown_code([&] { load_model(flipped_path.string()); }) ==
        ErrorCode::checksum_error);

  // drop the tail
  std::vector<char> cut(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 3));
  auto cut_path = dir / "cut.hlgm";
  spit(cut_path, cut);
  CHECK(thrown_code([&] { load_model(cut_path.string()); }) ==
        ErrorCode::checksum_error);

  // not an artifact at all
  auto text_path = dir / "readme.txt";
  std::ofstream(text_path) << "just some text, long enough to have a tail\n";
  CHECK(thrown_code([&] { load_model(text_path.string()); }) ==
        ErrorCode::checksum_error);

  auto missing = dir / "never_written.hlgm";
  CHECK(thrown_code([&] { load_model(missing.string()); }) != ErrorCode::ok);
}

TEST_CASE("version and magic mismatches are structural errors") {
  auto dir = scratch_dir();
  auto path = dir / "versioned.hlgm";
  ModelArtifact art = fitted_artifact();
  save_model(art, path.string());
  std::vector<char> bytes = slurp(path);

  // bump the version field (offset 4, little endian) and reseal
  std::vector<char> v2 = bytes;
  v2[4] = 2;
  reseal(v2);
  auto v2_path = dir / "v2.hlgm";
  spit(v2_path, v2);
  try {
    load_model(v2_path.string());
    FAIL("expected an unsupported_version error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unsupported_version);
    std::string what = e.what();
    CHECK(what.find('2') != std::string::npos);
    CHECK(what.find('1') != std::string::npos);
  }

  // valid checksum but the wrong magic
  std::vector<char> wrong = bytes;
  wrong[0] = 'X';
  reseal(wrong);
  auto wrong_path = dir / "magic.hlgm";
  spit(wrong_path, wrong);
  CHECK(thrown_code([&] { load_model(wrong_path.string()); }) ==
        ErrorCode::ingest_error);
}
