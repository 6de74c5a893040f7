#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fedpd/data_io.hpp"
#include "fedpd/error.hpp"

using namespace fedpd;

namespace {

data::SiteSpec small_spec() {
  data::SiteSpec s;
  s.site_id = "alpha";
  s.n_pd = 50;
  s.n_hc = 50;
  s.embedding_dim = 8;
  s.min_frames = 5;
  s.max_frames = 12;
  s.class_separation = 1.0;
  s.seed = 321;
  return s;
}

DataErrorCode parse_error_code(std::string_view bytes) {
  try {
    data::parse_corpus(bytes);
  } catch (const DataError& e) {
    return e.code();
  }
  FAIL("corpus parsed without error");
  return DataErrorCode::kInvalid;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fedpd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string header(std::size_t dim) {
  std::ostringstream out;
  out << "subject_id,site_id,label";
  const char* names[] = {"mean", "std", "skew", "kurt", "min", "max"};
  for (const char* n : names) {
    for (std::size_t d = 0; d < dim; ++d) out << ',' << n << '_' << d;
  }
  return out.str();
}

std::string row(const std::string& subject, const std::string& site, int label, std::size_t values) {
  std::ostringstream out;
  out << subject << ',' << site << ',' << label;
  for (std::size_t i = 0; i < values; ++i) out << ',' << (0.25 * static_cast<double>(i) - 1.0);
  return out.str();
}

}  // namespace

TEST_CASE("synthetic site has the requested subjects and shapes") {
  const auto corpus = data::generate_synthetic(small_spec());
  REQUIRE(corpus.records.size() == 100);
  CHECK(corpus.embedding_dim == 8);
  int pd = 0;
  std::set<std::string> subjects;
  for (const auto& r : corpus.records) {
    pd += r.label;
    subjects.insert(r.subject_id);
    CHECK(r.site_id == "alpha");
    CHECK(r.sequence.dim() == 8);
    CHECK(r.sequence.length() >= 5);
    CHECK(r.sequence.length() <= 12);
    CHECK(r.sequence.frames.allFinite());
  }
  CHECK(pd == 50);
  CHECK(subjects.size() == 100);
}

TEST_CASE("generation is deterministic in the seed") {
  auto spec = small_spec();
  CHECK(data::generate_synthetic(spec) == data::generate_synthetic(spec));
  auto other = spec;
  other.seed = 322;
  CHECK_FALSE(data::generate_synthetic(spec) == data::generate_synthetic(other));
}

TEST_CASE("class means differ along the shared direction") {
  auto spec = small_spec();
  spec.class_separation = 4.0;
  spec.noise_scale = 0.1;
  spec.site_shift = 0.0;
  const auto corpus = data::generate_synthetic(spec);
  Eigen::RowVectorXd pd = Eigen::RowVectorXd::Zero(8), hc = Eigen::RowVectorXd::Zero(8);
  for (const auto& r : corpus.records) {
    (r.label == 1 ? pd : hc) += r.sequence.frames.colwise().mean() / 50.0;
  }
  CHECK((pd - hc).norm() == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("invalid site specs are configuration errors") {
  auto spec = small_spec();
  spec.min_frames = 20;
  CHECK_THROWS_AS(data::generate_synthetic(spec), ConfigError);
  spec = small_spec();
  spec.embedding_dim = 0;
  CHECK_THROWS_AS(data::generate_synthetic(spec), ConfigError);
  spec = small_spec();
  spec.n_pd = 3;
  CHECK_NOTHROW(spec.validate());
  CHECK_THROWS_AS(spec.validate(10), ConfigError);
}

TEST_CASE("preset has three sites sharing one class direction") {
  const auto sites = data::three_site_preset(7, 16);
  REQUIRE(sites.size() == 3);
  CHECK(sites[0].site_id == "spanish");
  CHECK(sites[1].site_id == "german");
  CHECK(sites[2].site_id == "czech");
  CHECK(sites[0].n_pd == 50);
  CHECK(sites[1].n_pd == 88);
  CHECK(sites[1].n_hc == 88);
  CHECK(sites[2].n_hc == 50);
  for (const auto& s : sites) {
    CHECK(s.embedding_dim == 16);
    CHECK(s.signal_seed == sites[0].signal_seed);
  }
  CHECK(sites[0].seed != sites[1].seed);
}

TEST_CASE("corpus round trip is bit exact") {
  const auto corpus = data::generate_synthetic(small_spec());
  const std::string bytes = data::serialize_corpus(corpus);
  CHECK(bytes.substr(0, 4) == "FPSC");
  CHECK(data::parse_corpus(bytes) == corpus);

  const auto dir = scratch_dir("roundtrip");
  data::write_corpus(dir / "a.fpsc", corpus);
  CHECK(data::read_corpus(dir / "a.fpsc") == corpus);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corpus reader reports each defect distinctly") {
  auto spec = small_spec();
  spec.n_pd = 2;
  spec.n_hc = 2;
  const auto corpus = data::generate_synthetic(spec);
  const std::string good = data::serialize_corpus(corpus);

  CHECK(parse_error_code(good.substr(0, good.size() - 3)) == DataErrorCode::kTruncatedPayload);
  CHECK(parse_error_code(good.substr(0, 9)) == DataErrorCode::kTruncatedPayload);
  CHECK(parse_error_code(good + "x") == DataErrorCode::kTrailingBytes);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(parse_error_code(bad_magic) == DataErrorCode::kBadMagic);
  CHECK(parse_error_code("") == DataErrorCode::kBadMagic);

  std::string bad_version = good;
  bad_version[4] = 2;
  CHECK(parse_error_code(bad_version) == DataErrorCode::kUnsupportedVersion);

  auto with_nan = corpus;
  with_nan.records[1].sequence.frames(0, 3) = std::numeric_limits<double>::quiet_NaN();
  CHECK(parse_error_code(data::serialize_corpus(with_nan)) == DataErrorCode::kNonFinite);

  try {
    data::parse_corpus(bad_version);
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("unsupported version") != std::string::npos);
  }
  CHECK_THROWS_AS(data::read_corpus("/nonexistent/file.fpsc"), DataError);
}

TEST_CASE("feature table import") {
  const std::size_t dim = 768;
  std::string text = header(dim) + "\n";
  text += row("s1", "spanish", 1, 6 * dim) + "\n";
  text += row("s2", "spanish", 0, 6 * dim) + "\n";
  text += row("s3", "german", 1, 6 * dim) + "\n";
  const auto set = data::parse_features(text, dim);
  REQUIRE(set.size() == 3);
  CHECK(set[0].values.size() == 4608);
  CHECK(set[1].label == 0);
  CHECK(set[2].site_id == "german");
  CHECK(set[0].values[5] == 0.25);

  // Width inferred from the header when not given.
  CHECK(data::parse_features(text).size() == 3);
}

TEST_CASE("feature import names the offending row") {
  const std::size_t dim = 768;
  std::string text = header(dim) + "\n" + row("s1", "x", 1, 4608) + "\n" + row("s2", "x", 0, 4607) + "\n";
  try {
    data::parse_features(text, dim);
    FAIL("expected a width error");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrorCode::kWidthMismatch);
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }

  const std::string dup = header(2) + "\n" + row("s1", "x", 1, 12) + "\n" + row("s1", "x", 0, 12) + "\n";
  try {
    data::parse_features(dup);
    FAIL("expected a duplicate error");
  } catch (const DataError& e) {
    CHECK(e.code() == DataErrorCode::kDuplicateSubject);
  }
  // Same subject id at another site is a different subject.
  const std::string two_sites =
      header(2) + "\n" + row("s1", "x", 1, 12) + "\n" + row("s1", "y", 0, 12) + "\n";
  CHECK(data::parse_features(two_sites).size() == 2);

  CHECK_THROWS_AS(data::parse_features(header(2) + "\n" + row("s1", "x", 2, 12)), DataError);
  CHECK_THROWS_AS(data::parse_features("a,b,c,d\n"), DataError);
  CHECK_THROWS_AS(data::parse_features(header(2), 3), DataError);
  std::string nan_row = header(1) + "\ns1,x,1,nan,0,0,0,0,0\n";
  CHECK_THROWS_AS(data::parse_features(nan_row), DataError);
  CHECK_THROWS_AS(data::parse_features(header(1) + "\ns1,x,1,abc,0,0,0,0,0\n"), DataError);
}

TEST_CASE("feature export round trips exactly") {
  const auto corpus = data::generate_synthetic(small_spec());
  const auto set = features::pool_corpus(corpus.records);
  const auto dir = scratch_dir("export");
  data::export_features(dir / "f.csv", set);
  const auto back = data::import_features(dir / "f.csv", 8);
  REQUIRE(back.size() == set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(back[i].values == set[i].values);
    CHECK(back[i].subject_id == set[i].subject_id);
    CHECK(back[i].label == set[i].label);
  }
  std::ifstream in(dir / "f.csv");
  std::string first;
  std::getline(in, first);
  CHECK(first.rfind("subject_id,site_id,label,mean_0,mean_1", 0) == 0);
  std::filesystem::remove_all(dir);
}
