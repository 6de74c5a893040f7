#include "fedpd/data_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include "fedpd/error.hpp"
#include "fedpd/random.hpp"

namespace fedpd::data {

namespace {

constexpr std::uint64_t kOffsetStream = 0x0ff5e7;

nn::Vector random_unit_vector(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Vector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

std::string subject_name(const std::string& site, const char* cls, std::size_t index) {
  std::ostringstream os;
  os << site << '-' << cls << '-';
  os.width(3);
  os.fill('0');
  os << index;
  return os.str();
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { out_.append(s); }
  void str(const std::string& s) {
    if (s.size() > UINT32_MAX) throw DataError(DataErrorCode::kInvalid, "identifier too long");
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return std::string(bytes(u32())); }
  std::size_t remaining() const { return data_.size() - pos_; }
  void need(std::size_t n) const {
    if (remaining() < n) {
      std::ostringstream os;
      os << "needed " << n << " bytes at offset " << pos_ << ", " << remaining() << " left";
      throw DataError(DataErrorCode::kTruncatedPayload, os.str());
    }
  }

 private:
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

const char* statistic_name(std::size_t s) {
  static constexpr const char* kNames[] = {"mean", "std", "skew", "kurt", "min", "max"};
  return kNames[s];
}

}  // namespace

void SiteSpec::validate(std::size_t folds) const {
  auto fail = [&](const std::string& m) { throw ConfigError("site '" + site_id + "': " + m); };
  if (site_id.empty()) throw ConfigError("site_id must not be empty");
  if (n_pd + n_hc < 2) fail("needs at least 2 subjects");
  if (embedding_dim == 0) fail("embedding_dim must be positive");
  if (min_frames < 2) fail("min_frames must be >= 2");
  if (max_frames < min_frames) fail("max_frames must be >= min_frames");
  if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
    fail("class_separation must be finite and >= 0");
  }
  if (!(site_shift >= 0.0) || !std::isfinite(site_shift)) fail("site_shift must be finite and >= 0");
  if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) fail("noise_scale must be finite and > 0");
  if (folds > 0 && (n_pd < folds || n_hc < folds)) {
    fail("each class needs at least " + std::to_string(folds) + " subjects for " +
         std::to_string(folds) + "-fold cross-validation");
  }
}

bool operator==(const Corpus& a, const Corpus& b) {
  if (a.embedding_dim != b.embedding_dim || a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& x = a.records[i];
    const auto& y = b.records[i];
    if (x.label != y.label || x.subject_id != y.subject_id || x.site_id != y.site_id ||
        x.sequence.recording_id != y.sequence.recording_id ||
        x.sequence.frames.rows() != y.sequence.frames.rows() ||
        x.sequence.frames.cols() != y.sequence.frames.cols() ||
        std::memcmp(x.sequence.frames.data(), y.sequence.frames.data(),
                    sizeof(double) * static_cast<std::size_t>(x.sequence.frames.size())) != 0) {
      return false;
    }
  }
  return true;
}

Corpus generate_synthetic(const SiteSpec& spec) {
  spec.validate();
  Corpus corpus;
  corpus.embedding_dim = static_cast<std::uint32_t>(spec.embedding_dim);

  Rng signal_rng(derive_seed(spec.signal_seed, {spec.embedding_dim}));
  const nn::Vector direction = random_unit_vector(spec.embedding_dim, signal_rng);

  Rng rng(spec.seed);
  Rng offset_rng(derive_seed(spec.seed, {kOffsetStream}));
  const nn::Vector offset = spec.site_shift * random_unit_vector(spec.embedding_dim, offset_rng);

  std::uniform_int_distribution<std::size_t> frames_dist(spec.min_frames, spec.max_frames);
  std::normal_distribution<double> noise(0.0, spec.noise_scale);

  const auto dim = static_cast<Eigen::Index>(spec.embedding_dim);
  auto emit = [&](int label, std::size_t count, const char* cls) {
    const double sign = label == 1 ? 0.5 : -0.5;
    const Eigen::RowVectorXd centre =
        (sign * spec.class_separation * direction + offset).transpose();
    for (std::size_t i = 0; i < count; ++i) {
      features::Recording rec;
      rec.label = label;
      rec.site_id = spec.site_id;
      rec.subject_id = subject_name(spec.site_id, cls, i);
      rec.sequence.recording_id = rec.subject_id;
      const auto t = static_cast<Eigen::Index>(frames_dist(rng));
      rec.sequence.frames.resize(t, dim);
      for (Eigen::Index r = 0; r < t; ++r) {
        for (Eigen::Index c = 0; c < dim; ++c) rec.sequence.frames(r, c) = centre(c) + noise(rng);
      }
      corpus.records.push_back(std::move(rec));
    }
  };
  emit(1, spec.n_pd, "PD");
  emit(0, spec.n_hc, "HC");
  return corpus;
}

std::vector<SiteSpec> three_site_preset(std::uint64_t seed, std::size_t embedding_dim) {
  struct Cohort {
    const char* id;
    std::size_t per_class;
    double noise;
  };
  static constexpr Cohort kCohorts[] = {{"spanish", 50, 1.0}, {"german", 88, 1.1}, {"czech", 50, 0.9}};
  const std::uint64_t signal = derive_seed(seed, {fnv1a("signal")});
  std::vector<SiteSpec> sites;
  for (const Cohort& c : kCohorts) {
    SiteSpec s;
    s.site_id = c.id;
    s.n_pd = c.per_class;
    s.n_hc = c.per_class;
    s.embedding_dim = embedding_dim;
    s.min_frames = 40;
    s.max_frames = 80;
    s.class_separation = 0.7;
    s.site_shift = 1.0;
    s.noise_scale = c.noise;
    s.seed = derive_seed(seed, {fnv1a(c.id)});
    s.signal_seed = signal;
    sites.push_back(s);
  }
  return sites;
}

std::string serialize_corpus(const Corpus& corpus) {
  Writer w;
  w.bytes(std::string_view(kCorpusMagic, 4));
  w.u16(kCorpusVersion);
  w.u32(corpus.embedding_dim);
  w.u32(static_cast<std::uint32_t>(corpus.records.size()));
  for (const auto& rec : corpus.records) {
    if (rec.sequence.frames.cols() != static_cast<Eigen::Index>(corpus.embedding_dim)) {
      throw ShapeError("record '" + rec.subject_id + "' width differs from corpus embedding_dim");
    }
    w.str(rec.subject_id);
    w.str(rec.site_id);
    w.u8(static_cast<std::uint8_t>(rec.label));
    w.u32(static_cast<std::uint32_t>(rec.sequence.frames.rows()));
    const double* p = rec.sequence.frames.data();
    for (Eigen::Index i = 0; i < rec.sequence.frames.size(); ++i) w.f64(p[i]);
  }
  return w.take();
}

Corpus parse_corpus(std::string_view bytes) {
  Reader r(bytes);
  if (r.remaining() < 4 || std::memcmp(bytes.data(), kCorpusMagic, 4) != 0) {
    throw DataError(DataErrorCode::kBadMagic, "not a corpus file");
  }
  r.bytes(4);
  const std::uint16_t version = r.u16();
  if (version != kCorpusVersion) {
    throw DataError(DataErrorCode::kUnsupportedVersion, "corpus version " + std::to_string(version));
  }
  Corpus corpus;
  corpus.embedding_dim = r.u32();
  const std::uint32_t count = r.u32();
  if (corpus.embedding_dim == 0) throw DataError(DataErrorCode::kInvalid, "embedding_dim is 0");
  for (std::uint32_t i = 0; i < count; ++i) {
    features::Recording rec;
    rec.subject_id = r.str();
    rec.site_id = r.str();
    const std::uint8_t label = r.u8();
    if (label > 1) {
      throw DataError(DataErrorCode::kBadLabel,
                      "record " + std::to_string(i) + " has label " + std::to_string(label));
    }
    rec.label = label;
    const std::uint32_t t = r.u32();
    if (t == 0) throw DataError(DataErrorCode::kEmptySequence, "record " + std::to_string(i));
    const std::size_t values = static_cast<std::size_t>(t) * corpus.embedding_dim;
    r.need(values * sizeof(double));
    rec.sequence.recording_id = rec.subject_id;
    rec.sequence.frames.resize(t, corpus.embedding_dim);
    double* out = rec.sequence.frames.data();
    for (std::size_t k = 0; k < values; ++k) {
      out[k] = r.f64();
      if (!std::isfinite(out[k])) {
        throw DataError(DataErrorCode::kNonFinite, "record '" + rec.subject_id + "'");
      }
    }
    corpus.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) {
    throw DataError(DataErrorCode::kTrailingBytes,
                    std::to_string(r.remaining()) + " bytes after the declared records");
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  const std::string bytes = serialize_corpus(corpus);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(DataErrorCode::kIo, "write failed for '" + path.string() + "'");
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorCode::kIo, "cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_corpus(bytes);
  } catch (const DataError& e) {
    throw DataError(e.code(), path.string() + ": " + e.what());
  }
}

features::FeatureSet parse_features(std::string_view text, std::optional<std::size_t> expected_dim) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  std::size_t line_no = 0;
  while (line_no < lines.size() && trim(lines[line_no]).empty()) ++line_no;
  if (line_no == lines.size()) throw DataError(DataErrorCode::kInvalid, "missing header row");

  const auto header = split_commas(trim(lines[line_no]));
  if (header.size() < 4 || trim(header[0]) != "subject_id" || trim(header[1]) != "site_id" ||
      trim(header[2]) != "label") {
    throw DataError(DataErrorCode::kInvalid,
                    "header must start with subject_id,site_id,label followed by value columns");
  }
  const std::size_t width = header.size() - 3;
  if (expected_dim) {
    if (width != features::kStatisticCount * *expected_dim) {
      throw DataError(DataErrorCode::kWidthMismatch,
                      "header declares " + std::to_string(width) + " values, expected " +
                          std::to_string(features::kStatisticCount * *expected_dim));
    }
  } else if (width % features::kStatisticCount != 0) {
    throw DataError(DataErrorCode::kWidthMismatch,
                    "header declares " + std::to_string(width) + " values, not a multiple of 6");
  }

  features::FeatureSet out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = line_no + 1; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const std::string row = "row " + std::to_string(i + 1);
    const auto cells = split_commas(line);
    if (cells.size() != width + 3) {
      throw DataError(DataErrorCode::kWidthMismatch,
                      row + " has " + std::to_string(cells.size() - std::min<std::size_t>(cells.size(), 3)) +
                          " values, expected " + std::to_string(width));
    }
    features::FeatureVector fv;
    fv.subject_id = std::string(trim(cells[0]));
    fv.site_id = std::string(trim(cells[1]));
    const auto label = trim(cells[2]);
    if (label == "0") {
      fv.label = 0;
    } else if (label == "1") {
      fv.label = 1;
    } else {
      throw DataError(DataErrorCode::kBadLabel, row + " label '" + std::string(label) + "'");
    }
    if (!seen.emplace(fv.subject_id, fv.site_id).second) {
      throw DataError(DataErrorCode::kDuplicateSubject,
                      row + " repeats subject '" + fv.subject_id + "' at site '" + fv.site_id + "'");
    }
    fv.values.resize(width);
    for (std::size_t c = 0; c < width; ++c) {
      const auto cell = trim(cells[c + 3]);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw DataError(DataErrorCode::kInvalid,
                        row + " column " + std::to_string(c + 4) + " is not a number");
      }
      if (!std::isfinite(v)) {
        throw DataError(DataErrorCode::kNonFinite, row + " column " + std::to_string(c + 4));
      }
      fv.values[c] = v;
    }
    out.push_back(std::move(fv));
  }
  return out;
}

features::FeatureSet import_features(const std::filesystem::path& path,
                                     std::optional<std::size_t> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorCode::kIo, "cannot open '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_features(text, expected_dim);
  } catch (const DataError& e) {
    throw DataError(e.code(), path.string() + ": " + e.what());
  }
}

void export_features(const std::filesystem::path& path, const features::FeatureSet& samples) {
  if (samples.empty()) throw DataError(DataErrorCode::kInvalid, "no feature vectors to export");
  const std::size_t width = samples.front().values.size();
  if (width % features::kStatisticCount != 0) {
    throw ShapeError("feature width " + std::to_string(width) + " is not a multiple of 6");
  }
  const std::size_t dim = width / features::kStatisticCount;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << "subject_id,site_id,label";
  for (std::size_t s = 0; s < features::kStatisticCount; ++s) {
    for (std::size_t d = 0; d < dim; ++d) out << ',' << statistic_name(s) << '_' << d;
  }
  out << '\n';
  for (const auto& fv : samples) {
    if (fv.values.size() != width) throw ShapeError("feature vectors differ in width");
    out << fv.subject_id << ',' << fv.site_id << ',' << fv.label;
    for (double v : fv.values) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw DataError(DataErrorCode::kIo, "write failed for '" + path.string() + "'");
}

}  // namespace fedpd::data
