#pragma once

// Corpus files, feature-table import/export and the synthetic multi-site
// generator.
//
// Corpus binary layout (all integers little-endian, floats IEEE-754 binary64
// little-endian):
//
//   "FPSC" | u16 version (=1) | u32 embedding_dim | u32 record_count
//   per record:
//     u32 len | subject_id bytes | u32 len | site_id bytes | u8 label |
//     u32 frame_count T | T * embedding_dim f64 values (row-major)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedpd/features.hpp"

namespace fedpd::data {

inline constexpr char kCorpusMagic[4] = {'F', 'P', 'S', 'C'};
inline constexpr std::uint16_t kCorpusVersion = 1;

struct SiteSpec {
  std::string site_id;
  std::size_t n_pd = 50;
  std::size_t n_hc = 50;
  std::size_t embedding_dim = features::kDefaultEmbeddingDim;
  std::size_t min_frames = 40;
  std::size_t max_frames = 80;
  /// Distance between the PD and HC frame means along the shared class
  /// direction.
  double class_separation = 1.0;
  /// Norm of the per-site offset added to every frame of the site.
  double site_shift = 1.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 0;
  /// Seeds the class direction. Sites that model the same pathology must
  /// share it.
  std::uint64_t signal_seed = 0x5eed;

  /// Throws ConfigError. When folds > 0, each class must hold at least
  /// `folds` subjects.
  void validate(std::size_t folds = 0) const;
};

struct Corpus {
  std::uint32_t embedding_dim = 0;
  std::vector<features::Recording> records;
};

bool operator==(const Corpus& a, const Corpus& b);

/// Deterministic in the spec. PD subjects are emitted first, then HC.
Corpus generate_synthetic(const SiteSpec& spec);

/// Three sites with 50/50, 88/88 and 50/50 subjects, differing site offsets
/// and noise levels, all sharing one class direction. class_separation is
/// tuned so single-site training lands near 75% accuracy.
std::vector<SiteSpec> three_site_preset(std::uint64_t seed,
                                        std::size_t embedding_dim = features::kDefaultEmbeddingDim);

std::string serialize_corpus(const Corpus& corpus);
/// Throws DataError with kBadMagic, kUnsupportedVersion, kTruncatedPayload,
/// kTrailingBytes, kNonFinite or kBadLabel.
Corpus parse_corpus(std::string_view bytes);

void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& path);

/// Comma-delimited table with a header row:
///   subject_id,site_id,label,<6*D value columns>
/// When expected_dim is empty, D is inferred from the header.
features::FeatureSet import_features(const std::filesystem::path& path,
                                     std::optional<std::size_t> expected_dim = std::nullopt);
features::FeatureSet parse_features(std::string_view text,
                                    std::optional<std::size_t> expected_dim = std::nullopt);
void export_features(const std::filesystem::path& path, const features::FeatureSet& samples);

}  // namespace fedpd::data
