#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace vpp {

// One vowel as listed by one language: an IPA glyph sequence (NFC-normalized)
// and its measured formants in Hz. F1 is always present; F2..F5 may be
// missing in the source material.
struct VowelRecord {
  std::string ipa;
  std::vector<double> formants;
};

// One corpus line: a language and its vowels with per-language measurements.
// A language may be listed more than once in a raw corpus (different studies);
// dedupe_languages() collapses that.
struct InventoryListing {
  std::string language_id;
  std::vector<VowelRecord> vowels;
};

// A language's inventory as sorted indices into a VowelTable.
struct Inventory {
  std::string language_id;
  std::vector<int> vowels;
};

// The vowel universe: every distinct IPA symbol in the corpus, sorted, with
// cross-language mean (F1, F2) and the centered/scaled feature vectors the
// models consume. Column i of mean_formants/features belongs to symbols[i].
struct VowelTable {
  std::vector<std::string> symbols;
  Eigen::MatrixXd mean_formants;  // k x N, Hz
  Eigen::MatrixXd features;       // k x N, (Hz - column mean) / 1000

  int size() const { return static_cast<int>(symbols.size()); }
  int feature_dim() const { return static_cast<int>(features.rows()); }
  // -1 when the symbol is not in the universe
  int index_of(const std::string& nfc_symbol) const;
};

// Balanced random K-fold split over languages. The dev fold for test fold t
// is (t + 1) mod K; the remaining K-2 folds train.
struct FoldAssignment {
  std::map<std::string, int> fold_of_language;
  int num_folds = 0;
  std::uint64_t seed = 0;

  int dev_fold(int test_fold) const { return (test_fold + 1) % num_folds; }
  std::vector<std::string> languages_in_fold(int fold) const;
};

// Canonical composition of a UTF-8 string (IPA glyphs routinely mix
// precomposed and combining-mark encodings of the same vowel).
std::string nfc_normalize(const std::string& utf8);

// JSON-lines corpus: {"language": str, "vowels": [{"ipa": str, "formants": [..]}]}
// Blank lines are skipped. Malformed lines raise ParseError with the line
// number; a duplicate vowel within one listing is an error.
std::vector<InventoryListing> parse_corpus(std::istream& in);
std::vector<InventoryListing> parse_corpus_file(const std::string& path);

// Inverse of parse_corpus, one listing per line (round-trips exactly).
std::string serialize_corpus(const std::vector<InventoryListing>& listings);

// Keeps exactly one listing per language_id, chosen uniformly at random.
std::vector<InventoryListing> dedupe_languages(
    const std::vector<InventoryListing>& listings, std::uint64_t seed);

// Builds the universe and unweighted per-symbol means of (F1, F2) over all
// languages listing the symbol with both formants. A symbol that never
// carries usable (F1, F2) is an error naming the symbol. Features are left
// empty until preprocess_features().
VowelTable build_vowel_table(const std::vector<InventoryListing>& listings);

// features = (mean_formants - per-row mean) / 1000
void preprocess_features(VowelTable& table);

// Maps listings onto table indices (sorted, per-language).
std::vector<Inventory> to_inventories(
    const std::vector<InventoryListing>& listings, const VowelTable& table);

// K-fold partition, balanced to within one language, deterministic in seed.
FoldAssignment make_folds(const std::vector<Inventory>& inventories, int num_folds,
                          std::uint64_t seed);

// TSV export: symbol, F1_mean, F2_mean, feat1, feat2
std::string vowel_table_tsv(const VowelTable& table);

}  // namespace vpp
