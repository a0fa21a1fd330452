#include "vpp/corpus.hpp"

#include <unicode/unorm2.h>
#include <unicode/ustring.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vpp/errors.hpp"
#include "vpp/rng.hpp"

namespace vpp {

using nlohmann::json;

std::string nfc_normalize(const std::string& utf8) {
  if (utf8.empty()) return utf8;
  UErrorCode status = U_ZERO_ERROR;
  const UNormalizer2* nfc = unorm2_getNFCInstance(&status);
  if (U_FAILURE(status)) throw DataError("ICU NFC normalizer unavailable");

  std::vector<UChar> u16(utf8.size() + 1);
  int32_t u16_len = 0;
  u_strFromUTF8(u16.data(), static_cast<int32_t>(u16.size()), &u16_len, utf8.data(),
                static_cast<int32_t>(utf8.size()), &status);
  if (U_FAILURE(status)) throw DataError("invalid UTF-8 in symbol: " + utf8);

  std::vector<UChar> out(2 * u16.size() + 16);
  int32_t out_len = unorm2_normalize(nfc, u16.data(), u16_len, out.data(),
                                     static_cast<int32_t>(out.size()), &status);
  if (U_FAILURE(status)) throw DataError("NFC normalization failed for: " + utf8);

  std::string result(4 * static_cast<std::size_t>(out_len) + 4, '\0');
  int32_t res_len = 0;
  status = U_ZERO_ERROR;
  u_strToUTF8(result.data(), static_cast<int32_t>(result.size()), &res_len, out.data(),
              out_len, &status);
  if (U_FAILURE(status)) throw DataError("NFC normalization failed for: " + utf8);
  result.resize(static_cast<std::size_t>(res_len));
  return result;
}

int VowelTable::index_of(const std::string& nfc_symbol) const {
  auto it = std::lower_bound(symbols.begin(), symbols.end(), nfc_symbol);
  if (it == symbols.end() || *it != nfc_symbol) return -1;
  return static_cast<int>(it - symbols.begin());
}

std::vector<std::string> FoldAssignment::languages_in_fold(int fold) const {
  std::vector<std::string> out;
  for (const auto& [lang, f] : fold_of_language) {
    if (f == fold) out.push_back(lang);
  }
  return out;
}

namespace {

InventoryListing parse_listing(const json& j, int line_number) {
  if (!j.is_object()) throw ParseError("expected a JSON object", line_number);
  if (!j.contains("language") || !j["language"].is_string()) {
    throw ParseError("missing or non-string \"language\"", line_number);
  }
  if (!j.contains("vowels") || !j["vowels"].is_array()) {
    throw ParseError("missing or non-array \"vowels\"", line_number);
  }

  InventoryListing listing;
  listing.language_id = j["language"].get<std::string>();
  if (listing.language_id.empty()) throw ParseError("empty language id", line_number);
  if (j["vowels"].empty()) {
    throw ParseError("empty vowel inventory for " + listing.language_id, line_number);
  }

  std::set<std::string> seen;
  for (const auto& vj : j["vowels"]) {
    if (!vj.is_object() || !vj.contains("ipa") || !vj["ipa"].is_string()) {
      throw ParseError("vowel entry missing string \"ipa\"", line_number);
    }
    VowelRecord rec;
    rec.ipa = nfc_normalize(vj["ipa"].get<std::string>());
    if (rec.ipa.empty()) throw ParseError("empty IPA symbol", line_number);
    if (!seen.insert(rec.ipa).second) {
      throw ParseError("duplicate vowel \"" + rec.ipa + "\" in language " +
                           listing.language_id,
                       line_number);
    }
    if (!vj.contains("formants") || !vj["formants"].is_array()) {
      throw ParseError("vowel \"" + rec.ipa + "\" missing \"formants\" array", line_number);
    }
    for (const auto& f : vj["formants"]) {
      if (!f.is_number()) throw ParseError("non-numeric formant", line_number);
      rec.formants.push_back(f.get<double>());
    }
    if (rec.formants.empty() || rec.formants.size() > 5) {
      throw ParseError("vowel \"" + rec.ipa + "\" needs 1 to 5 formants", line_number);
    }
    if (!(rec.formants[0] > 0.0)) {
      throw ParseError("F1 must be positive for \"" + rec.ipa + "\"", line_number);
    }
    if (rec.formants.size() >= 2 && !(rec.formants[1] > rec.formants[0])) {
      throw ParseError("F2 must exceed F1 for \"" + rec.ipa + "\"", line_number);
    }
    listing.vowels.push_back(std::move(rec));
  }
  return listing;
}

}  // namespace

std::vector<InventoryListing> parse_corpus(std::istream& in) {
  std::vector<InventoryListing> listings;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_number);
    }
    listings.push_back(parse_listing(j, line_number));
  }
  return listings;
}

std::vector<InventoryListing> parse_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return parse_corpus(in);
}

std::string serialize_corpus(const std::vector<InventoryListing>& listings) {
  std::string out;
  for (const auto& listing : listings) {
    json vowels = json::array();
    for (const auto& rec : listing.vowels) {
      vowels.push_back({{"ipa", rec.ipa}, {"formants", rec.formants}});
    }
    json j{{"language", listing.language_id}, {"vowels", vowels}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<InventoryListing> dedupe_languages(const std::vector<InventoryListing>& listings,
                                               std::uint64_t seed) {
  // group by language id, preserving first-appearance order
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < listings.size(); ++i) {
    auto [it, inserted] = groups.try_emplace(listings[i].language_id);
    if (inserted) order.push_back(listings[i].language_id);
    it->second.push_back(i);
  }

  Rng rng(seed);
  std::vector<InventoryListing> out;
  out.reserve(order.size());
  for (const auto& lang : order) {
    const auto& idx = groups[lang];
    out.push_back(listings[idx[rng.uniform_index(idx.size())]]);
  }
  return out;
}

VowelTable build_vowel_table(const std::vector<InventoryListing>& listings) {
  std::set<std::string> universe;
  for (const auto& listing : listings) {
    for (const auto& rec : listing.vowels) universe.insert(rec.ipa);
  }

  VowelTable table;
  table.symbols.assign(universe.begin(), universe.end());
  const int n = table.size();
  constexpr int k = 2;  // only F1, F2 feed the models
  table.mean_formants = Eigen::MatrixXd::Zero(k, n);

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n);
  for (const auto& listing : listings) {
    for (const auto& rec : listing.vowels) {
      if (rec.formants.size() < 2) continue;  // usable means both F1 and F2
      const int i = table.index_of(rec.ipa);
      table.mean_formants(0, i) += rec.formants[0];
      table.mean_formants(1, i) += rec.formants[1];
      counts(i) += 1.0;
    }
  }
  for (int i = 0; i < n; ++i) {
    if (counts(i) == 0.0) {
      throw DataError("symbol \"" + table.symbols[i] + "\" has no usable (F1, F2) formants");
    }
    table.mean_formants.col(i) /= counts(i);
  }
  return table;
}

void preprocess_features(VowelTable& table) {
  if (table.mean_formants.size() == 0 && table.size() > 0) {
    throw DataError("mean formants missing; build the table first");
  }
  const Eigen::VectorXd column_mean =
      table.size() > 0 ? Eigen::VectorXd(table.mean_formants.rowwise().mean())
                       : Eigen::VectorXd::Zero(table.mean_formants.rows());
  table.features = (table.mean_formants.colwise() - column_mean) / 1000.0;
}

std::vector<Inventory> to_inventories(const std::vector<InventoryListing>& listings,
                                      const VowelTable& table) {
  std::vector<Inventory> out;
  out.reserve(listings.size());
  for (const auto& listing : listings) {
    Inventory inv;
    inv.language_id = listing.language_id;
    for (const auto& rec : listing.vowels) {
      const int i = table.index_of(rec.ipa);
      if (i < 0) {
        throw DataError("symbol \"" + rec.ipa + "\" (language " + listing.language_id +
                        ") is not in the vowel table");
      }
      inv.vowels.push_back(i);
    }
    std::sort(inv.vowels.begin(), inv.vowels.end());
    out.push_back(std::move(inv));
  }
  return out;
}

FoldAssignment make_folds(const std::vector<Inventory>& inventories, int num_folds,
                          std::uint64_t seed) {
  const int n = static_cast<int>(inventories.size());
  if (num_folds < 2 || num_folds > n) {
    throw DataError("fold count " + std::to_string(num_folds) + " out of range [2, " +
                    std::to_string(n) + "]");
  }
  std::vector<std::string> languages;
  languages.reserve(inventories.size());
  for (const auto& inv : inventories) languages.push_back(inv.language_id);
  std::sort(languages.begin(), languages.end());
  languages.erase(std::unique(languages.begin(), languages.end()), languages.end());
  if (static_cast<int>(languages.size()) != n) {
    throw DataError("duplicate language ids; dedupe before fold assignment");
  }

  Rng rng(seed);
  rng.shuffle(languages);

  FoldAssignment folds;
  folds.num_folds = num_folds;
  folds.seed = seed;
  for (std::size_t i = 0; i < languages.size(); ++i) {
    folds.fold_of_language[languages[i]] = static_cast<int>(i % num_folds);
  }
  return folds;
}

std::string vowel_table_tsv(const VowelTable& table) {
  std::ostringstream out;
  out << "symbol\tF1_mean\tF2_mean\tfeat1\tfeat2\n";
  out.precision(17);
  for (int i = 0; i < table.size(); ++i) {
    out << table.symbols[i] << '\t' << table.mean_formants(0, i) << '\t'
        << table.mean_formants(1, i) << '\t' << table.features(0, i) << '\t'
        << table.features(1, i) << '\n';
  }
  return out.str();
}

}  // namespace vpp
