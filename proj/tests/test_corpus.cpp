#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "support.hpp"
#include "vpp/corpus.hpp"
#include "vpp/errors.hpp"

using namespace vpp;

TEST_CASE("parse: single-record line") {
  std::istringstream in(
      R"({"language":"L1","vowels":[{"ipa":"i","formants":[280,2250]}]})");
  const auto listings = parse_corpus(in);
  REQUIRE(listings.size() == 1);
  CHECK(listings[0].language_id == "L1");
  REQUIRE(listings[0].vowels.size() == 1);
  CHECK(listings[0].vowels[0].ipa == "i");
  CHECK(listings[0].vowels[0].formants == std::vector<double>{280.0, 2250.0});
}

TEST_CASE("parse: empty stream gives an empty corpus") {
  std::istringstream in("");
  CHECK(parse_corpus(in).empty());
  std::istringstream blank("\n  \n\n");
  CHECK(parse_corpus(blank).empty());
}

TEST_CASE("parse: malformed line reports its number") {
  std::istringstream in(
      "{\"language\":\"A\",\"vowels\":[{\"ipa\":\"a\",\"formants\":[700,1300]}]}\n"
      "not json at all\n");
  try {
    parse_corpus(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("parse: duplicate vowel within a language is an error") {
  std::istringstream in(
      R"({"language":"A","vowels":[{"ipa":"a","formants":[700,1300]},{"ipa":"a","formants":[710,1310]}]})");
  CHECK_THROWS_AS(parse_corpus(in), ParseError);
}

TEST_CASE("parse: NFC normalization unifies combining-mark spellings") {
  CHECK(nfc_normalize("a\xcc\x83") == "\xc3\xa3");  // a + COMBINING TILDE == precomposed
  // the same nasal vowel written both ways within one language collides
  std::istringstream in(
      "{\"language\":\"A\",\"vowels\":[{\"ipa\":\"a\\u0303\",\"formants\":[700,1300]},"
      "{\"ipa\":\"\\u00e3\",\"formants\":[705,1320]}]}");
  CHECK_THROWS_AS(parse_corpus(in), ParseError);
}

TEST_CASE("parse: formant validation") {
  std::istringstream zero(R"({"language":"A","vowels":[{"ipa":"a","formants":[0,1300]}]})");
  CHECK_THROWS_AS(parse_corpus(zero), ParseError);
  std::istringstream inverted(
      R"({"language":"A","vowels":[{"ipa":"a","formants":[1300,700]}]})");
  CHECK_THROWS_AS(parse_corpus(inverted), ParseError);
  std::istringstream six(
      R"({"language":"A","vowels":[{"ipa":"a","formants":[1,2,3,4,5,6]}]})");
  CHECK_THROWS_AS(parse_corpus(six), ParseError);
}

namespace {

std::vector<InventoryListing> triple_listing_corpus() {
  std::vector<InventoryListing> listings;
  for (int copy = 0; copy < 3; ++copy) {
    InventoryListing l;
    l.language_id = "Swahili";
    l.vowels.push_back({"a", {700.0 + copy, 1300.0}});
    listings.push_back(l);
  }
  return listings;
}

}  // namespace

TEST_CASE("dedupe: deterministic and identity without duplicates") {
  auto listings = triple_listing_corpus();
  listings.push_back({"Other", {{"i", {280.0, 2250.0}}}});

  const auto once = dedupe_languages(listings, 7);
  const auto again = dedupe_languages(listings, 7);
  REQUIRE(once.size() == 2);
  CHECK(once[0].language_id == "Swahili");
  CHECK(once[0].vowels[0].formants[0] == again[0].vowels[0].formants[0]);

  const std::vector<InventoryListing> unique = {listings[0], listings[3]};
  const auto deduped = dedupe_languages(unique, 3);
  REQUIRE(deduped.size() == 2);
  CHECK(deduped[0].vowels[0].formants[0] == unique[0].vowels[0].formants[0]);
}

TEST_CASE("dedupe: survivor choice is uniform over seeds") {
  const auto listings = triple_listing_corpus();
  std::map<double, int> counts;
  const int trials = 100000;
  for (int seed = 0; seed < trials; ++seed) {
    const auto survivor = dedupe_languages(listings, static_cast<std::uint64_t>(seed));
    counts[survivor[0].vowels[0].formants[0]] += 1;
  }
  REQUIRE(counts.size() == 3);
  for (const auto& [f1, count] : counts) {
    CHECK(std::abs(count / static_cast<double>(trials) - 1.0 / 3.0) < 0.01);
  }
}

TEST_CASE("vowel table: singleton and two-point means") {
  std::vector<InventoryListing> listings;
  listings.push_back({"A", {{"i", {300.0, 2200.0}}, {"o", {400.0, 800.0}}}});
  listings.push_back({"B", {{"o", {600.0, 1000.0}}}});
  const VowelTable table = build_vowel_table(listings);
  REQUIRE(table.size() == 2);
  const int i = table.index_of("i");
  const int o = table.index_of("o");
  CHECK(table.mean_formants(0, i) == doctest::Approx(300.0));
  CHECK(table.mean_formants(1, i) == doctest::Approx(2200.0));
  CHECK(table.mean_formants(0, o) == doctest::Approx(500.0));
  CHECK(table.mean_formants(1, o) == doctest::Approx(900.0));
}

TEST_CASE("vowel table: symbol without usable formants is named in the error") {
  std::vector<InventoryListing> listings;
  listings.push_back({"A", {{"q", {300.0}}, {"a", {700.0, 1300.0}}}});
  try {
    build_vowel_table(listings);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("q") != std::string::npos);
  }
}

TEST_CASE("vowel table: permutation-invariant in language order") {
  std::vector<InventoryListing> listings;
  listings.push_back({"A", {{"i", {280.0, 2250.0}}, {"a", {700.0, 1300.0}}}});
  listings.push_back({"B", {{"a", {760.0, 1340.0}}, {"u", {310.0, 870.0}}}});
  listings.push_back({"C", {{"i", {292.0, 2180.0}}}});
  auto reversed = listings;
  std::reverse(reversed.begin(), reversed.end());

  const VowelTable t1 = build_vowel_table(listings);
  const VowelTable t2 = build_vowel_table(reversed);
  CHECK(t1.symbols == t2.symbols);
  CHECK((t1.mean_formants - t2.mean_formants).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("preprocess: direct arithmetic and centering identities") {
  VowelTable table;
  table.symbols = {"a", "b"};
  table.mean_formants.resize(2, 2);
  table.mean_formants << 500.0, 500.0, 700.0, 2300.0;  // column means (500, 1500)
  preprocess_features(table);
  CHECK(table.features(0, 0) == doctest::Approx(0.0));
  CHECK(table.features(1, 0) == doctest::Approx(-0.8));
  CHECK(table.features(1, 1) == doctest::Approx(0.8));

  // single-symbol table collapses to the origin
  VowelTable single;
  single.symbols = {"a"};
  single.mean_formants.resize(2, 1);
  single.mean_formants << 700.0, 1300.0;
  preprocess_features(single);
  CHECK(single.features.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  // per-column sums vanish; pairwise differences are formant differences / 1000
  const VowelTable big = vpp::test::synthetic_table(17);
  CHECK(std::abs(big.features.row(0).sum()) < 1e-12);
  CHECK(std::abs(big.features.row(1).sum()) < 1e-12);
  for (int i = 0; i < 17; i += 5) {
    for (int j = 0; j < 17; j += 3) {
      const Eigen::Vector2d lhs = big.features.col(i) - big.features.col(j);
      const Eigen::Vector2d rhs =
          (big.mean_formants.col(i) - big.mean_formants.col(j)) / 1000.0;
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("round-trip: parse after serialize is identity") {
  std::vector<InventoryListing> listings;
  listings.push_back({"A", {{"i", {280.0, 2250.0, 2900.0}}, {"a", {700.5, 1300.25}}}});
  listings.push_back({"B", {{"u", {310.0, 870.0, 2250.0, 3300.0, 4100.0}}}});
  listings.push_back({"A", {{"i", {285.0, 2240.0}}}});  // second listing, same id

  std::istringstream in(serialize_corpus(listings));
  const auto parsed = parse_corpus(in);
  REQUIRE(parsed.size() == listings.size());
  for (std::size_t i = 0; i < listings.size(); ++i) {
    CHECK(parsed[i].language_id == listings[i].language_id);
    REQUIRE(parsed[i].vowels.size() == listings[i].vowels.size());
    for (std::size_t v = 0; v < listings[i].vowels.size(); ++v) {
      CHECK(parsed[i].vowels[v].ipa == listings[i].vowels[v].ipa);
      CHECK(parsed[i].vowels[v].formants == listings[i].vowels[v].formants);
    }
  }
}

namespace {

std::vector<Inventory> synthetic_languages(int count) {
  std::vector<Inventory> out;
  for (int i = 0; i < count; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "lang%03d", i);
    out.push_back({buf, {0}});
  }
  return out;
}

}  // namespace

TEST_CASE("folds: balanced partition covering every language once") {
  const auto languages = synthetic_languages(223);
  const FoldAssignment folds = make_folds(languages, 10, 42);

  std::map<int, int> sizes;
  for (const auto& [lang, fold] : folds.fold_of_language) sizes[fold] += 1;
  REQUIRE(sizes.size() == 10);
  int total = 0;
  for (const auto& [fold, size] : sizes) {
    CHECK((size == 22 || size == 23));
    total += size;
  }
  CHECK(total == 223);
  CHECK(folds.fold_of_language.size() == 223);  // every language exactly once

  // dev fold designation
  CHECK(folds.dev_fold(3) == 4);
  CHECK(folds.dev_fold(9) == 0);
}

TEST_CASE("folds: forced singleton partition and determinism") {
  const auto languages = synthetic_languages(10);
  const FoldAssignment folds = make_folds(languages, 10, 3);
  std::set<int> seen;
  for (const auto& [lang, fold] : folds.fold_of_language) seen.insert(fold);
  CHECK(seen.size() == 10);

  const FoldAssignment again = make_folds(languages, 10, 3);
  CHECK(folds.fold_of_language == again.fold_of_language);

  CHECK_THROWS_AS(make_folds(languages, 1, 3), DataError);
  CHECK_THROWS_AS(make_folds(languages, 11, 3), DataError);
}

TEST_CASE("vowel table TSV export") {
  const VowelTable table = vpp::test::synthetic_table(3);
  const std::string tsv = vowel_table_tsv(table);
  CHECK(tsv.find("symbol\tF1_mean\tF2_mean\tfeat1\tfeat2") == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 4);  // header + 3 rows
}
