#include "disk/metrics.hpp"
#include "disk/errors.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace disk;
using namespace disk::metrics;

namespace {

Tokens words(const std::string& s) {
  Tokens out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

} // namespace

TEST_CASE("BLEU worked example") {
  std::vector<Tokens> h{words("a b c")}, r{words("a b d")};
  CHECK(bleu_n(h, r, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(bleu_n(h, r, 2) == doctest::Approx(0.5));
  CHECK(bleu_avg12(h, r) == doctest::Approx(0.5833).epsilon(1e-4));
  // brevity penalty
  std::vector<Tokens> shorter{words("a b")};
  CHECK(bleu_n(shorter, r, 1) == doctest::Approx(std::exp(1.0 - 1.5)));
  // clipped counts
  CHECK(bleu_n({words("a a a")}, {words("a b c")}, 1) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(bleu_n(h, {}, 1), ValidationError);
  CHECK_THROWS_AS(bleu_n({}, {}, 1), EmptyInput);
}

TEST_CASE("metrics score a corpus against itself as 1") {
  std::vector<Tokens> c{words("tom has 3 cats"), words("x"), words("the car travels 40 miles in 2 hours")};
  CHECK(bleu_avg12(c, c) == doctest::Approx(1.0));
  CHECK(rouge_l(c, c) == doctest::Approx(1.0));
  CHECK(number_recall(c, c) == doctest::Approx(1.0));
}

TEST_CASE("ROUGE-L agrees with the LCS table") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> len(1, 12), tok(0, 5);
  for (int i = 0; i < 100; ++i) {
    Tokens a, b;
    for (int k = len(rng); k > 0; --k) a.push_back(std::string(1, static_cast<char>('a' + tok(rng))));
    for (int k = len(rng); k > 0; --k) b.push_back(std::string(1, static_cast<char>('a' + tok(rng))));
    CHECK(lcs_length(a, b) == oracle::lcs(a, b));
    CHECK(rouge_l_pair(a, b) == doctest::Approx(oracle::rouge_l(a, b, kRougeBeta2)).epsilon(1e-12));
  }
  CHECK(rouge_l_pair(words("a b"), words("c d")) == 0.0);
}

TEST_CASE("distinct n-grams") {
  CHECK(distinct_n({words("a b a")}, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(distinct_n({words("a b a")}, 2) == 1.0);
  CHECK(distinct_n({words("a b"), words("a b")}, 2) == 0.5);
  CHECK(distinct_n({words("a")}, 2) == 0.0);
}

TEST_CASE("number recall") {
  CHECK(number_recall({words("3 apples and 5")}, {words("3 apples and 5 pears cost 7")}) == doctest::Approx(2.0 / 3.0));
  // examples without numbers do not count
  CHECK(number_recall({words("a"), words("1")}, {words("b"), words("1 2")}) == doctest::Approx(0.5));
  // a repeated reference number counts once
  CHECK(number_recall({words("4")}, {words("4 and 4")}) == 1.0);
}

TEST_CASE("report formatting and external metrics") {
  std::vector<Tokens> h{words("a b c")}, r{words("a b d")};
  auto rep = evaluate(h, r, {{"const", [](const auto&, const auto&) { return 0.25; }}});
  CHECK(rep.external.at("const") == 0.25);
  CHECK(rep.rows.size() == 1);
  auto j = rep.to_json();
  CHECK(j["BLEU"].get<double>() == doctest::Approx(0.5833).epsilon(1e-4));
  CHECK(rep.table_row("m").rfind("m\t58.33\t", 0) == 0);
  CHECK(Report::table_header() == "model\tBLEU\tROUGE-L\tDist1\tDist2\tNR");
}
