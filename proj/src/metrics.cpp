#include "disk/metrics.hpp"

#include "disk/corpus.hpp"
#include "disk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace disk::metrics {

namespace {

constexpr double kSmoothing = 1e-9;

using NGram = std::vector<std::string>;

std::map<NGram, int> ngram_counts(const Tokens& s, int n) {
  std::map<NGram, int> counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
    ++counts[NGram(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return counts;
}

void check_parallel(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size()) throw ValidationError("hypothesis and reference counts differ");
  if (hyps.empty()) throw EmptyInput("metric corpus");
}

} // namespace

double bleu_n(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, int n) {
  check_parallel(hyps, refs);
  double matched = 0, total = 0, hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    auto h = ngram_counts(hyps[i], n);
    auto r = ngram_counts(refs[i], n);
    for (const auto& [g, c] : h) {
      total += c;
      auto it = r.find(g);
      if (it != r.end()) matched += std::min(c, it->second);
    }
    hyp_len += static_cast<double>(hyps[i].size());
    ref_len += static_cast<double>(refs[i].size());
  }
  double p;
  if (total == 0) {
    // no hypothesis n-grams at all: perfect only if the references have none either
    double ref_total = 0;
    for (const auto& r : refs) ref_total += static_cast<double>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(r.size()) - n + 1));
    p = ref_total == 0 ? 1.0 : kSmoothing;
  } else {
    p = std::max(matched, kSmoothing) / total;
  }
  double bp = hyp_len >= ref_len ? 1.0 : (hyp_len == 0 ? 0.0 : std::exp(1.0 - ref_len / hyp_len));
  return bp * p;
}

double bleu_avg12(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  return 0.5 * (bleu_n(hyps, refs, 1) + bleu_n(hyps, refs, 2));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const Tokens& hyp, const Tokens& ref) {
  if (hyp.empty() || ref.empty()) return hyp.empty() && ref.empty() ? 1.0 : 0.0;
  double lcs = static_cast<double>(lcs_length(hyp, ref));
  if (lcs == 0) return 0.0;
  double p = lcs / static_cast<double>(hyp.size());
  double r = lcs / static_cast<double>(ref.size());
  return (1 + kRougeBeta2) * p * r / (r + kRougeBeta2 * p);
}

double rouge_l(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  check_parallel(hyps, refs);
  double s = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) s += rouge_l_pair(hyps[i], refs[i]);
  return s / static_cast<double>(hyps.size());
}

double distinct_n(const std::vector<Tokens>& hyps, int n) {
  std::set<NGram> unique;
  double total = 0;
  for (const auto& h : hyps)
    for (const auto& [g, c] : ngram_counts(h, n)) {
      unique.insert(g);
      total += c;
    }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / total;
}

double number_recall(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  check_parallel(hyps, refs);
  double sum = 0;
  int counted = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    std::set<std::string> numbers;
    for (const auto& t : refs[i])
      if (is_number_token(t)) numbers.insert(t);
    if (numbers.empty()) continue;
    std::set<std::string> present(hyps[i].begin(), hyps[i].end());
    double hit = 0;
    for (const auto& n : numbers) hit += present.count(n) ? 1.0 : 0.0;
    sum += hit / static_cast<double>(numbers.size());
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / counted;
}

Report evaluate(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                const std::map<std::string, ExternalMetric>& external) {
  check_parallel(hyps, refs);
  Report r;
  r.bleu = bleu_avg12(hyps, refs);
  r.rouge_l = rouge_l(hyps, refs);
  r.dist1 = distinct_n(hyps, 1);
  r.dist2 = distinct_n(hyps, 2);
  r.number_recall = number_recall(hyps, refs);
  for (const auto& [name, fn] : external) r.external[name] = fn(hyps, refs);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    r.rows.push_back({{"index", i},
                      {"bleu", bleu_avg12({hyps[i]}, {refs[i]})},
                      {"rouge_l", rouge_l_pair(hyps[i], refs[i])}});
  }
  return r;
}

nlohmann::json Report::to_json() const {
  nlohmann::json j = {{"BLEU", bleu},   {"ROUGE-L", rouge_l}, {"Dist1", dist1},
                      {"Dist2", dist2}, {"NR", number_recall}, {"external", external},
                      {"examples", rows}, {"config", config}};
  return j;
}

std::string Report::table_header() { return "model\tBLEU\tROUGE-L\tDist1\tDist2\tNR"; }

std::string Report::table_row(const std::string& name) const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << name << '\t' << bleu * 100 << '\t' << rouge_l * 100 << '\t'
     << dist1 * 100 << '\t' << dist2 * 100 << '\t' << number_recall * 100;
  return os.str();
}

} // namespace disk::metrics
