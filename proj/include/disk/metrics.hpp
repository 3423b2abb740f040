#ifndef DISK_METRICS_HPP
#define DISK_METRICS_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace disk::metrics {

using Tokens = std::vector<std::string>;

// Corpus BLEU-1 and BLEU-2, each with its own brevity penalty, averaged.
double bleu_avg12(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);
double bleu_n(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, int n);

inline constexpr double kRougeBeta2 = 1.2;
std::size_t lcs_length(const Tokens& a, const Tokens& b);
double rouge_l_pair(const Tokens& hyp, const Tokens& ref);
// mean of per-example F
double rouge_l(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

// unique n-grams / total n-grams over the whole hypothesis set
double distinct_n(const std::vector<Tokens>& hyps, int n);

// mean over examples with numbers of |ref numbers found in hyp| / |ref numbers|
double number_recall(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

// External scorer slot (METEOR, BERTScore, ...): corpus-level score in [0, 1].
using ExternalMetric = std::function<double(const std::vector<Tokens>&, const std::vector<Tokens>&)>;

struct Report {
  double bleu = 0, rouge_l = 0, dist1 = 0, dist2 = 0, number_recall = 0;
  std::map<std::string, double> external;
  std::vector<nlohmann::json> rows;  // per example
  nlohmann::json config;

  nlohmann::json to_json() const;
  // header + one row; scores reported x100
  std::string table_row(const std::string& name) const;
  static std::string table_header();
};

Report evaluate(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs,
                const std::map<std::string, ExternalMetric>& external = {});

} // namespace disk::metrics

#endif
