#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "flunow/error.hpp"
#include "flunow/series.hpp"

namespace flunow {

using Document = std::vector<std::string>;

struct RankedTerm {
  std::string term;
  double score = 0.0;
};

struct CandidateQuery {
  std::string term;
  WeeklySeries volume;
};

struct SelectionConfig {
  double threshold = 0.70;
};

struct SelectedQuery {
  std::string term;
  double r = 0.0;
};

struct SelectionResult {
  std::vector<SelectedQuery> selected;
  std::size_t skipped_constant = 0;
};

/// Corpus reader: one document per line, whitespace-separated terms.
inline std::vector<Document> read_corpus(std::istream& in) {
  std::vector<Document> corpus;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    Document doc;
    for (std::string term; words >> term;) doc.push_back(std::move(term));
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

namespace detail {

inline std::vector<RankedTerm> top_k(std::map<std::string, double> scores, std::size_t k) {
  std::vector<RankedTerm> ranked;
  ranked.reserve(scores.size());
  for (auto& [term, score] : scores) ranked.push_back({term, score});
  // Descending score, then lexicographic term.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedTerm& a, const RankedTerm& b) { return a.score > b.score; });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace detail

/// score(term) = (corpus count of term) * ln(N / df).
inline std::vector<RankedTerm> rank_tfidf(const std::vector<Document>& corpus, std::size_t k) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "tf-idf ranking needs at least one document");
  std::map<std::string, double> count;
  std::map<std::string, double> doc_freq;
  for (const auto& doc : corpus) {
    std::unordered_set<std::string_view> seen;
    for (const auto& term : doc) {
      count[term] += 1.0;
      if (seen.insert(term).second) doc_freq[term] += 1.0;
    }
  }
  const double n_docs = static_cast<double>(corpus.size());
  for (auto& [term, tf] : count) tf *= std::log(n_docs / doc_freq[term]);
  return detail::top_k(std::move(count), k);
}

inline std::vector<RankedTerm> rank_frequency(const std::vector<Document>& corpus, std::size_t k) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "frequency ranking needs at least one document");
  std::map<std::string, double> count;
  for (const auto& doc : corpus) {
    for (const auto& term : doc) count[term] += 1.0;
  }
  return detail::top_k(std::move(count), k);
}

/// Keeps candidates whose correlation with `target` is strictly greater
/// than the threshold, sorted by descending r (ties by term). Constant
/// candidates cannot be correlated and are counted in `skipped_constant`.
inline SelectionResult select_queries(const std::vector<CandidateQuery>& candidates, const WeeklySeries& target,
                                      const SelectionConfig& config) {
  if (!(config.threshold > 0.0 && config.threshold < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "selection threshold must lie in (0, 1)");
  }
  SelectionResult result;
  for (const auto& candidate : candidates) {
    if (!candidate.volume.same_range(target)) {
      throw Error(ErrorKind::AlignmentError,
                  "candidate '" + candidate.term + "' does not cover the target's week range");
    }
    if (is_constant(candidate.volume.values())) {
      ++result.skipped_constant;
      continue;
    }
    const double r = pearson(candidate.volume.values(), target.values());
    if (r > config.threshold) result.selected.push_back({candidate.term, r});
  }
  std::sort(result.selected.begin(), result.selected.end(), [](const SelectedQuery& a, const SelectedQuery& b) {
    return a.r != b.r ? a.r > b.r : a.term < b.term;
  });
  return result;
}

}  // namespace flunow
