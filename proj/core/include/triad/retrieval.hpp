// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Retrieval ranking, dual-softmax post-processing and recall metrics.

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "triad/alignment.hpp"

namespace triad {

struct RankedCandidate {
  std::size_t id = 0;
  double score = 0.0;
};

/// Orders candidates by descending score, ties by ascending id. Empty input
/// raises ContractError.
std::vector<RankedCandidate> rank_scores(std::span<const double> scores, std::span<const std::size_t> ids);

/// Candidate embeddings with their identifiers.
struct RetrievalIndex {
  CommonEmbeddings candidates;
  std::vector<std::size_t> ids;

  std::size_t size() const { return ids.size(); }
  void validate() const;
};

/// Scores of every query item against every candidate for a group, [Q, K],
/// computed without recording gradients.
Tensor score_matrix(const CommonEmbeddings& queries, const RetrievalIndex& index, const ModalityGroup& group,
                    const AlignmentParams& params, const AlignmentVariant& variant = {});

/// Ranks the index for a single query item.
std::vector<RankedCandidate> rank_candidates(const CommonEmbeddings& query, const RetrievalIndex& index,
                                             const ModalityGroup& group, const AlignmentParams& params,
                                             const AlignmentVariant& variant = {});

inline constexpr double kDualSoftmaxTemperature = 100.0;

/// Elementwise product of the row-wise and column-wise softmax of S * temperature.
Tensor dual_softmax(const Tensor& scores, double temperature = kDualSoftmaxTemperature);

/// Fraction of queries whose ground truth is within the first k ranked ids.
/// k larger than a ranking raises ContractError.
double recall_at_k(const std::vector<std::vector<std::size_t>>& rankings, const std::vector<std::size_t>& truth,
                   std::size_t k);

struct QueryRecord {
  std::size_t query_id = 0;
  std::vector<RankedCandidate> top;  // at most 10
};

struct RetrievalReport {
  std::string group;
  std::vector<QueryRecord> queries;
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
};

/// Ranks every row of scores [Q, K] and scores it against `truth` (one
/// candidate id per query). Recall at a k beyond K is reported at k = K.
RetrievalReport evaluate_scores(const std::string& group, const Tensor& scores, const std::vector<std::size_t>& query_ids,
                                const std::vector<std::size_t>& candidate_ids, const std::vector<std::size_t>& truth);

// One "query" line per query, then a "summary" line.
void write_report(std::ostream& out, const RetrievalReport& report);

}  // namespace triad
