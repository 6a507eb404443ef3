// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/retrieval.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "triad/error.hpp"

namespace triad {

std::vector<RankedCandidate> rank_scores(std::span<const double> scores, std::span<const std::size_t> ids) {
  if (scores.empty()) throw ContractError("cannot rank an empty candidate set");
  if (scores.size() != ids.size()) throw DimensionError("one id per score is required");
  std::vector<RankedCandidate> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({ids[i], scores[i]});
  std::sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return out;
}

void RetrievalIndex::validate() const {
  if (ids.empty()) throw ContractError("retrieval index is empty");
  if (std::set<std::size_t>(ids.begin(), ids.end()).size() != ids.size()) {
    throw ContractError("retrieval index ids must be unique");
  }
  if (candidates.batch() != ids.size()) throw DimensionError("retrieval index has a different number of ids and items");
}

Tensor score_matrix(const CommonEmbeddings& queries, const RetrievalIndex& index, const ModalityGroup& group,
                    const AlignmentParams& params, const AlignmentVariant& variant) {
  index.validate();
  NoGradGuard guard;
  return group_similarity(queries, index.candidates, group, params, variant);
}

std::vector<RankedCandidate> rank_candidates(const CommonEmbeddings& query, const RetrievalIndex& index,
                                             const ModalityGroup& group, const AlignmentParams& params,
                                             const AlignmentVariant& variant) {
  if (query.batch() != 1) throw ContractError("rank_candidates takes exactly one query item");
  const Tensor s = score_matrix(query, index, group, params, variant);
  return rank_scores(s.data(), index.ids);
}

Tensor dual_softmax(const Tensor& scores, double temperature) {
  if (scores.rank() != 2) throw DimensionError("dual_softmax expects [Q, K], got " + shape_string(scores.shape()));
  const Tensor logits = scale(scores, temperature);
  return mul(softmax(logits, 1), softmax(logits, 0));
}

double recall_at_k(const std::vector<std::vector<std::size_t>>& rankings, const std::vector<std::size_t>& truth,
                   std::size_t k) {
  if (rankings.empty()) throw ContractError("recall needs at least one query");
  if (rankings.size() != truth.size()) throw DimensionError("one ground-truth id per query is required");
  if (k == 0) throw ContractError("k must be at least 1");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    if (k > rankings[q].size()) {
      throw ContractError("k = " + std::to_string(k) + " exceeds the " + std::to_string(rankings[q].size()) +
                          " ranked candidates");
    }
    if (std::find(rankings[q].begin(), rankings[q].begin() + static_cast<std::ptrdiff_t>(k), truth[q]) !=
        rankings[q].begin() + static_cast<std::ptrdiff_t>(k)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

RetrievalReport evaluate_scores(const std::string& group, const Tensor& scores, const std::vector<std::size_t>& query_ids,
                                const std::vector<std::size_t>& candidate_ids, const std::vector<std::size_t>& truth) {
  if (scores.rank() != 2 || scores.dim(0) != query_ids.size() || scores.dim(1) != candidate_ids.size()) {
    throw DimensionError("score matrix " + shape_string(scores.shape()) + " does not match query/candidate ids");
  }
  RetrievalReport r;
  r.group = group;
  const std::size_t k = candidate_ids.size();
  std::vector<std::vector<std::size_t>> rankings;
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    auto ranked = rank_scores(scores.data().subspan(q * k, k), candidate_ids);
    std::vector<std::size_t> order;
    for (const auto& c : ranked) order.push_back(c.id);
    rankings.push_back(std::move(order));
    ranked.resize(std::min<std::size_t>(10, ranked.size()));
    r.queries.push_back({query_ids[q], std::move(ranked)});
  }
  r.r1 = recall_at_k(rankings, truth, std::min<std::size_t>(1, k));
  r.r5 = recall_at_k(rankings, truth, std::min<std::size_t>(5, k));
  r.r10 = recall_at_k(rankings, truth, std::min<std::size_t>(10, k));
  return r;
}

void write_report(std::ostream& out, const RetrievalReport& report) {
  const auto old_precision = out.precision(10);
  for (const auto& q : report.queries) {
    out << "query group=" << report.group << " id=" << q.query_id << " top=";
    for (std::size_t i = 0; i < q.top.size(); ++i) {
      out << (i ? "," : "") << q.top[i].id << ':' << q.top[i].score;
    }
    out << '\n';
  }
  out << "summary group=" << report.group << " queries=" << report.queries.size() << " r1=" << report.r1
      << " r5=" << report.r5 << " r10=" << report.r10 << '\n';
  out.precision(old_precision);
}

}  // namespace triad
