// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include "triad/alignment.hpp"

#include <algorithm>
#include <cmath>

#include "triad/error.hpp"

namespace triad {

char modality_letter(Modality m) {
  switch (m) {
    case Modality::Text:
      return 'T';
    case Modality::Vision:
      return 'V';
    case Modality::Audio:
      return 'A';
  }
  return '?';
}

namespace {

Modality modality_from_letter(char c, const std::string& context) {
  switch (c) {
    case 'T':
      return Modality::Text;
    case 'V':
      return Modality::Vision;
    case 'A':
      return Modality::Audio;
    default:
      throw ConfigError("unknown modality letter '" + std::string(1, c) + "' in group " + context);
  }
}

}  // namespace

ModalityGroup ModalityGroup::parse(const std::string& name) {
  static const std::vector<std::string> kSupported = {"T-V", "T-A", "T-AV", "V-A", "A-TV", "V-TA"};
  bool supported = false;
  for (const auto& s : kSupported) supported = supported || s == name;
  if (!supported) throw ConfigError("unsupported modality group '" + name + "' (expected T-V, T-A, T-AV, V-A, A-TV or V-TA)");
  ModalityGroup g;
  g.query = modality_from_letter(name[0], name);
  for (std::size_t i = 2; i < name.size(); ++i) g.target.push_back(modality_from_letter(name[i], name));
  return g;
}

std::vector<ModalityGroup> ModalityGroup::parse_list(const std::vector<std::string>& names) {
  std::vector<ModalityGroup> out;
  for (const auto& n : names) out.push_back(parse(n));
  return out;
}

std::string ModalityGroup::name() const {
  std::string s(1, modality_letter(query));
  s.push_back('-');
  for (auto m : target) s.push_back(modality_letter(m));
  return s;
}

bool ModalityGroup::uses(Modality m) const {
  if (query == m) return true;
  for (auto t : target) {
    if (t == m) return true;
  }
  return false;
}

bool CommonEmbeddings::has(Modality m) const {
  switch (m) {
    case Modality::Text:
      return text.defined();
    case Modality::Vision:
      return vision.defined();
    case Modality::Audio:
      return audio.defined();
  }
  return false;
}

Tensor CommonEmbeddings::audiovisual() const {
  if (!vision.defined() || !audio.defined()) throw ConfigError("audio-visual rows need both vision and audio");
  return concat({vision, audio}, 1);
}

AlignmentParams AlignmentParams::create(std::size_t text_width, std::size_t vision_width, std::size_t audio_width,
                                        const AlignmentConfig& config, Rng& rng) {
  if (config.common == 0) throw ConfigError("common embedding size must be positive");
  if (!(config.initial_temperature > 0.0)) throw ConfigError("temperature must be positive");
  AlignmentParams p;
  const auto c = config.common;
  p.project_text = Linear::create(text_width, c, rng);
  p.project_vision = Linear::create(vision_width, c, rng);
  p.project_audio = Linear::create(audio_width, c, rng);
  p.weight_text = Linear::create(c, 1, rng, kInitStd, false);
  p.weight_vision = Linear::create(c, 1, rng, kInitStd, false);
  p.weight_audio = Linear::create(c, 1, rng, kInitStd, false);
  p.fuse_av = Linear::create(2 * c, c, rng);
  p.fuse_tv = Linear::create(2 * c, c, rng);
  p.fuse_ta = Linear::create(2 * c, c, rng);
  p.log_temperature = Tensor::scalar(std::log(config.initial_temperature), true);
  return p;
}

double AlignmentParams::temperature() const { return std::exp(log_temperature.item()); }

Tensor AlignmentParams::inverse_temperature() const { return exp(scale(log_temperature, -1.0)); }

const Linear& AlignmentParams::weighting(Modality m) const {
  switch (m) {
    case Modality::Text:
      return weight_text;
    case Modality::Vision:
      return weight_vision;
    case Modality::Audio:
      return weight_audio;
  }
  throw ContractError("unknown modality");
}

void AlignmentParams::collect(ParameterSet& set, const std::string& prefix) const {
  project_text.collect(set, prefix + ".project_text");
  project_vision.collect(set, prefix + ".project_vision");
  project_audio.collect(set, prefix + ".project_audio");
  weight_text.collect(set, prefix + ".weight_text");
  weight_vision.collect(set, prefix + ".weight_vision");
  weight_audio.collect(set, prefix + ".weight_audio");
  fuse_av.collect(set, prefix + ".fuse_av");
  fuse_tv.collect(set, prefix + ".fuse_tv");
  fuse_ta.collect(set, prefix + ".fuse_ta");
  set.add(prefix + ".log_temperature", log_temperature);
}

std::string AlignmentVariant::name() const {
  std::string s = granularity == Granularity::Fine ? "fine" : "coarse";
  s += fusion == TargetFusion::Feature ? "-feature" : "-score";
  s += weighting == TokenWeighting::Learned ? "-learned" : "-equal";
  if (text_pooling == TextPooling::Cls) s += "-cls";
  return s;
}

AlignmentVariant AlignmentVariant::parse(const std::string& name) {
  AlignmentVariant v;
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= name.size()) {
    const auto dash = name.find('-', start);
    parts.push_back(name.substr(start, dash == std::string::npos ? std::string::npos : dash - start));
    if (dash == std::string::npos) break;
    start = dash + 1;
  }
  if (parts.size() < 3 || parts.size() > 4) throw ConfigError("alignment variant '" + name + "' is not granularity-fusion-weighting[-cls]");
  if (parts[0] == "fine") v.granularity = Granularity::Fine;
  else if (parts[0] == "coarse") v.granularity = Granularity::Coarse;
  else throw ConfigError("alignment granularity must be fine or coarse, got '" + parts[0] + "'");
  if (parts[1] == "feature") v.fusion = TargetFusion::Feature;
  else if (parts[1] == "score") v.fusion = TargetFusion::Score;
  else throw ConfigError("alignment fusion must be feature or score, got '" + parts[1] + "'");
  if (parts[2] == "learned") v.weighting = TokenWeighting::Learned;
  else if (parts[2] == "equal") v.weighting = TokenWeighting::Equal;
  else throw ConfigError("alignment weighting must be learned or equal, got '" + parts[2] + "'");
  if (parts.size() == 4) {
    if (parts[3] != "cls") throw ConfigError("alignment text pooling suffix must be cls, got '" + parts[3] + "'");
    v.text_pooling = TextPooling::Cls;
  }
  return v;
}

CommonEmbeddings pool_and_project(const Tensor& text, std::span<const std::uint8_t> text_mask, const Tensor& vision,
                                  const Tensor& audio, const AlignmentParams& params) {
  CommonEmbeddings e;
  if (text.defined()) {
    if (text.rank() != 3) throw DimensionError("text features must be [B, N_t, C_t], got " + shape_string(text.shape()));
    if (text_mask.size() != text.dim(0) * text.dim(1)) throw DimensionError("text mask does not match text features");
    e.text = l2_normalize(params.project_text(text));
    e.text_mask.assign(text_mask.begin(), text_mask.end());
  }
  auto pooled = [](const Tensor& f, const Linear& proj, const char* what) {
    if (f.rank() != 4) throw DimensionError(std::string(what) + " features must be [B, N, S, C], got " + shape_string(f.shape()));
    return l2_normalize(proj(mean_axis(f, 2)));
  };
  if (vision.defined()) e.vision = pooled(vision, params.project_vision, "vision");
  if (audio.defined()) e.audio = pooled(audio, params.project_audio, "audio");
  return e;
}

Tensor fine_similarity(const Tensor& e_t, std::span<const std::uint8_t> text_mask, const Tensor& e_x,
                       const Linear& text_weighting, const Linear& target_weighting) {
  if (e_t.rank() != 2 || e_x.rank() != 2 || e_t.dim(1) != e_x.dim(1)) {
    throw DimensionError("fine_similarity: incompatible " + shape_string(e_t.shape()) + " and " +
                         shape_string(e_x.shape()));
  }
  const std::size_t nt = e_t.dim(0), nx = e_x.dim(0), c = e_t.dim(1);
  std::vector<std::uint8_t> mask(text_mask.begin(), text_mask.end());
  if (mask.empty()) mask.assign(nt, 1);
  if (mask.size() != nt) throw DimensionError("fine_similarity: text mask length does not match N_t");
  const std::vector<std::uint8_t> all(nx, 1);
  Tensor wt = masked_softmax(reshape(text_weighting(e_t), {1, nt}), mask);
  Tensor wx = masked_softmax(reshape(target_weighting(e_x), {1, nx}), all);
  Tensor s = fine_similarity_matrix(reshape(e_t, {1, nt, c}), mask, wt, reshape(e_x, {1, nx, c}), all, wx);
  return reshape(s, {});
}

namespace {

struct Side {
  Tensor rows;                     // [B, N, C]
  std::vector<std::uint8_t> mask;  // [B * N]
  Tensor weights;                  // [B, N]
};

Tensor rows_of(const CommonEmbeddings& e, Modality m) {
  if (!e.has(m)) {
    throw ConfigError(std::string("modality ") + modality_letter(m) + " is required by a group but absent from the batch");
  }
  switch (m) {
    case Modality::Text:
      return e.text;
    case Modality::Vision:
      return e.vision;
    case Modality::Audio:
      return e.audio;
  }
  throw ContractError("unknown modality");
}

std::vector<std::uint8_t> mask_of(const CommonEmbeddings& e, Modality m, std::size_t batch, std::size_t rows) {
  if (m == Modality::Text && !e.text_mask.empty()) return e.text_mask;
  return std::vector<std::uint8_t>(batch * rows, 1);
}

// Multi-modality targets are always stacked vision rows first, then audio.
std::vector<Modality> fusion_order(std::vector<Modality> modalities) {
  std::sort(modalities.begin(), modalities.end());
  return modalities;
}

Side build_side(const CommonEmbeddings& e, const std::vector<Modality>& modalities, const AlignmentParams& params,
                TokenWeighting weighting) {
  std::vector<Tensor> rows, logits;
  std::vector<std::vector<std::uint8_t>> masks;
  std::size_t batch = 0;
  for (auto m : modalities) {
    Tensor r = rows_of(e, m);
    batch = r.dim(0);
    masks.push_back(mask_of(e, m, r.dim(0), r.dim(1)));
    if (weighting == TokenWeighting::Learned) logits.push_back(reshape(params.weighting(m)(r), {r.dim(0), r.dim(1)}));
    rows.push_back(r);
  }
  Side s;
  s.rows = rows.size() == 1 ? rows[0] : concat(rows, 1);
  const std::size_t n = s.rows.dim(1);
  s.mask.reserve(batch * n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const std::size_t nk = rows[k].dim(1);
      s.mask.insert(s.mask.end(), masks[k].begin() + static_cast<std::ptrdiff_t>(b * nk),
                    masks[k].begin() + static_cast<std::ptrdiff_t>((b + 1) * nk));
    }
  }
  if (weighting == TokenWeighting::Learned) {
    s.weights = masked_softmax(logits.size() == 1 ? logits[0] : concat(logits, 1), s.mask);
  } else {
    std::vector<double> w(batch * n, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j) count += s.mask[b * n + j];
      if (count == 0) throw ContractError("item " + std::to_string(b) + " has no unmasked rows");
      for (std::size_t j = 0; j < n; ++j) w[b * n + j] = s.mask[b * n + j] ? 1.0 / static_cast<double>(count) : 0.0;
    }
    s.weights = Tensor({batch, n}, std::move(w));
  }
  return s;
}

Tensor fine_matrix(const Side& q, const Side& t) {
  return fine_similarity_matrix(q.rows, q.mask, q.weights, t.rows, t.mask, t.weights);
}

// Unit-norm pooled vector per item, [B, C].
Tensor pooled(const CommonEmbeddings& e, Modality m, TextPooling text_pooling) {
  Tensor rows = rows_of(e, m);
  const std::size_t batch = rows.dim(0), n = rows.dim(1), c = rows.dim(2);
  if (m == Modality::Text && text_pooling == TextPooling::Cls) {
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t k = 0; k < c; ++k) idx.push_back(b * n * c + k);
    }
    return l2_normalize(gather(rows, std::move(idx), {batch, c}));
  }
  const auto mask = mask_of(e, m, batch, n);
  std::vector<double> pool(batch * batch * n, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) count += mask[b * n + j];
    if (count == 0) throw ContractError("item " + std::to_string(b) + " has no unmasked rows");
    for (std::size_t j = 0; j < n; ++j) {
      if (mask[b * n + j]) pool[b * batch * n + b * n + j] = 1.0 / static_cast<double>(count);
    }
  }
  return l2_normalize(matmul(Tensor({batch, batch * n}, std::move(pool)), reshape(rows, {batch * n, c})));
}

const Linear& fusion_projection(const std::vector<Modality>& target, const AlignmentParams& params) {
  auto has = [&](Modality m) {
    for (auto t : target) {
      if (t == m) return true;
    }
    return false;
  };
  if (target.size() == 2 && has(Modality::Audio) && has(Modality::Vision)) return params.fuse_av;
  if (target.size() == 2 && has(Modality::Text) && has(Modality::Vision)) return params.fuse_tv;
  if (target.size() == 2 && has(Modality::Text) && has(Modality::Audio)) return params.fuse_ta;
  throw ConfigError("coarse feature fusion supports exactly two target modalities");
}

}  // namespace

Tensor group_similarity(const CommonEmbeddings& queries, const CommonEmbeddings& targets, const ModalityGroup& group,
                        const AlignmentParams& params, const AlignmentVariant& variant) {
  if (group.target.empty()) throw ConfigError("malformed modality group");
  for (auto m : group.target) {
    if (m == group.query) throw ConfigError("group " + group.name() + " targets its own query modality");
  }
  const bool multi = group.target.size() > 1;
  if (variant.granularity == Granularity::Fine) {
    const Side q = build_side(queries, {group.query}, params, variant.weighting);
    if (!multi || variant.fusion == TargetFusion::Feature) {
      return fine_matrix(q, build_side(targets, fusion_order(group.target), params, variant.weighting));
    }
    Tensor total;
    for (auto m : group.target) {
      Tensor s = fine_matrix(q, build_side(targets, {m}, params, variant.weighting));
      total = total.defined() ? add(total, s) : s;
    }
    return scale(total, 1.0 / static_cast<double>(group.target.size()));
  }

  Tensor q = pooled(queries, group.query, variant.text_pooling);
  if (!multi) return matmul(q, transpose(pooled(targets, group.target[0], variant.text_pooling)));
  if (variant.fusion == TargetFusion::Feature) {
    std::vector<Tensor> parts;
    for (auto m : fusion_order(group.target)) parts.push_back(pooled(targets, m, variant.text_pooling));
    Tensor fused = l2_normalize(fusion_projection(group.target, params)(concat(parts, 1)));
    return matmul(q, transpose(fused));
  }
  Tensor total;
  for (auto m : group.target) {
    Tensor s = matmul(q, transpose(pooled(targets, m, variant.text_pooling)));
    total = total.defined() ? add(total, s) : s;
  }
  return scale(total, 1.0 / static_cast<double>(group.target.size()));
}

Tensor contrastive_loss(const Tensor& similarity, const Tensor& inverse_temperature) {
  if (similarity.rank() != 2 || similarity.dim(0) != similarity.dim(1)) {
    throw ContractError("contrastive_loss needs a square [B, B] similarity matrix, got " +
                        shape_string(similarity.shape()));
  }
  Tensor logits = mul_scalar(similarity, inverse_temperature);
  Tensor rows = mean(diagonal(log_softmax(logits, 1)));
  Tensor cols = mean(diagonal(log_softmax(logits, 0)));
  return scale(add(rows, cols), -0.5);
}

Tensor contrastive_loss(const Tensor& similarity, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
  return contrastive_loss(similarity, Tensor::scalar(1.0 / temperature));
}

Tensor mga_loss(const CommonEmbeddings& embeddings, const std::vector<ModalityGroup>& groups,
                const AlignmentParams& params, const AlignmentVariant& variant) {
  if (groups.empty()) throw ConfigError("at least one alignment group is required");
  for (const auto& g : groups) {
    for (Modality m : {Modality::Text, Modality::Vision, Modality::Audio}) {
      if (g.uses(m) && !embeddings.has(m)) {
        throw ConfigError("group " + g.name() + " needs modality " + std::string(1, modality_letter(m)) +
                          " which the batch lacks");
      }
    }
  }
  const Tensor inv_tau = params.inverse_temperature();
  Tensor total;
  for (const auto& g : groups) {
    Tensor l = contrastive_loss(group_similarity(embeddings, embeddings, g, params, variant), inv_tau);
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, 1.0 / static_cast<double>(groups.size()));
}

}  // namespace triad
