#include "falip/head_analysis.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "falip/errors.hpp"

namespace falip {

namespace {

const LayerTrace& layer_of(const RunTrace& trace, int layer) {
  if (layer < 1 || layer > static_cast<int>(trace.layers.size())) {
    throw ArgumentError("layer " + std::to_string(layer) + " outside [1, " +
                        std::to_string(trace.layers.size()) + "]");
  }
  return trace.layers[static_cast<std::size_t>(layer - 1)];
}

void require_compatible(const RunTrace& a, const RunTrace& b) {
  if (!(a.config == b.config) || a.layers.size() != b.layers.size()) {
    throw ArgumentError("traces come from different encoder configurations");
  }
  if (!a.layers.empty() && a.layers[0].input.shape() != b.layers[0].input.shape()) {
    throw ArgumentError("traces have different token counts");
  }
}

Tensor bias_share(const VisionWeights& w, const VisionConfig& cfg, int layer) {
  const auto& bo = w.blocks[static_cast<std::size_t>(layer - 1)].bo;
  return scale(bo, 1.0f / static_cast<float>(cfg.heads));
}

}  // namespace

Tensor token_contributions(const RunTrace& trace, const VisionWeights& w, int layer, int head) {
  const LayerTrace& lt = layer_of(trace, layer);
  const int heads = trace.config.heads;
  if (head < 0 || head >= heads) throw ArgumentError("head index out of range");
  if (w.blocks.size() != trace.layers.size()) throw ArgumentError("weights do not match trace depth");
  const auto& blk = w.blocks[static_cast<std::size_t>(layer - 1)];
  const auto hd = static_cast<std::size_t>(trace.config.head_dim());
  const auto off = static_cast<std::size_t>(head) * hd;

  Tensor bv_h({hd});
  for (std::size_t j = 0; j < hd; ++j) bv_h[j] = blk.bv[off + j];
  Tensor values = add_row_vector(matmul(lt.ln_input, slice_cols(blk.wv, off, hd)), bv_h);

  const std::size_t n = values.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const float gamma = lt.cls_attention(static_cast<std::size_t>(head), i);
    for (auto& x : values.row(i)) x *= gamma;
  }
  return matmul(values, slice_rows(blk.wo, off, hd));
}

std::vector<HeadContribution> decompose(const RunTrace& trace, const VisionWeights& w, int layer) {
  layer_of(trace, layer);
  const Tensor share = bias_share(w, trace.config, layer);
  std::vector<HeadContribution> out;
  for (int h = 0; h < trace.config.heads; ++h) {
    const Tensor p = token_contributions(trace, w, layer, h);
    Tensor g({p.cols()});
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) g[j] += p(i, j);
    out.push_back(HeadContribution{layer, h, add(g, share)});
  }
  return out;
}

Tensor sum_heads(const std::vector<HeadContribution>& heads) {
  if (heads.empty()) throw ArgumentError("sum_heads: no contributions");
  Tensor total(heads.front().g.shape());
  for (const auto& h : heads) total = add(total, h.g);
  return total;
}

DeltaReport delta_report(const RunTrace& prompted, const RunTrace& plain, const VisionWeights& w) {
  require_compatible(prompted, plain);
  DeltaReport report;
  for (int l = 1; l <= static_cast<int>(prompted.layers.size()); ++l) {
    const auto gp = decompose(prompted, w, l);
    const auto g0 = decompose(plain, w, l);
    for (std::size_t h = 0; h < gp.size(); ++h) {
      HeadDelta d;
      d.layer = l;
      d.head = static_cast<int>(h);
      d.delta = sub(gp[h].g, g0[h].g);
      d.magnitude = l2_norm(d.delta.data());
      report.entries.push_back(std::move(d));
    }
  }
  report.ranking.resize(report.entries.size());
  std::iota(report.ranking.begin(), report.ranking.end(), std::size_t{0});
  // Entries are already in (layer, head) order, so a stable sort keeps that
  // as the tie-break.
  std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](std::size_t a, std::size_t b) {
    return report.entries[a].magnitude > report.entries[b].magnitude;
  });
  for (std::size_t r = 0; r < report.ranking.size(); ++r) {
    report.entries[report.ranking[r]].rank = static_cast<int>(r + 1);
  }
  return report;
}

std::string delta_report_csv(const DeltaReport& report) {
  std::ostringstream os;
  os << "layer,head,delta_l2,rank\n";
  os << std::setprecision(9);
  for (const auto& e : report.entries) {
    os << e.layer << ',' << e.head << ',' << e.magnitude << ',' << e.rank << '\n';
  }
  return os.str();
}

Tensor unleash_delta(const std::vector<HeadContribution>& prompted,
                     const std::vector<HeadContribution>& plain, float gain) {
  if (prompted.size() != plain.size() || prompted.empty()) {
    throw ArgumentError("unleash_delta: head lists differ in length");
  }
  Tensor delta(prompted.front().g.shape());
  for (std::size_t h = 0; h < prompted.size(); ++h) delta = add(delta, sub(prompted[h].g, plain[h].g));
  return scale(delta, gain);
}

UnleashOptions default_unleash_options(const VisionConfig& cfg) {
  UnleashOptions opts;
  opts.layers = LayerRange::last_n(cfg.layers);
  return opts;
}

Tensor unleash(const VisionWeights& w, const RunTrace& prompted, const RunTrace& plain,
               const UnleashOptions& opts) {
  require_compatible(prompted, plain);
  const VisionConfig& cfg = prompted.config;
  const int depth = static_cast<int>(prompted.layers.size());
  if (depth != cfg.layers || w.blocks.size() != prompted.layers.size()) {
    throw ArgumentError("unleash: trace depth does not match weights");
  }
  if (!opts.layers.empty() && (opts.layers.first < 1 || opts.layers.last > depth)) {
    throw ArgumentError("unleash: layer range " + format_layer_range(opts.layers) +
                        " outside [1, " + std::to_string(depth) + "]");
  }

  std::vector<Tensor> offsets(static_cast<std::size_t>(depth));
  for (int l = 1; l <= depth; ++l) {
    if (!opts.layers.contains(l)) continue;
    offsets[static_cast<std::size_t>(l - 1)] =
        unleash_delta(decompose(prompted, w, l), decompose(plain, w, l), opts.gain);
  }

  const Tensor* bias = prompted.has_bias() ? &prompted.bias : nullptr;
  if (opts.mode == UnleashMode::Exact) {
    return run_image_layers(cfg, w, prompted.layers[0].input, bias, prompted.insert_layers, false,
                            offsets)
        .embedding;
  }

  const std::size_t d = static_cast<std::size_t>(cfg.width);
  Tensor cls({d}, std::vector<float>(prompted.layers[0].input.row(0).begin(),
                                     prompted.layers[0].input.row(0).end()));
  for (int l = 1; l <= depth; ++l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    const LayerTrace& lt = prompted.layers[idx];
    Tensor x = lt.input;
    std::copy(cls.data().begin(), cls.data().end(), x.row(0).begin());
    const Tensor* offset = offsets[idx].numel() != 0 ? &offsets[idx] : nullptr;
    const Tensor out = block_forward(x, w.blocks[idx], cfg.heads, cfg.activation, cfg.ln_eps,
                                     lt.biased ? bias : nullptr, false, nullptr, offset);
    std::copy(out.row(0).begin(), out.row(0).end(), cls.data().begin());
  }
  return project_image_cls(cfg, w, cls);
}

}  // namespace falip
