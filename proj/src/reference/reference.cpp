#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace falip::reference {

Mat naive_matmul(const Mat& a, const Mat& b) {
  const std::size_t m = a.size(), k = b.size(), n = b.empty() ? 0 : b[0].size();
  Mat c(m, Vec(n, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i][t] * b[t][j];
      c[i][j] = s;
    }
  return c;
}

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), Vec(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

Vec to_vec(const Tensor& t) { return Vec(t.data().begin(), t.data().end()); }

namespace {

Vec layer_norm_row(const Vec& x, const Tensor& gain, const Tensor& bias, double eps) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j)
    out[j] = (x[j] - mean) / std::sqrt(var + eps) * gain[j] + bias[j];
  return out;
}

Vec affine(const Vec& x, const Tensor& w, const Tensor& b) {
  const std::size_t in = w.rows(), out = w.cols();
  Vec y(out);
  for (std::size_t j = 0; j < out; ++j) {
    double s = b[j];
    for (std::size_t i = 0; i < in; ++i) s += x[i] * w(i, j);
    y[j] = s;
  }
  return y;
}

double activation(double x, Activation act) {
  if (act == Activation::Gelu) return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
  return x / (1.0 + std::exp(-1.702 * x));
}

Mat block(const Mat& x, const BlockWeights& w, int heads, Activation act, double eps,
          const Mat* bias, bool causal) {
  const std::size_t n = x.size(), d = x[0].size();
  const std::size_t hd = d / static_cast<std::size_t>(heads);
  Mat ln(n), q(n), k(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    ln[i] = layer_norm_row(x[i], w.ln1_gain, w.ln1_bias, eps);
    q[i] = affine(ln[i], w.wq, w.bq);
    k[i] = affine(ln[i], w.wk, w.bk);
    v[i] = affine(ln[i], w.wv, w.bv);
  }
  Mat ctx(n, Vec(d, 0.0));
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t visible = causal ? i + 1 : n;
      Vec logits(visible);
      for (std::size_t j = 0; j < visible; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += q[i][h * hd + c] * k[j][h * hd + c];
        logits[j] = s / std::sqrt(static_cast<double>(hd)) + (bias ? (*bias)[i][j] : 0.0);
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (std::size_t j = 0; j < visible; ++j)
        for (std::size_t c = 0; c < hd; ++c) ctx[i][h * hd + c] += logits[j] / z * v[j][h * hd + c];
    }
  }
  Mat out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec attn = affine(ctx[i], w.wo, w.bo);
    Vec mid(d);
    for (std::size_t j = 0; j < d; ++j) mid[j] = x[i][j] + attn[j];
    Vec hidden = affine(layer_norm_row(mid, w.ln2_gain, w.ln2_bias, eps), w.fc1_w, w.fc1_b);
    for (auto& hv : hidden) hv = activation(hv, act);
    const Vec mlp = affine(hidden, w.fc2_w, w.fc2_b);
    out[i].resize(d);
    for (std::size_t j = 0; j < d; ++j) out[i][j] = mid[j] + mlp[j];
  }
  return out;
}

Vec normalized(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

Mat embed(const ClipModel& model, const Tensor& pixels, std::span<const double> patch_scale) {
  const auto& cfg = model.config.vision;
  const auto& w = model.vision;
  const std::size_t side = static_cast<std::size_t>(cfg.image_side);
  const std::size_t p = static_cast<std::size_t>(cfg.patch);
  const std::size_t g = side / p, d = static_cast<std::size_t>(cfg.width);
  if (pixels.shape() != Shape{3, side, side}) throw std::invalid_argument("reference: pixel shape");
  Mat x(g * g + 1, Vec(d, 0.0));
  for (std::size_t j = 0; j < d; ++j) x[0][j] = w.cls_token[j] + w.pos_embed(0, j);
  for (std::size_t r = 0; r < g; ++r)
    for (std::size_t c = 0; c < g; ++c) {
      const std::size_t t = r * g + c;
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        std::size_t row = 0;
        for (std::size_t ch = 0; ch < 3; ++ch)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t xx = 0; xx < p; ++xx, ++row)
              s += pixels[(ch * side + r * p + y) * side + c * p + xx] * w.patch_embed(row, j);
        if (!patch_scale.empty()) s *= patch_scale[t];
        x[t + 1][j] = s + w.pos_embed(t + 1, j);
      }
    }
  for (auto& row : x) row = layer_norm_row(row, w.ln_pre_gain, w.ln_pre_bias, cfg.ln_eps);
  return x;
}

std::vector<Mat> run_layers(const ClipModel& model, Mat x, const std::optional<BiasSpec>& bias) {
  const auto& cfg = model.config.vision;
  std::vector<Mat> states{x};
  for (int l = 1; l <= cfg.layers; ++l) {
    const bool on = bias && l >= bias->first_layer && l <= bias->last_layer;
    x = block(x, model.vision.blocks[static_cast<std::size_t>(l - 1)], cfg.heads, cfg.activation,
              cfg.ln_eps, on ? &bias->bias : nullptr, false);
    states.push_back(x);
  }
  return states;
}

}  // namespace

std::vector<Mat> image_hidden_states(const ClipModel& model, const Tensor& pixels,
                                     const std::optional<BiasSpec>& bias) {
  return run_layers(model, embed(model, pixels, {}), bias);
}

Vec image_embedding(const ClipModel& model, const Tensor& pixels, const std::optional<BiasSpec>& bias,
                    std::span<const double> patch_scale) {
  const auto states = run_layers(model, embed(model, pixels, patch_scale), bias);
  const auto& w = model.vision;
  const Vec cls = layer_norm_row(states.back()[0], w.ln_post_gain, w.ln_post_bias,
                                 model.config.vision.ln_eps);
  Vec out(w.proj.cols(), 0.0);
  for (std::size_t j = 0; j < out.size(); ++j)
    for (std::size_t i = 0; i < cls.size(); ++i) out[j] += cls[i] * w.proj(i, j);
  return normalized(out);
}

Vec text_embedding(const ClipModel& model, std::span<const int> ids) {
  const auto& cfg = model.config.text;
  const auto& w = model.text;
  const std::size_t d = static_cast<std::size_t>(cfg.width);
  Mat x(ids.size(), Vec(d));
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      x[i][j] = w.token_embed(static_cast<std::size_t>(ids[i]), j) + w.pos_embed(i, j);
  for (const auto& b : w.blocks) x = block(x, b, cfg.heads, cfg.activation, cfg.ln_eps, nullptr, true);
  std::size_t pos = ids.size() - 1;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == cfg.eot_token) {
      pos = i;
      break;
    }
  }
  const Vec pooled = layer_norm_row(x[pos], w.ln_final_gain, w.ln_final_bias, cfg.ln_eps);
  Vec out(w.proj.cols(), 0.0);
  for (std::size_t j = 0; j < out.size(); ++j)
    for (std::size_t i = 0; i < d; ++i) out[j] += pooled[i] * w.proj(i, j);
  return normalized(out);
}

std::vector<Mat> depth_views(std::span<const Point3> points, std::size_t resolution) {
  double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
  for (const auto& p : points) {
    const double c[3] = {p.x, p.y, p.z};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], c[a]);
      hi[a] = std::max(hi[a], c[a]);
    }
  }
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  std::vector<std::array<double, 3>> unit;
  for (const auto& p : points) {
    const double c[3] = {p.x, p.y, p.z};
    std::array<double, 3> u{0.5, 0.5, 0.5};
    if (extent > 0)
      for (int a = 0; a < 3; ++a) u[a] = (c[a] - (lo[a] + hi[a]) / 2) / extent + 0.5;
    unit.push_back(u);
  }
  // (depth axis, depth sign, column axis, column flip, row axis, row flip)
  struct View { int da; bool dneg; int ca; bool cflip; int ra; bool rflip; };
  const View views[6] = {
      {0, false, 1, false, 2, true}, {0, true, 1, true, 2, true},
      {1, false, 0, true, 2, true},  {1, true, 0, false, 2, true},
      {2, false, 0, false, 1, true}, {2, true, 0, false, 1, false},
  };
  const auto res = static_cast<double>(resolution);
  std::vector<Mat> out;
  for (const auto& v : views) {
    Mat depth(resolution, Vec(resolution, 0.0));
    for (std::size_t r = 0; r < resolution; ++r)
      for (std::size_t c = 0; c < resolution; ++c)
        for (const auto& u : unit) {
          const double cu = v.cflip ? 1 - u[v.ca] : u[v.ca];
          const double rv = v.rflip ? 1 - u[v.ra] : u[v.ra];
          const auto pc = std::min(static_cast<std::size_t>(std::floor(cu * res)), resolution - 1);
          const auto pr = std::min(static_cast<std::size_t>(std::floor(rv * res)), resolution - 1);
          if (pc != c || pr != r) continue;
          const double dep = v.dneg ? 1 - u[v.da] : u[v.da];
          depth[r][c] = std::max(depth[r][c], dep);
        }
    out.push_back(std::move(depth));
  }
  return out;
}

double cosine(const Vec& a, const Vec& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double relative_error(const Vec& a, const Vec& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::sqrt(den);
}

}  // namespace falip::reference
