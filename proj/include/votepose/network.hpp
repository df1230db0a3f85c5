#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "votepose/common.hpp"
#include "votepose/point_cloud.hpp"
#include "votepose/pyramid.hpp"

namespace votepose {

// Edge-convolution network over the neighbor pyramid. The first layer sees
// only local differences (position and normal deltas); later layers add the
// query's own feature vector so spatial context can accumulate. Everything
// is templated on the scalar so gradient checks can run in double while
// production runs in float.

template <typename T>
struct LinearT {
  int in = 0;
  int out = 0;
  std::vector<T> w;  // out x in, row-major
  std::vector<T> b;  // out
};

template <typename T>
struct MlpT {
  std::vector<LinearT<T>> layers;  // ReLU between layers, none after the last
};

enum class ConvKind { Local, Spatial };

template <typename T>
struct EdgeConvLayerT {
  ConvKind kind = ConvKind::Local;
  LinearT<T> lin;  // per-edge map; ReLU applied before the neighbor max

  // Edge input width: Local = 6 (dp, dn); Spatial = 3 + C + C.
  int edge_dim() const { return lin.in; }
  int channels() const { return lin.out; }
};

struct NetworkConfig {
  int n_classes = 2;  // objects + background (id 0)
  std::vector<int> conv_widths = {64, 64, 128, 256};
  std::vector<int> head_hidden = {512, 256};
};

template <typename T>
struct NetworkModelT {
  std::vector<EdgeConvLayerT<T>> convs;
  MlpT<T> head_seg;
  MlpT<T> head_center;
  MlpT<T> head_top;
  NetworkConfig config;

  int layers() const { return int(convs.size()); }
};

template <typename T>
struct NetworkOutputT {
  int rows = 0;
  int n_classes = 0;
  std::vector<T> seg_logits;      // rows x n_classes
  std::vector<T> center_offsets;  // rows x 3, mm
  std::vector<T> top_offsets;     // rows x 3, mm
  std::vector<Vec3d> output_positions;
};

// Retained activations for backward: per-conv pooled features and argmax
// slots, per-head layer inputs, and the two concatenations.
template <typename T>
struct ForwardTraceT {
  std::vector<std::vector<T>> feats;        // feats[c]: layer c+1 pooled output
  std::vector<std::vector<int32_t>> argmax; // matching argmax slot per entry
  std::vector<std::vector<Vec3d>> positions; // positions[l]: pyramid layer l
  std::vector<T> cat1;                      // final feats ++ gathered previous
  std::vector<T> cat2;                      // cat1 ++ seg logits
  std::vector<std::vector<T>> seg_inputs;   // input of each head_seg linear
  std::vector<std::vector<T>> center_inputs;
  std::vector<std::vector<T>> top_inputs;
};

// Per-point training labels aligned with the network's output points.
struct PointLabels {
  std::vector<int32_t> class_id;     // 0 = background
  std::vector<Vec3d> center_offset;  // mm, ignored for background
  std::vector<Vec3d> top_offset;
  std::vector<double> visibility;    // [0,1]; background entries unused

  std::size_t size() const { return class_id.size(); }
};

template <typename T>
struct OutputGradsT {
  std::vector<T> seg_logits;
  std::vector<T> center_offsets;
  std::vector<T> top_offsets;
};

// Same shapes as the model's parameters.
template <typename T>
struct NetworkGradsT {
  NetworkModelT<T> g;
};

namespace detail {

template <typename T>
void mlp_shapes(MlpT<T>& mlp, int in, const std::vector<int>& hidden, int out) {
  mlp.layers.clear();
  int prev = in;
  for (int h : hidden) {
    mlp.layers.push_back(LinearT<T>{prev, h, std::vector<T>(std::size_t(h) * prev, T(0)),
                                    std::vector<T>(h, T(0))});
    prev = h;
  }
  mlp.layers.push_back(LinearT<T>{prev, out, std::vector<T>(std::size_t(out) * prev, T(0)),
                                  std::vector<T>(out, T(0))});
}

template <typename T>
void kaiming_fill(LinearT<T>& lin, Rng& rng) {
  double s = std::sqrt(6.0 / std::max(1, lin.in));
  for (auto& w : lin.w) w = T(rng.uniform(-s, s));
  // Small positive biases keep ReLU units alive and keep self-match edges
  // (whose pre-activation is exactly the bias) off the ReLU kink, where
  // finite-difference gradient checks are undefined.
  for (auto& b : lin.b) b = T(rng.uniform(0.01, 0.1));
}

}  // namespace detail

// Builds the parameter tensors for a config. cat1 width is the last conv
// width plus the preceding conv width (when there are at least two layers).
template <typename T>
NetworkModelT<T> make_network(const NetworkConfig& config) {
  if (config.n_classes < 2) throw ConfigError("network needs >= 2 classes");
  if (config.conv_widths.empty()) throw ConfigError("network needs >= 1 conv layer");
  NetworkModelT<T> model;
  model.config = config;
  int prev = 0;
  for (std::size_t c = 0; c < config.conv_widths.size(); ++c) {
    EdgeConvLayerT<T> layer;
    layer.kind = c == 0 ? ConvKind::Local : ConvKind::Spatial;
    int in = c == 0 ? 6 : 3 + 2 * prev;
    int out = config.conv_widths[c];
    if (out <= 0) throw ConfigError("conv widths must be > 0");
    layer.lin = LinearT<T>{in, out, std::vector<T>(std::size_t(out) * in, T(0)),
                           std::vector<T>(out, T(0))};
    model.convs.push_back(std::move(layer));
    prev = out;
  }
  int cat1 = config.conv_widths.back();
  if (config.conv_widths.size() >= 2)
    cat1 += config.conv_widths[config.conv_widths.size() - 2];
  detail::mlp_shapes(model.head_seg, cat1, config.head_hidden, config.n_classes);
  detail::mlp_shapes(model.head_center, cat1 + config.n_classes, config.head_hidden, 3);
  detail::mlp_shapes(model.head_top, cat1 + config.n_classes, config.head_hidden, 3);
  return model;
}

template <typename T>
NetworkModelT<T> init_network(const NetworkConfig& config, uint64_t seed) {
  NetworkModelT<T> model = make_network<T>(config);
  Rng rng(seed);
  for (auto& conv : model.convs) detail::kaiming_fill(conv.lin, rng);
  for (auto* head : {&model.head_seg, &model.head_center, &model.head_top})
    for (auto& lin : head->layers) detail::kaiming_fill(lin, rng);
  return model;
}

// Applies fn(name, tensor) to every parameter in a fixed order (weights then
// bias per linear). Used by the optimizer and the weights file.
template <typename Model, typename Fn>
void visit_params(Model& model, Fn&& fn) {
  for (std::size_t c = 0; c < model.convs.size(); ++c) {
    fn("conv" + std::to_string(c) + ".w", model.convs[c].lin.w);
    fn("conv" + std::to_string(c) + ".b", model.convs[c].lin.b);
  }
  auto visit_head = [&](const char* name, auto& head) {
    for (std::size_t l = 0; l < head.layers.size(); ++l) {
      std::string base = std::string(name) + "." + std::to_string(l);
      fn(base + ".w", head.layers[l].w);
      fn(base + ".b", head.layers[l].b);
    }
  };
  visit_head("head_seg", model.head_seg);
  visit_head("head_center", model.head_center);
  visit_head("head_top", model.head_top);
}

// One edge-convolution: for every query, run the per-edge linear + ReLU over
// its k neighbors and keep the channel-wise max. prev_feats is null for the
// Local kind (edges are position/normal differences only). argmax_out, when
// given, records the winning slot per (query, channel) for backward.
template <typename T>
void edge_conv_forward(const EdgeConvLayerT<T>& layer,
                       const std::vector<Vec3d>& prev_pos,
                       const std::vector<Vec3d>* prev_normals,
                       const std::vector<T>* prev_feats, int prev_channels,
                       const std::vector<int32_t>& queries,
                       const std::vector<int32_t>& table, int k,
                       std::vector<T>& out, std::vector<int32_t>* argmax_out) {
  const int out_ch = layer.channels();
  const int in_dim = layer.edge_dim();
  const std::size_t m = queries.size();
  if (table.size() != m * std::size_t(k))
    throw ConfigError("neighbor table size does not match queries * k");
  if (layer.kind == ConvKind::Local) {
    if (!prev_normals) throw ConfigError("Local edge conv requires normals");
    if (in_dim != 6) throw ConfigError("Local edge conv input width must be 6");
  } else {
    if (!prev_feats) throw ConfigError("Spatial edge conv requires features");
    if (in_dim != 3 + 2 * prev_channels)
      throw ConfigError("Spatial edge conv input width mismatch");
  }
  out.assign(m * std::size_t(out_ch), T(0));
  if (argmax_out) argmax_out->assign(m * std::size_t(out_ch), 0);
  parallel_for(m, [&](std::size_t qi) {
    const int32_t i = queries[qi];
    std::vector<T> edge(static_cast<std::size_t>(in_dim));
    std::vector<T> best(std::size_t(out_ch), T(0));
    std::vector<int32_t> best_slot(std::size_t(out_ch), 0);
    bool first = true;
    for (int s = 0; s < k; ++s) {
      const int32_t j = table[qi * std::size_t(k) + s];
      const Vec3d dp = prev_pos[j] - prev_pos[i];
      edge[0] = T(dp.x());
      edge[1] = T(dp.y());
      edge[2] = T(dp.z());
      if (layer.kind == ConvKind::Local) {
        const Vec3d dn = (*prev_normals)[j] - (*prev_normals)[i];
        edge[3] = T(dn.x());
        edge[4] = T(dn.y());
        edge[5] = T(dn.z());
      } else {
        const T* xi = prev_feats->data() + std::size_t(i) * prev_channels;
        const T* xj = prev_feats->data() + std::size_t(j) * prev_channels;
        for (int c = 0; c < prev_channels; ++c) {
          edge[3 + c] = xi[c];
          edge[3 + prev_channels + c] = xj[c] - xi[c];
        }
      }
      for (int o = 0; o < out_ch; ++o) {
        const T* wr = layer.lin.w.data() + std::size_t(o) * in_dim;
        T z = layer.lin.b[o];
        for (int d = 0; d < in_dim; ++d) z += wr[d] * edge[d];
        if (z < T(0)) z = T(0);
        if (first || z > best[o]) {
          best[o] = z;
          best_slot[o] = s;
        }
      }
      first = false;
    }
    std::copy(best.begin(), best.end(), out.begin() + qi * std::size_t(out_ch));
    if (argmax_out)
      std::copy(best_slot.begin(), best_slot.end(),
                argmax_out->begin() + qi * std::size_t(out_ch));
  });
}

namespace detail {

template <typename T>
std::vector<T> mlp_forward(const MlpT<T>& mlp, const std::vector<T>& input,
                           std::size_t rows, std::vector<std::vector<T>>* inputs) {
  std::vector<T> x = input;
  if (inputs) inputs->clear();
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const LinearT<T>& lin = mlp.layers[l];
    if (x.size() != rows * std::size_t(lin.in))
      throw ConfigError("MLP input width mismatch");
    if (inputs) inputs->push_back(x);
    std::vector<T> y(rows * std::size_t(lin.out));
    const bool relu = l + 1 < mlp.layers.size();
    parallel_for(rows, [&](std::size_t r) {
      const T* xr = x.data() + r * std::size_t(lin.in);
      T* yr = y.data() + r * std::size_t(lin.out);
      for (int o = 0; o < lin.out; ++o) {
        const T* wr = lin.w.data() + std::size_t(o) * lin.in;
        T z = lin.b[o];
        for (int d = 0; d < lin.in; ++d) z += wr[d] * xr[d];
        yr[o] = relu && z < T(0) ? T(0) : z;
      }
    });
    x = std::move(y);
  }
  return x;
}

// Backward through an MLP given the stored layer inputs. Accumulates weight
// gradients into gmlp and returns the gradient w.r.t. the MLP input.
template <typename T>
std::vector<T> mlp_backward(const MlpT<T>& mlp, MlpT<T>& gmlp,
                            const std::vector<std::vector<T>>& inputs,
                            std::size_t rows, std::vector<T> gout) {
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    const LinearT<T>& lin = mlp.layers[li];
    LinearT<T>& glin = gmlp.layers[li];
    const std::vector<T>& x = inputs[li];
    const bool relu = li + 1 < mlp.layers.size();
    if (relu) {
      // Recompute the pre-activation sign to gate the gradient.
      for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * std::size_t(lin.in);
        T* gr = gout.data() + r * std::size_t(lin.out);
        for (int o = 0; o < lin.out; ++o) {
          const T* wr = lin.w.data() + std::size_t(o) * lin.in;
          T z = lin.b[o];
          for (int d = 0; d < lin.in; ++d) z += wr[d] * xr[d];
          if (z <= T(0)) gr[o] = T(0);
        }
      }
    }
    std::vector<T> gx(rows * std::size_t(lin.in), T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = x.data() + r * std::size_t(lin.in);
      const T* gr = gout.data() + r * std::size_t(lin.out);
      T* gxr = gx.data() + r * std::size_t(lin.in);
      for (int o = 0; o < lin.out; ++o) {
        const T g = gr[o];
        if (g == T(0)) continue;
        T* gwr = glin.w.data() + std::size_t(o) * lin.in;
        const T* wr = lin.w.data() + std::size_t(o) * lin.in;
        glin.b[o] += g;
        for (int d = 0; d < lin.in; ++d) {
          gwr[d] += g * xr[d];
          gxr[d] += g * wr[d];
        }
      }
    }
    gout = std::move(gx);
  }
  return gout;
}

}  // namespace detail

// Per-layer point positions: layer 0 is the cloud, each later layer gathers
// its query points from the one below. Split out so the model-input
// preparation can be timed or reused separately from the conv stack.
inline std::vector<std::vector<Vec3d>> gather_layer_positions(
    const PointCloud& cloud, const NeighborPyramid& pyr) {
  const std::size_t L = pyr.query_indices.size();
  std::vector<std::vector<Vec3d>> positions(L + 1);
  positions[0] = cloud.positions;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& queries = pyr.query_indices[l];
    positions[l + 1].resize(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
      positions[l + 1][i] = positions[l][std::size_t(queries[i])];
  }
  return positions;
}

// Full forward pass over the pyramid. The final layer's features are
// concatenated with the previous layer's features at the same points, the
// segmentation head runs on that, and its logits are appended before the
// offset heads run. This overload takes the gathered per-layer positions.
template <typename T>
NetworkOutputT<T> forward(const NetworkModelT<T>& model, const PointCloud& cloud,
                          const NeighborPyramid& pyr,
                          std::vector<std::vector<Vec3d>> positions,
                          ForwardTraceT<T>* trace = nullptr) {
  const int L = model.layers();
  if (pyr.layers() != L + 1)
    throw ConfigError("pyramid layer count does not match network depth");
  if (!cloud.has_normals()) throw ConfigError("forward requires normals");
  if (int(cloud.size()) != pyr.layer_sizes[0])
    throw ConfigError("cloud size does not match pyramid base layer");
  if (positions.size() != std::size_t(L) + 1 ||
      positions[0].size() != cloud.positions.size())
    throw ConfigError("layer positions do not match the pyramid");

  std::vector<std::vector<T>> feats(static_cast<std::size_t>(L));
  std::vector<std::vector<int32_t>> argmax(static_cast<std::size_t>(L));
  for (int c = 0; c < L; ++c) {
    const std::vector<T>* prev = c > 0 ? &feats[c - 1] : nullptr;
    const int prev_ch = c > 0 ? model.convs[c - 1].channels() : 0;
    edge_conv_forward(model.convs[c], positions[c],
                      c == 0 ? &cloud.normals : nullptr, prev, prev_ch,
                      pyr.query_indices[c], pyr.neighbor_tables[c], pyr.k,
                      feats[c], trace ? &argmax[c] : nullptr);
  }

  const std::size_t rows = positions[L].size();
  const int last_ch = model.convs[L - 1].channels();
  std::vector<T> cat1;
  if (L >= 2) {
    const int prev_ch = model.convs[L - 2].channels();
    cat1.resize(rows * std::size_t(last_ch + prev_ch));
    const auto& queries = pyr.query_indices[L - 1];
    for (std::size_t r = 0; r < rows; ++r) {
      T* dst = cat1.data() + r * std::size_t(last_ch + prev_ch);
      std::copy_n(feats[L - 1].data() + r * std::size_t(last_ch), last_ch, dst);
      std::copy_n(feats[L - 2].data() + std::size_t(queries[r]) * prev_ch, prev_ch,
                  dst + last_ch);
    }
  } else {
    cat1 = feats[0];
  }

  NetworkOutputT<T> out;
  out.rows = int(rows);
  out.n_classes = model.config.n_classes;
  out.output_positions = positions[L];
  out.seg_logits = detail::mlp_forward(model.head_seg, cat1, rows,
                                       trace ? &trace->seg_inputs : nullptr);

  const int cat1_ch = int(cat1.size() / rows);
  const int cat2_ch = cat1_ch + out.n_classes;
  std::vector<T> cat2(rows * std::size_t(cat2_ch));
  for (std::size_t r = 0; r < rows; ++r) {
    T* dst = cat2.data() + r * std::size_t(cat2_ch);
    std::copy_n(cat1.data() + r * std::size_t(cat1_ch), cat1_ch, dst);
    std::copy_n(out.seg_logits.data() + r * std::size_t(out.n_classes),
                out.n_classes, dst + cat1_ch);
  }
  out.center_offsets = detail::mlp_forward(model.head_center, cat2, rows,
                                           trace ? &trace->center_inputs : nullptr);
  out.top_offsets = detail::mlp_forward(model.head_top, cat2, rows,
                                        trace ? &trace->top_inputs : nullptr);

  if (trace) {
    trace->feats = std::move(feats);
    trace->argmax = std::move(argmax);
    trace->positions = std::move(positions);
    trace->cat1 = std::move(cat1);
    trace->cat2 = std::move(cat2);
  }
  return out;
}

template <typename T>
NetworkOutputT<T> forward(const NetworkModelT<T>& model, const PointCloud& cloud,
                          const NeighborPyramid& pyr,
                          ForwardTraceT<T>* trace = nullptr) {
  return forward(model, cloud, pyr, gather_layer_positions(cloud, pyr), trace);
}

// Mean per-point contributions of the three loss terms; their sum equals
// the total loss up to floating-point association.
struct LossParts {
  double seg = 0, center = 0, top = 0;

  double total() const { return seg + center + top; }
};

// Weighted segmentation + offset loss. Per point:
//   weight * (CE(seg) + [foreground] * (L1(center) + L1(top)))
// with weight = class_weight * 2 - visibility, background visibility fixed
// at 1. Total is the mean over points, accumulated in double. Gradients
// w.r.t. the network outputs are written to *grads when given.
template <typename T>
double loss(const NetworkOutputT<T>& out, const PointLabels& labels,
            const std::vector<double>& class_weights,
            OutputGradsT<T>* grads = nullptr, LossParts* parts = nullptr) {
  const std::size_t n = std::size_t(out.rows);
  const int nc = out.n_classes;
  if (labels.size() != n) throw ConfigError("labels do not match output rows");
  if (int(class_weights.size()) != nc)
    throw ConfigError("class weight count does not match classes");
  if (grads) {
    grads->seg_logits.assign(n * std::size_t(nc), T(0));
    grads->center_offsets.assign(n * 3, T(0));
    grads->top_offsets.assign(n * 3, T(0));
  }
  double total = 0;
  double seg_sum = 0, center_sum = 0, top_sum = 0;
  std::vector<double> prob(static_cast<std::size_t>(nc));
  for (std::size_t i = 0; i < n; ++i) {
    const int32_t cls = labels.class_id[i];
    if (cls < 0 || cls >= nc) throw DataError("label class id out of range");
    const double vis = cls == 0 ? 1.0 : labels.visibility[i];
    if (vis < 0.0 || vis > 1.0) throw DataError("label visibility outside [0,1]");
    const double weight = class_weights[cls] * 2.0 - vis;

    const T* logits = out.seg_logits.data() + i * std::size_t(nc);
    double maxv = double(logits[0]);
    for (int c = 1; c < nc; ++c) maxv = std::max(maxv, double(logits[c]));
    double denom = 0;
    for (int c = 0; c < nc; ++c) {
      prob[c] = std::exp(double(logits[c]) - maxv);
      denom += prob[c];
    }
    for (int c = 0; c < nc; ++c) prob[c] /= denom;
    double point_loss = -std::log(std::max(prob[cls], 1e-300));
    seg_sum += weight * point_loss;

    if (cls != 0) {
      const T* co = out.center_offsets.data() + i * 3;
      const T* to = out.top_offsets.data() + i * 3;
      double l1_center = 0, l1_top = 0;
      for (int d = 0; d < 3; ++d) {
        double dc = std::abs(double(co[d]) - labels.center_offset[i][d]);
        double dt = std::abs(double(to[d]) - labels.top_offset[i][d]);
        point_loss += dc;
        point_loss += dt;
        l1_center += dc;
        l1_top += dt;
      }
      center_sum += weight * l1_center;
      top_sum += weight * l1_top;
    }
    total += weight * point_loss;

    if (grads) {
      const double inv_n = 1.0 / double(n);
      T* gs = grads->seg_logits.data() + i * std::size_t(nc);
      for (int c = 0; c < nc; ++c)
        gs[c] = T(weight * inv_n * (prob[c] - (c == cls ? 1.0 : 0.0)));
      if (cls != 0) {
        const T* co = out.center_offsets.data() + i * 3;
        const T* to = out.top_offsets.data() + i * 3;
        T* gc = grads->center_offsets.data() + i * 3;
        T* gt = grads->top_offsets.data() + i * 3;
        for (int d = 0; d < 3; ++d) {
          double dc = double(co[d]) - labels.center_offset[i][d];
          double dt = double(to[d]) - labels.top_offset[i][d];
          gc[d] = T(weight * inv_n * (dc > 0 ? 1.0 : dc < 0 ? -1.0 : 0.0));
          gt[d] = T(weight * inv_n * (dt > 0 ? 1.0 : dt < 0 ? -1.0 : 0.0));
        }
      }
    }
  }
  if (parts) {
    parts->seg = seg_sum / double(n);
    parts->center = center_sum / double(n);
    parts->top = top_sum / double(n);
  }
  return total / double(n);
}

// Exact gradients for every parameter given gradients w.r.t. the outputs.
// Max-pool routes to the recorded argmax slot; the edge vector is rebuilt
// there instead of being stored. Runs single-threaded: gradient scatter
// into shared rows would race.
template <typename T>
NetworkGradsT<T> backward(const NetworkModelT<T>& model, const PointCloud& cloud,
                          const NeighborPyramid& pyr, const ForwardTraceT<T>& trace,
                          const OutputGradsT<T>& gout) {
  const int L = model.layers();
  NetworkGradsT<T> grads{make_network<T>(model.config)};
  const std::size_t rows = trace.positions[std::size_t(L)].size();
  const int nc = model.config.n_classes;
  const int cat1_ch = int(trace.cat1.size() / rows);

  std::vector<T> gcat2 = detail::mlp_backward(model.head_center, grads.g.head_center,
                                              trace.center_inputs, rows,
                                              gout.center_offsets);
  {
    std::vector<T> gtop = detail::mlp_backward(model.head_top, grads.g.head_top,
                                               trace.top_inputs, rows,
                                               gout.top_offsets);
    for (std::size_t i = 0; i < gcat2.size(); ++i) gcat2[i] += gtop[i];
  }

  std::vector<T> gcat1(rows * std::size_t(cat1_ch), T(0));
  std::vector<T> gseg(rows * std::size_t(nc));
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = gcat2.data() + r * std::size_t(cat1_ch + nc);
    std::copy_n(src, cat1_ch, gcat1.data() + r * std::size_t(cat1_ch));
    for (int c = 0; c < nc; ++c)
      gseg[r * std::size_t(nc) + c] =
          src[cat1_ch + c] + gout.seg_logits[r * std::size_t(nc) + c];
  }
  {
    std::vector<T> gs = detail::mlp_backward(model.head_seg, grads.g.head_seg,
                                             trace.seg_inputs, rows, std::move(gseg));
    for (std::size_t i = 0; i < gcat1.size(); ++i) gcat1[i] += gs[i];
  }

  // Split cat1 into the final conv's gradient and a scatter into the
  // previous layer's features.
  std::vector<std::vector<T>> gfeats(static_cast<std::size_t>(L));
  for (int c = 0; c < L; ++c)
    gfeats[c].assign(trace.feats[c].size(), T(0));
  const int last_ch = model.convs[L - 1].channels();
  if (L >= 2) {
    const int prev_ch = model.convs[L - 2].channels();
    const auto& queries = pyr.query_indices[L - 1];
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = gcat1.data() + r * std::size_t(last_ch + prev_ch);
      T* dst = gfeats[L - 1].data() + r * std::size_t(last_ch);
      for (int c = 0; c < last_ch; ++c) dst[c] += src[c];
      T* prev = gfeats[L - 2].data() + std::size_t(queries[r]) * prev_ch;
      for (int c = 0; c < prev_ch; ++c) prev[c] += src[last_ch + c];
    }
  } else {
    gfeats[0] = gcat1;
  }

  std::vector<T> edge;
  for (int c = L - 1; c >= 0; --c) {
    const EdgeConvLayerT<T>& layer = model.convs[c];
    LinearT<T>& glin = grads.g.convs[c].lin;
    const int in_dim = layer.edge_dim();
    const int out_ch = layer.channels();
    const int prev_ch = c > 0 ? model.convs[c - 1].channels() : 0;
    const auto& queries = pyr.query_indices[c];
    const auto& table = pyr.neighbor_tables[c];
    const auto& pos = trace.positions[c];
    edge.resize(std::size_t(in_dim));
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
      const int32_t i = queries[qi];
      for (int o = 0; o < out_ch; ++o) {
        const T g = gfeats[c][qi * std::size_t(out_ch) + o];
        if (g == T(0)) continue;
        // Pooled output 0 means the winning pre-activation was clamped.
        if (trace.feats[c][qi * std::size_t(out_ch) + o] <= T(0)) continue;
        const int32_t s = trace.argmax[c][qi * std::size_t(out_ch) + o];
        const int32_t j = table[qi * std::size_t(pyr.k) + s];
        const Vec3d dp = pos[j] - pos[i];
        edge[0] = T(dp.x());
        edge[1] = T(dp.y());
        edge[2] = T(dp.z());
        if (layer.kind == ConvKind::Local) {
          const Vec3d dn = cloud.normals[j] - cloud.normals[i];
          edge[3] = T(dn.x());
          edge[4] = T(dn.y());
          edge[5] = T(dn.z());
        } else {
          const T* xi = trace.feats[c - 1].data() + std::size_t(i) * prev_ch;
          const T* xj = trace.feats[c - 1].data() + std::size_t(j) * prev_ch;
          for (int d = 0; d < prev_ch; ++d) {
            edge[3 + d] = xi[d];
            edge[3 + prev_ch + d] = xj[d] - xi[d];
          }
        }
        T* gwr = glin.w.data() + std::size_t(o) * in_dim;
        const T* wr = layer.lin.w.data() + std::size_t(o) * in_dim;
        glin.b[o] += g;
        for (int d = 0; d < in_dim; ++d) gwr[d] += g * edge[d];
        if (layer.kind == ConvKind::Spatial) {
          T* gxi = gfeats[c - 1].data() + std::size_t(i) * prev_ch;
          T* gxj = gfeats[c - 1].data() + std::size_t(j) * prev_ch;
          for (int d = 0; d < prev_ch; ++d) {
            gxi[d] += g * (wr[3 + d] - wr[3 + prev_ch + d]);
            gxj[d] += g * wr[3 + prev_ch + d];
          }
        }
      }
    }
  }
  return grads;
}

// Adam with bias correction; moments stored per parameter tensor.
template <typename T>
struct AdamStateT {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  int64_t t = 0;
};

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
void adam_step(NetworkModelT<T>& model, NetworkGradsT<T>& grads,
               AdamStateT<T>& state, const AdamParams& params = {}) {
  std::vector<std::vector<T>*> tensors;
  visit_params(model, [&](const std::string&, std::vector<T>& t) {
    tensors.push_back(&t);
  });
  std::vector<std::vector<T>*> gtensors;
  visit_params(grads.g, [&](const std::string&, std::vector<T>& t) {
    gtensors.push_back(&t);
  });
  if (tensors.size() != gtensors.size())
    throw InternalError("gradient structure does not match model");
  if (state.m.empty()) {
    state.m.resize(tensors.size());
    state.v.resize(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      state.m[i].assign(tensors[i]->size(), 0.0);
      state.v[i].assign(tensors[i]->size(), 0.0);
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(params.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(params.beta2, double(state.t));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& w = *tensors[i];
    auto& g = *gtensors[i];
    if (w.size() != g.size()) throw InternalError("gradient tensor size mismatch");
    for (std::size_t j = 0; j < w.size(); ++j) {
      double gj = double(g[j]);
      state.m[i][j] = params.beta1 * state.m[i][j] + (1 - params.beta1) * gj;
      state.v[i][j] = params.beta2 * state.v[i][j] + (1 - params.beta2) * gj * gj;
      double mhat = state.m[i][j] / bc1;
      double vhat = state.v[i][j] / bc2;
      w[j] = T(double(w[j]) - params.lr * mhat / (std::sqrt(vhat) + params.eps));
    }
  }
}

using NetworkModel = NetworkModelT<float>;
using NetworkOutput = NetworkOutputT<float>;
using ForwardTrace = ForwardTraceT<float>;
using OutputGrads = OutputGradsT<float>;
using NetworkGrads = NetworkGradsT<float>;
using AdamState = AdamStateT<float>;

}  // namespace votepose
