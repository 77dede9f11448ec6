#include "fslab/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace fslab::ag {
namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t* t_mac_counter = nullptr;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void require_scalar(const Tensor& t, const char* what) {
  if (t.size() != 1) throw ContractError(std::string(what) + ": expected a single value");
}

// Separable linear resampling: output index -> (input index, weight) taps.
struct Tap {
  int src;
  double weight;
};
using AxisTaps = std::vector<std::vector<Tap>>;

AxisTaps bilinear_taps(int in, int out) {
  AxisTaps taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int o = 0; o < out; ++o) {
    double src = ratio * (o + 0.5) - 0.5;
    if (src < 0.0) src = 0.0;
    const int i0 = std::min(static_cast<int>(src), in - 1);
    const int i1 = i0 < in - 1 ? i0 + 1 : i0;
    const double l1 = src - i0;
    if (i1 == i0) {
      taps[o].push_back({i0, 1.0});
    } else {
      taps[o].push_back({i0, 1.0 - l1});
      taps[o].push_back({i1, l1});
    }
  }
  return taps;
}

AxisTaps adaptive_pool_taps(int in, int out) {
  AxisTaps taps(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    const int start = (o * in) / out;
    const int end = ((o + 1) * in + out - 1) / out;
    const double w = 1.0 / static_cast<double>(end - start);
    for (int i = start; i < end; ++i) taps[o].push_back({i, w});
  }
  return taps;
}

Tensor resample_forward(const Tensor& x, const AxisTaps& ty, const AxisTaps& tx) {
  const int c = x.channels(), h = x.height(), out_h = static_cast<int>(ty.size()),
            out_w = static_cast<int>(tx.size());
  Tensor rows(c, h, out_w);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int ox = 0; ox < out_w; ++ox) {
        double acc = 0.0;
        for (const Tap& t : tx[ox]) acc += t.weight * x.at(ch, y, t.src);
        rows.at(ch, y, ox) = acc;
      }
    }
  }
  Tensor out(c, out_h, out_w);
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (const Tap& t : ty[oy]) {
        const double* src = rows.channel(ch) + static_cast<std::size_t>(t.src) * out_w;
        double* dst = out.channel(ch) + static_cast<std::size_t>(oy) * out_w;
        for (int ox = 0; ox < out_w; ++ox) dst[ox] += t.weight * src[ox];
      }
    }
  }
  return out;
}

Tensor resample_backward(const Tensor& g, const Shape& in_shape, const AxisTaps& ty,
                         const AxisTaps& tx) {
  const int c = in_shape.c, h = in_shape.h, w = in_shape.w;
  const int out_h = static_cast<int>(ty.size()), out_w = static_cast<int>(tx.size());
  Tensor rows(c, h, out_w);
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < out_h; ++oy) {
      const double* src = g.channel(ch) + static_cast<std::size_t>(oy) * out_w;
      for (const Tap& t : ty[oy]) {
        double* dst = rows.channel(ch) + static_cast<std::size_t>(t.src) * out_w;
        for (int ox = 0; ox < out_w; ++ox) dst[ox] += t.weight * src[ox];
      }
    }
  }
  Tensor dx(c, h, w);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int ox = 0; ox < out_w; ++ox) {
        const double v = rows.at(ch, y, ox);
        for (const Tap& t : tx[ox]) dx.at(ch, y, t.src) += t.weight * v;
      }
    }
  }
  return dx;
}

Var resample(const Var& x, AxisTaps ty, AxisTaps tx) {
  Tensor out = resample_forward(x.value(), ty, tx);
  const Shape in_shape = x.shape();
  return make_result(std::move(out), {x},
                     [in_shape, ty = std::move(ty), tx = std::move(tx)](
                         const Tensor& g, std::span<const NodePtr> p) {
                       accumulate_grad(*p[0], resample_backward(g, in_shape, ty, tx));
                     });
}

// Unfolds x into a (in * k * k) x (out_h * out_w) patch matrix.
void im2col(const Tensor& x, int k, int stride, int pad, int out_h, int out_w, double* cols) {
  const int c = x.channels(), h = x.height(), w = x.width();
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = x.channel(ci);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int k, int stride, int pad, int out_h, int out_w, Tensor& dx) {
  const int c = dx.channels(), h = dx.height(), w = dx.width();
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  for (int ci = 0; ci < c; ++ci) {
    double* plane = dx.channel(ci);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * out_w;
          double* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (t_grad_enabled) {
    const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Var& v) { return v.requires_grad(); });
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& v : inputs) node->parents.push_back(v.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Var(std::move(node));
}

void accumulate_grad(Node& node, const Tensor& g) {
  if (!node.requires_grad) return;
  if (node.grad.empty()) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void backward(const Var& loss) {
  require_scalar(loss.value(), "backward");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  accumulate_grad(*loss.node(), Tensor(loss.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(node->grad, node->parents);
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

MacCounter::MacCounter() : previous_(t_mac_counter) { t_mac_counter = &macs_; }
MacCounter::~MacCounter() {
  t_mac_counter = previous_;
  if (previous_) *previous_ += macs_;
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != xs.c || ws.w != kernel * kernel) {
    throw ContractError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str() +
                        " and kernel " + std::to_string(kernel));
  }
  if (bias.defined() && !(bias.shape() == Shape{ws.c, 1, 1})) {
    throw ContractError("conv2d: bias shape " + bias.shape().str());
  }
  const int out_c = ws.c;
  const int out_h = (xs.h + 2 * pad - kernel) / stride + 1;
  const int out_w = (xs.w + 2 * pad - kernel) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw ContractError("conv2d: empty output for input " + xs.str());
  const int patch = xs.c * kernel * kernel;
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  const bool pointwise = kernel == 1 && stride == 1 && pad == 0;

  if (t_mac_counter) *t_mac_counter += static_cast<std::uint64_t>(out_c) * patch * n;

  auto cols = std::make_shared<std::vector<double>>();
  const double* col_data = x.value().data();
  if (!pointwise) {
    cols->resize(static_cast<std::size_t>(patch) * n);
    im2col(x.value(), kernel, stride, pad, out_h, out_w, cols->data());
    col_data = cols->data();
  }

  Tensor out(out_c, out_h, out_w);
  {
    ConstMatMap w(weight.value().data(), out_c, patch);
    ConstMatMap c(col_data, patch, static_cast<Eigen::Index>(n));
    MatMap o(out.data(), out_c, static_cast<Eigen::Index>(n));
    o.noalias() = w * c;
    if (bias.defined()) {
      for (int oc = 0; oc < out_c; ++oc) o.row(oc).array() += bias.value()[oc];
    }
  }

  std::vector<Var> inputs{x, weight};
  const bool has_bias = bias.defined();
  if (has_bias) inputs.push_back(bias);
  if (!t_grad_enabled || !(x.requires_grad() || weight.requires_grad() || bias.requires_grad())) {
    return make_result(std::move(out), std::move(inputs), nullptr);
  }
  return make_result(
      std::move(out), std::move(inputs),
      [=](const Tensor& g, std::span<const NodePtr> p) {
        const double* cd = pointwise ? p[0]->value.data() : cols->data();
        ConstMatMap go(g.data(), out_c, static_cast<Eigen::Index>(n));
        ConstMatMap c(cd, patch, static_cast<Eigen::Index>(n));
        if (p[1]->requires_grad) {
          Tensor gw(ws);
          MatMap(gw.data(), out_c, patch).noalias() = go * c.transpose();
          accumulate_grad(*p[1], gw);
        }
        if (has_bias && p[2]->requires_grad) {
          Tensor gb(out_c, 1, 1);
          for (int oc = 0; oc < out_c; ++oc) gb[oc] = go.row(oc).sum();
          accumulate_grad(*p[2], gb);
        }
        if (p[0]->requires_grad) {
          ConstMatMap w(p[1]->value.data(), out_c, patch);
          Tensor dx(xs);
          if (pointwise) {
            MatMap(dx.data(), patch, static_cast<Eigen::Index>(n)).noalias() = w.transpose() * go;
          } else {
            std::vector<double> dcols(static_cast<std::size_t>(patch) * n);
            MatMap(dcols.data(), patch, static_cast<Eigen::Index>(n)).noalias() =
                w.transpose() * go;
            col2im(dcols.data(), kernel, stride, pad, out_h, out_w, dx);
          }
          accumulate_grad(*p[0], dx);
        }
      });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(out), {x}, [](const Tensor& g, std::span<const NodePtr> p) {
    Tensor dx(g.shape());
    const Tensor& in = p[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = in[i] > 0.0 ? g[i] : 0.0;
    accumulate_grad(*p[0], dx);
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  auto saved = std::make_shared<Tensor>(out);
  return make_result(std::move(out), {x}, [saved](const Tensor& g, std::span<const NodePtr> p) {
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = (*saved)[i];
      dx[i] = g[i] * s * (1.0 - s);
    }
    accumulate_grad(*p[0], dx);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [](const Tensor& g, std::span<const NodePtr> p) {
    accumulate_grad(*p[0], g);
    accumulate_grad(*p[1], g);
  });
}

Var add(std::span<const Var> terms) {
  if (terms.empty()) throw ContractError("add: no terms");
  Tensor out = terms[0].value();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    require_same_shape(out.shape(), terms[i].shape(), "add");
    out += terms[i].value();
  }
  return make_result(std::move(out), std::vector<Var>(terms.begin(), terms.end()),
                     [](const Tensor& g, std::span<const NodePtr> p) {
                       for (const auto& node : p) accumulate_grad(*node, g);
                     });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](const Tensor& g, std::span<const NodePtr> p) {
    if (p[0]->requires_grad) {
      Tensor da(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * p[1]->value[i];
      accumulate_grad(*p[0], da);
    }
    if (p[1]->requires_grad) {
      Tensor db(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * p[0]->value[i];
      accumulate_grad(*p[1], db);
    }
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  out *= s;
  return make_result(std::move(out), {x}, [s](const Tensor& g, std::span<const NodePtr> p) {
    Tensor dx = g;
    dx *= s;
    accumulate_grad(*p[0], dx);
  });
}

Var channel_scale(const Var& x, const Var& v) {
  const Shape xs = x.shape();
  if (!(v.shape() == Shape{xs.c, 1, 1})) {
    throw ContractError("channel_scale: vector " + v.shape().str() + " for input " + xs.str());
  }
  const std::size_t plane = xs.plane();
  Tensor out = x.value();
  for (int c = 0; c < xs.c; ++c) {
    double* d = out.channel(c);
    const double s = v.value()[c];
    for (std::size_t i = 0; i < plane; ++i) d[i] *= s;
  }
  return make_result(std::move(out), {x, v},
                     [xs, plane](const Tensor& g, std::span<const NodePtr> p) {
                       if (p[0]->requires_grad) {
                         Tensor dx(xs);
                         for (int c = 0; c < xs.c; ++c) {
                           const double s = p[1]->value[c];
                           for (std::size_t i = 0; i < plane; ++i)
                             dx.channel(c)[i] = g.channel(c)[i] * s;
                         }
                         accumulate_grad(*p[0], dx);
                       }
                       if (p[1]->requires_grad) {
                         Tensor dv(xs.c, 1, 1);
                         for (int c = 0; c < xs.c; ++c) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < plane; ++i)
                             acc += g.channel(c)[i] * p[0]->value.channel(c)[i];
                           dv[c] = acc;
                         }
                         accumulate_grad(*p[1], dv);
                       }
                     });
}

Var global_avg_pool(const Var& x) {
  const Shape xs = x.shape();
  if (xs.h < 1 || xs.w < 1) throw ContractError("global_avg_pool: empty spatial extent");
  const std::size_t plane = xs.plane();
  Tensor out(xs.c, 1, 1);
  for (int c = 0; c < xs.c; ++c) {
    double acc = 0.0;
    const double* d = x.value().channel(c);
    for (std::size_t i = 0; i < plane; ++i) acc += d[i];
    out[c] = acc / static_cast<double>(plane);
  }
  return make_result(std::move(out), {x}, [xs, plane](const Tensor& g, std::span<const NodePtr> p) {
    Tensor dx(xs);
    for (int c = 0; c < xs.c; ++c) {
      const double v = g[c] / static_cast<double>(plane);
      std::fill(dx.channel(c), dx.channel(c) + plane, v);
    }
    accumulate_grad(*p[0], dx);
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  const int h = parts[0].shape().h, w = parts[0].shape().w;
  int total = 0;
  for (const Var& v : parts) {
    if (v.shape().h != h || v.shape().w != w) {
      throw ContractError("concat_channels: spatial mismatch " + v.shape().str());
    }
    total += v.shape().c;
  }
  Tensor out(total, h, w);
  std::vector<int> offsets;
  int offset = 0;
  for (const Var& v : parts) {
    offsets.push_back(offset);
    std::copy(v.value().data(), v.value().data() + v.value().size(), out.channel(offset));
    offset += v.shape().c;
  }
  return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                     [offsets](const Tensor& g, std::span<const NodePtr> p) {
                       for (std::size_t i = 0; i < p.size(); ++i) {
                         if (!p[i]->requires_grad) continue;
                         Tensor d(p[i]->value.shape());
                         const double* src = g.channel(offsets[i]);
                         std::copy(src, src + d.size(), d.data());
                         accumulate_grad(*p[i], d);
                       }
                     });
}

Var pad_channels(const Var& x, int channels) {
  const Shape xs = x.shape();
  if (channels < xs.c) throw ContractError("pad_channels: cannot shrink " + xs.str());
  if (channels == xs.c) return x;
  const Var zeros = Var::constant(Tensor(channels - xs.c, xs.h, xs.w));
  const Var parts[] = {x, zeros};
  return concat_channels(parts);
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ContractError("resize_bilinear: empty target size");
  if (x.shape().h == out_h && x.shape().w == out_w) return x;
  return resample(x, bilinear_taps(x.shape().h, out_h), bilinear_taps(x.shape().w, out_w));
}

Var adaptive_avg_pool(const Var& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1 || out_h > x.shape().h || out_w > x.shape().w) {
    throw ContractError("adaptive_avg_pool: bad grid for " + x.shape().str());
  }
  return resample(x, adaptive_pool_taps(x.shape().h, out_h),
                  adaptive_pool_taps(x.shape().w, out_w));
}

Var sum(const Var& x) {
  Tensor out(1, 1, 1, x.value().sum());
  const Shape xs = x.shape();
  return make_result(std::move(out), {x}, [xs](const Tensor& g, std::span<const NodePtr> p) {
    accumulate_grad(*p[0], Tensor(xs, g[0]));
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var bce(const Var& s, const Tensor& target, double eps, Reduction reduction) {
  require_same_shape(s.shape(), target.shape(), "bce");
  const double norm =
      reduction == Reduction::kMean ? 1.0 / static_cast<double>(target.size()) : 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double p = std::clamp(s.value()[i], eps, 1.0 - eps);
    const double g = target[i];
    total -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
  }
  auto tgt = std::make_shared<Tensor>(target);
  return make_result(Tensor(1, 1, 1, total * norm), {s},
                     [tgt, eps, norm](const Tensor& g, std::span<const NodePtr> p) {
                       Tensor ds(tgt->shape());
                       for (std::size_t i = 0; i < ds.size(); ++i) {
                         const double q = std::clamp(p[0]->value[i], eps, 1.0 - eps);
                         ds[i] = g[0] * norm * (q - (*tgt)[i]) / (q * (1.0 - q));
                       }
                       accumulate_grad(*p[0], ds);
                     });
}

}  // namespace fslab::ag
