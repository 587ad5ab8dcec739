#include "cdcn/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cdcn/errors.hpp"

namespace cdcn::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Var& v : inputs) node->parents.push_back(v.node());
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

// Accumulates `g` into parent i if that parent wants a gradient.
Tensor* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

void im2col(const double* x, int channels, int h, int w, int k, double* cols) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const double* plane = x + c * hw;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * hw;
        const int dx = kj - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          double* dst = row + static_cast<std::size_t>(y) * w;
          const int sy = y + ki - pad;
          if (sy < 0 || sy >= h || x0 >= x1) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * w;
          std::fill(dst, dst + x0, 0.0);
          std::copy(src + x0 + dx, src + x1 + dx, dst + x0);
          std::fill(dst + x1, dst + w, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* cols, int channels, int h, int w, int k, double* x) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    double* plane = x + c * hw;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * hw;
        const int dx = kj - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ki - pad;
          if (sy < 0 || sy >= h) continue;
          const double* src = row + static_cast<std::size_t>(y) * w;
          double* dst = plane + static_cast<std::size_t>(sy) * w;
          for (int xx = x0; xx < x1; ++xx) dst[xx + dx] += src[xx];
        }
      }
    }
  }
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(val().shape(), 0.0);
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var leaf(const Tensor& storage, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->external = &storage;
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

void backward(const Var& root) {
  require(root.valid() && root.value().numel() == 1, "backward() needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) {
      n->backward(*n);
      n->grad = Tensor();  // interior gradients are not needed afterwards
    }
  }
}

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.h == ws.w && ws.h % 2 == 1, "conv2d weight must be square with odd size");
  require(ws.c == xs.c, "conv2d channel mismatch: input has " + std::to_string(xs.c) +
                            " channels, weight expects " + std::to_string(ws.c));
  require(bias.shape() == Shape{ws.n, 1, 1, 1}, "conv2d bias shape mismatch");

  const int k = ws.h;
  const int rows = ws.c * k * k;
  const int hw = xs.h * xs.w;
  Tensor out({xs.n, ws.n, xs.h, xs.w});
  ConstMatrixMap wmat(weight.value().data(), ws.n, rows);
  Eigen::Map<const Eigen::VectorXd> bvec(bias.value().data(), ws.n);
  std::vector<double> cols(k == 1 ? 0 : static_cast<std::size_t>(rows) * hw);
  for (int n = 0; n < xs.n; ++n) {
    const double* src = x.value().sample(n);
    if (k != 1) im2col(src, xs.c, xs.h, xs.w, k, cols.data());
    ConstMatrixMap cmat(k == 1 ? src : cols.data(), rows, hw);
    MatrixMap omat(out.sample(n), ws.n, hw);
    omat.noalias() = wmat * cmat;
    omat.colwise() += bvec;
  }

  return make_result(std::move(out), {x, weight, bias}, [k, rows, hw](Node& self) {
    const Tensor& xv = self.parents[0]->val();
    const Tensor& wv = self.parents[1]->val();
    const Shape xs = xv.shape();
    const int cout = wv.shape().n;
    Tensor* gx = parent_grad(self, 0);
    Tensor* gw = parent_grad(self, 1);
    Tensor* gb = parent_grad(self, 2);
    ConstMatrixMap wmat(wv.data(), cout, rows);
    std::vector<double> cols(k == 1 ? 0 : static_cast<std::size_t>(rows) * hw);
    std::vector<double> gcols(gx && k != 1 ? static_cast<std::size_t>(rows) * hw : 0);
    for (int n = 0; n < xs.n; ++n) {
      ConstMatrixMap gout(self.grad.sample(n), cout, hw);
      if (gb) {
        Eigen::Map<Eigen::VectorXd> gbv(gb->data(), cout);
        gbv += gout.rowwise().sum();
      }
      if (gw) {
        const double* src = xv.sample(n);
        if (k != 1) im2col(src, xs.c, xs.h, xs.w, k, cols.data());
        ConstMatrixMap cmat(k == 1 ? src : cols.data(), rows, hw);
        MatrixMap gwm(gw->data(), cout, rows);
        gwm.noalias() += gout * cmat.transpose();
      }
      if (gx) {
        if (k == 1) {
          MatrixMap gxm(gx->sample(n), rows, hw);
          gxm.noalias() += wmat.transpose() * gout;
        } else {
          MatrixMap gcm(gcols.data(), rows, hw);
          gcm.noalias() = wmat.transpose() * gout;
          col2im_add(gcols.data(), xs.c, xs.h, xs.w, k, gx->sample(n));
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor out = a.value();
  auto ov = out.values();
  auto bv = b.value().values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    auto g = self.grad.values();
    for (std::size_t p = 0; p < 2; ++p) {
      if (Tensor* gp = parent_grad(self, p)) {
        auto dst = gp->values();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      }
    }
  });
}

Var leaky_relu(const Var& x, double slope) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v >= 0.0 ? v : slope * v;
  return make_result(std::move(out), {x}, [slope](Node& self) {
    Tensor* gx = parent_grad(self, 0);
    auto in = self.parents[0]->val().values();
    auto g = self.grad.values();
    auto dst = gx->values();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += in[i] >= 0.0 ? g[i] : slope * g[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor* gx = parent_grad(self, 0);
    auto y = self.value.values();
    auto g = self.grad.values();
    auto dst = gx->values();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x.shape();
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  Tensor out({s.n, s.c, 1, 1});
  const double* src = x.value().data();
  for (int i = 0; i < s.n * s.c; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += src[i * hw + j];
    out.data()[i] = acc / static_cast<double>(hw);
  }
  return make_result(std::move(out), {x}, [hw](Node& self) {
    Tensor* gx = parent_grad(self, 0);
    const std::size_t planes = self.grad.numel();
    for (std::size_t i = 0; i < planes; ++i) {
      const double g = self.grad.data()[i] / static_cast<double>(hw);
      double* dst = gx->data() + i * hw;
      for (std::size_t j = 0; j < hw; ++j) dst[j] += g;
    }
  });
}

Var scale_channels(const Var& x, const Var& a) {
  const Shape s = x.shape();
  require(a.shape() == Shape{s.n, s.c, 1, 1}, "scale_channels: attention shape mismatch");
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  Tensor out = x.value();
  for (int i = 0; i < s.n * s.c; ++i) {
    const double f = a.value().data()[i];
    double* p = out.data() + i * hw;
    for (std::size_t j = 0; j < hw; ++j) p[j] *= f;
  }
  return make_result(std::move(out), {x, a}, [hw](Node& self) {
    const Tensor& xv = self.parents[0]->val();
    const Tensor& av = self.parents[1]->val();
    Tensor* gx = parent_grad(self, 0);
    Tensor* ga = parent_grad(self, 1);
    const std::size_t planes = av.numel();
    for (std::size_t i = 0; i < planes; ++i) {
      const double* g = self.grad.data() + i * hw;
      if (gx) {
        double* dst = gx->data() + i * hw;
        const double f = av.data()[i];
        for (std::size_t j = 0; j < hw; ++j) dst[j] += f * g[j];
      }
      if (ga) {
        const double* xp = xv.data() + i * hw;
        double acc = 0.0;
        for (std::size_t j = 0; j < hw; ++j) acc += xp[j] * g[j];
        ga->data()[i] += acc;
      }
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat of nothing");
  Shape s = parts.front().shape();
  int total = 0;
  for (const Var& p : parts) {
    const Shape ps = p.shape();
    require(ps.n == s.n && ps.h == s.h && ps.w == s.w, "concat: spatial/batch mismatch");
    total += ps.c;
  }
  const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
  Tensor out({s.n, total, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    double* dst = out.sample(n);
    for (const Var& p : parts) {
      const std::size_t len = static_cast<std::size_t>(p.shape().c) * hw;
      std::copy(p.value().sample(n), p.value().sample(n) + len, dst);
      dst += len;
    }
  }
  return make_result(std::move(out), parts, [hw](Node& self) {
    const int batch = self.grad.shape().n;
    for (int n = 0; n < batch; ++n) {
      const double* src = self.grad.sample(n);
      for (std::size_t p = 0; p < self.parents.size(); ++p) {
        const std::size_t len = static_cast<std::size_t>(self.parents[p]->val().shape().c) * hw;
        if (Tensor* gp = parent_grad(self, p)) {
          double* dst = gp->sample(n);
          for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
        }
        src += len;
      }
    }
  });
}

Var pixel_shuffle(const Var& x, int r) {
  const Shape s = x.shape();
  require(r >= 1 && s.c % (r * r) == 0, "pixel_shuffle: channels not divisible by r^2");
  const int oc = s.c / (r * r);
  Tensor out({s.n, oc, s.h * r, s.w * r});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < oc; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx)
              out.at(n, c, y * r + i, xx * r + j) = x.value().at(n, (c * r + i) * r + j, y, xx);
  return make_result(std::move(out), {x}, [r, oc](Node& self) {
    Tensor* gx = parent_grad(self, 0);
    const Shape s = gx->shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < oc; ++c)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j)
            for (int y = 0; y < s.h; ++y)
              for (int xx = 0; xx < s.w; ++xx)
                gx->at(n, (c * r + i) * r + j, y, xx) += self.grad.at(n, c, y * r + i, xx * r + j);
  });
}

Var l1_loss(const Var& pred, const Tensor& target) {
  require(pred.shape() == target.shape(),
          "l1_loss: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  auto p = pred.value().values();
  auto t = target.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
  const double count = static_cast<double>(p.size());
  Tensor out({1, 1, 1, 1}, acc / count);
  auto tgt = std::make_shared<Tensor>(target);
  return make_result(std::move(out), {pred}, [tgt, count](Node& self) {
    Tensor* gp = parent_grad(self, 0);
    const double g = self.grad.data()[0] / count;
    auto pv = self.parents[0]->val().values();
    auto tv = tgt->values();
    auto dst = gp->values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double d = pv[i] - tv[i];
      dst[i] += d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
    }
  });
}

}  // namespace cdcn::nn
