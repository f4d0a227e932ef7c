#include "core/ops.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace synth::nn {

namespace {

template <class S>
std::shared_ptr<Node<S>> result_node(std::vector<int> shape, std::vector<std::shared_ptr<Node<S>>> parents) {
    auto n = std::make_shared<Node<S>>();
    size_t total = 1;
    for (int d : shape) total *= static_cast<size_t>(d);
    n->shape = std::move(shape);
    n->value.assign(total, S(0));
    for (auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->parents = std::move(parents);
    return n;
}

template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape()) throw DimensionError(std::string(op) + ": shape mismatch");
}

// C[MxN] += or = A[MxK] @ B[KxN]
template <class S>
void mm_nn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        S* crow = c + static_cast<size_t>(i) * n;
        if (!accumulate)
            for (int j = 0; j < n; ++j) crow[j] = S(0);
        const S* arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const S ap = arow[p];
            const S* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += ap * brow[j];
        }
    }
}

// C[MxN] += A[MxK] @ B[NxK]^T
template <class S>
void mm_nt(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const S* arow = a + static_cast<size_t>(i) * k;
        S* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const S* brow = b + static_cast<size_t>(j) * k;
            S acc = accumulate ? crow[j] : S(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

// C[KxN] += A[MxK]^T @ B[MxN]
template <class S>
void mm_tn(const S* a, const S* b, S* c, int m, int k, int n, bool accumulate) {
    if (!accumulate) std::memset(c, 0, sizeof(S) * static_cast<size_t>(k) * n);
    for (int i = 0; i < m; ++i) {
        const S* arow = a + static_cast<size_t>(i) * k;
        const S* brow = b + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const S ap = arow[p];
            S* crow = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += ap * brow[j];
        }
    }
}

}  // namespace

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "add");
    auto n = result_node<S>(a.shape(), {a.node(), b.node()});
    const auto av = a.value();
    const auto bv = b.value();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + bv[i];
    if (n->requires_grad) {
        Node<S>* pa = a.node().get();
        Node<S>* pb = b.node().get();
        n->backward = [pa, pb](Node<S>& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "sub");
    auto n = result_node<S>(a.shape(), {a.node(), b.node()});
    const auto av = a.value();
    const auto bv = b.value();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] - bv[i];
    if (n->requires_grad) {
        Node<S>* pa = a.node().get();
        Node<S>* pb = b.node().get();
        n->backward = [pa, pb](Node<S>& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "mul");
    auto n = result_node<S>(a.shape(), {a.node(), b.node()});
    const auto av = a.value();
    const auto bv = b.value();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * bv[i];
    if (n->requires_grad) {
        Node<S>* pa = a.node().get();
        Node<S>* pb = b.node().get();
        n->backward = [pa, pb](Node<S>& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    auto n = result_node<S>(a.shape(), {a.node()});
    const auto av = a.value();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * c;
    if (n->requires_grad) {
        Node<S>* pa = a.node().get();
        n->backward = [pa, c](Node<S>& self) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * c;
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> add_rows(const Tensor<S>& x, const Tensor<S>& bias) {
    const int r = x.rows(), c = x.cols();
    if (bias.size() != static_cast<size_t>(c)) throw DimensionError("add_rows: bias length != cols");
    auto n = result_node<S>(x.shape(), {x.node(), bias.node()});
    const auto xv = x.value();
    const auto bv = bias.value();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) n->value[static_cast<size_t>(i) * c + j] = xv[static_cast<size_t>(i) * c + j] + bv[j];
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        Node<S>* pb = bias.node().get();
        n->backward = [px, pb, r, c](Node<S>& self) {
            if (px->requires_grad) {
                px->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) pb->grad[j] += self.grad[static_cast<size_t>(i) * c + j];
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.ndim() != 2 || b.ndim() != 2) throw DimensionError("matmul: expects 2-d tensors");
    const int m = a.dim(0), k = a.dim(1);
    if (b.dim(0) != k) throw DimensionError("matmul: inner dims disagree");
    const int nn = b.dim(1);
    auto n = result_node<S>({m, nn}, {a.node(), b.node()});
    mm_nn(a.value().data(), b.value().data(), n->value.data(), m, k, nn, false);
    if (n->requires_grad) {
        Node<S>* pa = a.node().get();
        Node<S>* pb = b.node().get();
        n->backward = [pa, pb, m, k, nn](Node<S>& self) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                mm_nt(self.grad.data(), pb->value.data(), pa->grad.data(), m, nn, k, true);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                mm_tn(pa->value.data(), self.grad.data(), pb->grad.data(), m, k, nn, true);
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

namespace {
// tanh-approximate GeLU and its derivative.
template <class S>
inline S gelu_fwd(S x) {
    const S kAlpha = S(0.7978845608028654);  // sqrt(2/pi)
    const S kBeta = S(0.044715);
    const S u = kAlpha * (x + kBeta * x * x * x);
    return S(0.5) * x * (S(1) + std::tanh(u));
}
template <class S>
inline S gelu_bwd(S x) {
    const S kAlpha = S(0.7978845608028654);
    const S kBeta = S(0.044715);
    const S u = kAlpha * (x + kBeta * x * x * x);
    const S t = std::tanh(u);
    const S du = kAlpha * (S(1) + S(3) * kBeta * x * x);
    return S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * du;
}
}  // namespace

template <class S>
Tensor<S> gelu(const Tensor<S>& x) {
    auto n = result_node<S>(x.shape(), {x.node()});
    const auto xv = x.value();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = gelu_fwd(xv[i]);
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        n->backward = [px](Node<S>& self) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i] * gelu_bwd(px->value[i]);
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> tanh_op(const Tensor<S>& x) {
    auto n = result_node<S>(x.shape(), {x.node()});
    const auto xv = x.value();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::tanh(xv[i]);
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        n->backward = [px](Node<S>& self) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const S y = self.value[i];
                px->grad[i] += self.grad[i] * (S(1) - y * y);
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps) {
    if (eps <= S(0)) throw ParameterError("layer_norm: eps must be positive");
    const int r = x.rows(), c = x.cols();
    if (gamma.size() != static_cast<size_t>(c) || beta.size() != static_cast<size_t>(c))
        throw DimensionError("layer_norm: gamma/beta length != last dim");
    auto n = result_node<S>(x.shape(), {x.node(), gamma.node(), beta.node()});
    const auto xv = x.value();
    const auto gv = gamma.value();
    const auto bv = beta.value();
    // Cache x_hat and inverse stddev for backward.
    auto xhat = std::make_shared<std::vector<S>>(n->value.size());
    auto istd = std::make_shared<std::vector<S>>(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        const S* row = xv.data() + static_cast<size_t>(i) * c;
        S mean = S(0);
        for (int j = 0; j < c; ++j) mean += row[j];
        mean /= S(c);
        S var = S(0);
        for (int j = 0; j < c; ++j) {
            const S d = row[j] - mean;
            var += d * d;
        }
        var /= S(c);
        const S inv = S(1) / std::sqrt(var + eps);
        (*istd)[static_cast<size_t>(i)] = inv;
        for (int j = 0; j < c; ++j) {
            const size_t at = static_cast<size_t>(i) * c + j;
            const S xh = (row[j] - mean) * inv;
            (*xhat)[at] = xh;
            n->value[at] = gv[j] * xh + bv[j];
        }
    }
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        Node<S>* pg = gamma.node().get();
        Node<S>* pb = beta.node().get();
        n->backward = [px, pg, pb, xhat, istd, r, c](Node<S>& self) {
            for (int i = 0; i < r; ++i) {
                const size_t off = static_cast<size_t>(i) * c;
                if (pg->requires_grad) {
                    pg->ensure_grad();
                    for (int j = 0; j < c; ++j) pg->grad[j] += self.grad[off + j] * (*xhat)[off + j];
                }
                if (pb->requires_grad) {
                    pb->ensure_grad();
                    for (int j = 0; j < c; ++j) pb->grad[j] += self.grad[off + j];
                }
                if (px->requires_grad) {
                    px->ensure_grad();
                    // dxhat = dy * gamma; dx = istd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                    S m1 = S(0), m2 = S(0);
                    for (int j = 0; j < c; ++j) {
                        const S dxh = self.grad[off + j] * pg->value[j];
                        m1 += dxh;
                        m2 += dxh * (*xhat)[off + j];
                    }
                    m1 /= S(c);
                    m2 /= S(c);
                    const S inv = (*istd)[static_cast<size_t>(i)];
                    for (int j = 0; j < c; ++j) {
                        const S dxh = self.grad[off + j] * pg->value[j];
                        px->grad[off + j] += inv * (dxh - m1 - (*xhat)[off + j] * m2);
                    }
                }
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> embedding(const Tensor<S>& table, const std::vector<int>& ids) {
    if (table.ndim() != 2) throw DimensionError("embedding: table must be 2-d");
    const int v = table.dim(0), c = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v) throw ContractError("embedding: id out of range");
    auto n = result_node<S>({static_cast<int>(ids.size()), c}, {table.node()});
    const auto tv = table.value();
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(n->value.data() + i * c, tv.data() + static_cast<size_t>(ids[i]) * c, sizeof(S) * c);
    if (n->requires_grad) {
        Node<S>* pt = table.node().get();
        auto idc = std::make_shared<std::vector<int>>(ids);
        n->backward = [pt, idc, c](Node<S>& self) {
            pt->ensure_grad();
            for (size_t i = 0; i < idc->size(); ++i) {
                S* dst = pt->grad.data() + static_cast<size_t>((*idc)[i]) * c;
                const S* src = self.grad.data() + i * c;
                for (int j = 0; j < c; ++j) dst[j] += src[j];
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
    const int r = x.rows(), c = x.cols();
    auto n = result_node<S>(x.shape(), {x.node()});
    const auto xv = x.value();
    for (int i = 0; i < r; ++i) {
        const S* row = xv.data() + static_cast<size_t>(i) * c;
        S* out = n->value.data() + static_cast<size_t>(i) * c;
        S mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        S denom = S(0);
        for (int j = 0; j < c; ++j) {
            out[j] = std::exp(row[j] - mx);
            denom += out[j];
        }
        for (int j = 0; j < c; ++j) out[j] /= denom;
    }
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        n->backward = [px, r, c](Node<S>& self) {
            px->ensure_grad();
            for (int i = 0; i < r; ++i) {
                const size_t off = static_cast<size_t>(i) * c;
                S dot = S(0);
                for (int j = 0; j < c; ++j) dot += self.grad[off + j] * self.value[off + j];
                for (int j = 0; j < c; ++j)
                    px->grad[off + j] += self.value[off + j] * (self.grad[off + j] - dot);
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets,
                                std::optional<int> ignore_id) {
    const int r = logits.rows(), v = logits.cols();
    if (targets.size() != static_cast<size_t>(r))
        throw DimensionError("softmax_cross_entropy: targets length != rows");
    int used = 0;
    for (int t : targets) {
        if (ignore_id && t == *ignore_id) continue;
        if (t < 0 || t >= v) throw ContractError("softmax_cross_entropy: target out of range");
        ++used;
    }
    if (used == 0) throw ContractError("softmax_cross_entropy: every position ignored, mean undefined");

    auto n = result_node<S>({1}, {logits.node()});
    const auto lv = logits.value();
    // Probabilities cached for the backward pass.
    auto probs = std::make_shared<std::vector<S>>();
    const bool needs_grad = n->requires_grad;
    if (needs_grad) probs->assign(lv.size(), S(0));
    S total = S(0);
    for (int i = 0; i < r; ++i) {
        const int t = targets[static_cast<size_t>(i)];
        if (ignore_id && t == *ignore_id) continue;
        const S* row = lv.data() + static_cast<size_t>(i) * v;
        S mx = row[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        S denom = S(0);
        for (int j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
        const S log_denom = std::log(denom);
        total += -(row[t] - mx - log_denom);
        if (needs_grad) {
            S* prow = probs->data() + static_cast<size_t>(i) * v;
            for (int j = 0; j < v; ++j) prow[j] = std::exp(row[j] - mx - log_denom);
        }
    }
    n->value[0] = total / S(used);
    if (needs_grad) {
        Node<S>* pl = logits.node().get();
        auto tg = std::make_shared<std::vector<int>>(targets);
        n->backward = [pl, tg, probs, ignore_id, r, v, used](Node<S>& self) {
            pl->ensure_grad();
            const S g = self.grad[0] / S(used);
            for (int i = 0; i < r; ++i) {
                const int t = (*tg)[static_cast<size_t>(i)];
                if (ignore_id && t == *ignore_id) continue;
                const size_t off = static_cast<size_t>(i) * v;
                for (int j = 0; j < v; ++j) pl->grad[off + j] += g * (*probs)[off + j];
                pl->grad[off + t] -= g;
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, int batch, int heads,
                    bool causal) {
    const int dim = q.cols();
    if (k.cols() != dim || v.cols() != dim) throw DimensionError("attention: q/k/v widths disagree");
    if (dim % heads != 0) throw ConfigError("attention: dim not divisible by head count");
    if (q.rows() % batch != 0 || k.rows() % batch != 0) throw DimensionError("attention: rows not divisible by batch");
    const int tq = q.rows() / batch;
    const int tk = k.rows() / batch;
    if (k.rows() != v.rows()) throw DimensionError("attention: k/v row counts disagree");
    if (causal && tq != tk) throw ContractError("attention: causal mask requires tq == tk");
    const int dh = dim / heads;
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));

    auto n = result_node<S>(q.shape(), {q.node(), k.node(), v.node()});
    const auto qv = q.value();
    const auto kv = k.value();
    const auto vv = v.value();
    // Attention weights cached per (batch, head) for backward.
    auto attnw = std::make_shared<std::vector<S>>(
        static_cast<size_t>(batch) * heads * tq * tk, S(0));

    for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < heads; ++h) {
            S* w = attnw->data() + (static_cast<size_t>(b) * heads + h) * tq * tk;
            for (int i = 0; i < tq; ++i) {
                const S* qrow = qv.data() + (static_cast<size_t>(b) * tq + i) * dim + h * dh;
                S* wrow = w + static_cast<size_t>(i) * tk;
                const int jmax = causal ? i + 1 : tk;
                S mx = -std::numeric_limits<S>::infinity();
                for (int j = 0; j < jmax; ++j) {
                    const S* krow = kv.data() + (static_cast<size_t>(b) * tk + j) * dim + h * dh;
                    S dot = S(0);
                    for (int d = 0; d < dh; ++d) dot += qrow[d] * krow[d];
                    wrow[j] = dot * inv_sqrt;
                    mx = std::max(mx, wrow[j]);
                }
                S denom = S(0);
                for (int j = 0; j < jmax; ++j) {
                    wrow[j] = std::exp(wrow[j] - mx);
                    denom += wrow[j];
                }
                for (int j = 0; j < jmax; ++j) wrow[j] /= denom;
                for (int j = jmax; j < tk; ++j) wrow[j] = S(0);
                // out = attn @ V_h
                S* orow = n->value.data() + (static_cast<size_t>(b) * tq + i) * dim + h * dh;
                for (int j = 0; j < jmax; ++j) {
                    const S* vrow = vv.data() + (static_cast<size_t>(b) * tk + j) * dim + h * dh;
                    const S wij = wrow[j];
                    for (int d = 0; d < dh; ++d) orow[d] += wij * vrow[d];
                }
            }
        }
    }

    if (n->requires_grad) {
        Node<S>* pq = q.node().get();
        Node<S>* pk = k.node().get();
        Node<S>* pv = v.node().get();
        n->backward = [pq, pk, pv, attnw, batch, heads, tq, tk, dh, inv_sqrt, causal](Node<S>& self) {
            const int dim = heads * dh;
            if (pq->requires_grad) pq->ensure_grad();
            if (pk->requires_grad) pk->ensure_grad();
            if (pv->requires_grad) pv->ensure_grad();
            std::vector<S> dw(static_cast<size_t>(tk), S(0));
            for (int b = 0; b < batch; ++b) {
                for (int h = 0; h < heads; ++h) {
                    const S* w = attnw->data() + (static_cast<size_t>(b) * heads + h) * tq * tk;
                    for (int i = 0; i < tq; ++i) {
                        const S* go = self.grad.data() + (static_cast<size_t>(b) * tq + i) * dim + h * dh;
                        const S* wrow = w + static_cast<size_t>(i) * tk;
                        const int jmax = causal ? i + 1 : tk;
                        // dV += w^T dO ; dw = dO . V
                        S dot = S(0);
                        for (int j = 0; j < jmax; ++j) {
                            const S* vrow = pv->value.data() + (static_cast<size_t>(b) * tk + j) * dim + h * dh;
                            S s = S(0);
                            for (int d = 0; d < dh; ++d) s += go[d] * vrow[d];
                            dw[static_cast<size_t>(j)] = s;
                            dot += s * wrow[j];
                            if (pv->requires_grad) {
                                S* dvrow = pv->grad.data() + (static_cast<size_t>(b) * tk + j) * dim + h * dh;
                                for (int d = 0; d < dh; ++d) dvrow[d] += wrow[j] * go[d];
                            }
                        }
                        // softmax backward, then scores -> q,k
                        const S* qrow = pq->value.data() + (static_cast<size_t>(b) * tq + i) * dim + h * dh;
                        S* dqrow = pq->requires_grad
                                       ? pq->grad.data() + (static_cast<size_t>(b) * tq + i) * dim + h * dh
                                       : nullptr;
                        for (int j = 0; j < jmax; ++j) {
                            const S ds = wrow[j] * (dw[static_cast<size_t>(j)] - dot) * inv_sqrt;
                            const S* krow = pk->value.data() + (static_cast<size_t>(b) * tk + j) * dim + h * dh;
                            if (dqrow)
                                for (int d = 0; d < dh; ++d) dqrow[d] += ds * krow[d];
                            if (pk->requires_grad) {
                                S* dkrow = pk->grad.data() + (static_cast<size_t>(b) * tk + j) * dim + h * dh;
                                for (int d = 0; d < dh; ++d) dkrow[d] += ds * qrow[d];
                            }
                        }
                    }
                }
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> dropout_mask(const Tensor<S>& x, const std::vector<uint8_t>& keep, S keep_prob) {
    if (keep.size() != x.size()) throw DimensionError("dropout_mask: mask length != tensor size");
    if (keep_prob <= S(0) || keep_prob > S(1)) throw ParameterError("dropout_mask: keep_prob out of (0,1]");
    auto n = result_node<S>(x.shape(), {x.node()});
    const S inv = S(1) / keep_prob;
    const auto xv = x.value();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = keep[i] ? xv[i] * inv : S(0);
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        auto mk = std::make_shared<std::vector<uint8_t>>(keep);
        n->backward = [px, mk, inv](Node<S>& self) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                if ((*mk)[i]) px->grad[i] += self.grad[i] * inv;
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> dropout(const Tensor<S>& x, S p, Rng& rng, bool training) {
    if (p < S(0) || p >= S(1)) throw ParameterError("dropout: p out of [0,1)");
    if (!training || p == S(0)) return x;
    std::vector<uint8_t> keep(x.size());
    for (auto& m : keep) m = rng.uniform() >= static_cast<double>(p) ? 1 : 0;
    return dropout_mask(x, keep, S(1) - p);
}

template <class S>
Tensor<S> mean_pool_rows(const Tensor<S>& x, int batch, int t, const std::vector<int>& lengths) {
    const int c = x.cols();
    if (x.rows() != batch * t) throw DimensionError("mean_pool_rows: rows != batch*t");
    if (lengths.size() != static_cast<size_t>(batch)) throw DimensionError("mean_pool_rows: lengths size != batch");
    for (int l : lengths)
        if (l < 1 || l > t) throw ContractError("mean_pool_rows: length out of range");
    auto n = result_node<S>({batch, c}, {x.node()});
    const auto xv = x.value();
    for (int b = 0; b < batch; ++b) {
        const int len = lengths[static_cast<size_t>(b)];
        S* out = n->value.data() + static_cast<size_t>(b) * c;
        for (int i = 0; i < len; ++i) {
            const S* row = xv.data() + (static_cast<size_t>(b) * t + i) * c;
            for (int j = 0; j < c; ++j) out[j] += row[j];
        }
        for (int j = 0; j < c; ++j) out[j] /= S(len);
    }
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        auto lens = std::make_shared<std::vector<int>>(lengths);
        n->backward = [px, lens, batch, t, c](Node<S>& self) {
            px->ensure_grad();
            for (int b = 0; b < batch; ++b) {
                const int len = (*lens)[static_cast<size_t>(b)];
                const S* g = self.grad.data() + static_cast<size_t>(b) * c;
                for (int i = 0; i < len; ++i) {
                    S* dst = px->grad.data() + (static_cast<size_t>(b) * t + i) * c;
                    for (int j = 0; j < c; ++j) dst[j] += g[j] / S(len);
                }
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
    auto n = result_node<S>({1}, {x.node()});
    S total = S(0);
    for (S v : x.value()) total += v;
    n->value[0] = total;
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        n->backward = [px](Node<S>& self) {
            px->ensure_grad();
            for (auto& g : px->grad) g += self.grad[0];
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
    check_same_shape(a, b, "mse");
    auto n = result_node<S>({1}, {a.node(), b.node()});
    const auto av = a.value();
    const auto bv = b.value();
    const size_t count = av.size();
    S total = S(0);
    for (size_t i = 0; i < count; ++i) {
        const S d = av[i] - bv[i];
        total += d * d;
    }
    n->value[0] = total / S(count);
    if (n->requires_grad) {
        Node<S>* pa = a.node().get();
        Node<S>* pb = b.node().get();
        n->backward = [pa, pb, count](Node<S>& self) {
            const S g = self.grad[0] * S(2) / S(count);
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (size_t i = 0; i < count; ++i) pa->grad[i] += g * (pa->value[i] - pb->value[i]);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (size_t i = 0; i < count; ++i) pb->grad[i] -= g * (pa->value[i] - pb->value[i]);
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> slice_rows(const Tensor<S>& x, int row_begin, int row_end) {
    const int r = x.rows(), c = x.cols();
    if (row_begin < 0 || row_end > r || row_begin >= row_end) throw DimensionError("slice_rows: bad range");
    const int out_r = row_end - row_begin;
    auto n = result_node<S>({out_r, c}, {x.node()});
    std::memcpy(n->value.data(), x.value().data() + static_cast<size_t>(row_begin) * c,
                sizeof(S) * static_cast<size_t>(out_r) * c);
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        n->backward = [px, row_begin, out_r, c](Node<S>& self) {
            px->ensure_grad();
            for (int i = 0; i < out_r; ++i) {
                S* dst = px->grad.data() + (static_cast<size_t>(row_begin) + i) * c;
                const S* src = self.grad.data() + static_cast<size_t>(i) * c;
                for (int j = 0; j < c; ++j) dst[j] += src[j];
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: empty input");
    const int c = parts.front().cols();
    int total_r = 0;
    std::vector<std::shared_ptr<Node<S>>> parents;
    for (const auto& p : parts) {
        if (p.cols() != c) throw DimensionError("concat_rows: column mismatch");
        total_r += p.rows();
        parents.push_back(p.node());
    }
    auto n = result_node<S>({total_r, c}, parents);
    size_t off = 0;
    for (const auto& p : parts) {
        std::memcpy(n->value.data() + off, p.value().data(), sizeof(S) * p.size());
        off += p.size();
    }
    if (n->requires_grad) {
        std::vector<Node<S>*> raw;
        for (const auto& p : parts) raw.push_back(p.node().get());
        n->backward = [raw](Node<S>& self) {
            size_t off = 0;
            for (Node<S>* p : raw) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (size_t i = 0; i < p->value.size(); ++i) p->grad[i] += self.grad[off + i];
                }
                off += p->value.size();
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> mul_scalar_t(const Tensor<S>& x, const Tensor<S>& s) {
    if (s.size() != 1) throw DimensionError("mul_scalar_t: scale must be a [1] tensor");
    auto n = result_node<S>(x.shape(), {x.node(), s.node()});
    const S sv = s.value()[0];
    const auto xv = x.value();
    for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = xv[i] * sv;
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        Node<S>* ps = s.node().get();
        n->backward = [px, ps](Node<S>& self) {
            if (px->requires_grad) {
                px->ensure_grad();
                const S sv = ps->value[0];
                for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i] * sv;
            }
            if (ps->requires_grad) {
                ps->ensure_grad();
                S acc = S(0);
                for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px->value[i];
                ps->grad[0] += acc;
            }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> broadcast_row(const Tensor<S>& row, int r) {
    const int c = static_cast<int>(row.size());
    if (row.rows() != 1) throw DimensionError("broadcast_row: input must be a single row");
    auto n = result_node<S>({r, c}, {row.node()});
    for (int i = 0; i < r; ++i)
        std::memcpy(n->value.data() + static_cast<size_t>(i) * c, row.value().data(), sizeof(S) * c);
    if (n->requires_grad) {
        Node<S>* pr = row.node().get();
        n->backward = [pr, r, c](Node<S>& self) {
            pr->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) pr->grad[j] += self.grad[static_cast<size_t>(i) * c + j];
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

template <class S>
Tensor<S> repeat_rows(const Tensor<S>& x, int times) {
    if (times <= 0) throw ParameterError("repeat_rows: times must be positive");
    const int r = x.rows(), c = x.cols();
    auto n = result_node<S>({r * times, c}, {x.node()});
    for (int i = 0; i < r; ++i)
        for (int t = 0; t < times; ++t)
            std::memcpy(n->value.data() + (static_cast<size_t>(i) * times + t) * c,
                        x.value().data() + static_cast<size_t>(i) * c, sizeof(S) * c);
    if (n->requires_grad) {
        Node<S>* px = x.node().get();
        n->backward = [px, r, c, times](Node<S>& self) {
            px->ensure_grad();
            for (int i = 0; i < r; ++i)
                for (int t = 0; t < times; ++t) {
                    const S* src = self.grad.data() + (static_cast<size_t>(i) * times + t) * c;
                    S* dst = px->grad.data() + static_cast<size_t>(i) * c;
                    for (int j = 0; j < c; ++j) dst[j] += src[j];
                }
        };
    }
    return Tensor<S>::wrap(std::move(n));
}

#define SYNTH_INSTANTIATE_OPS(S)                                                                      \
    template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);                                    \
    template Tensor<S> sub<S>(const Tensor<S>&, const Tensor<S>&);                                    \
    template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);                                    \
    template Tensor<S> scale<S>(const Tensor<S>&, S);                                                 \
    template Tensor<S> add_rows<S>(const Tensor<S>&, const Tensor<S>&);                               \
    template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);                                 \
    template Tensor<S> gelu<S>(const Tensor<S>&);                                                     \
    template Tensor<S> tanh_op<S>(const Tensor<S>&);                                                  \
    template Tensor<S> layer_norm<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);        \
    template Tensor<S> embedding<S>(const Tensor<S>&, const std::vector<int>&);                       \
    template Tensor<S> softmax_rows<S>(const Tensor<S>&);                                             \
    template Tensor<S> softmax_cross_entropy<S>(const Tensor<S>&, const std::vector<int>&,            \
                                                std::optional<int>);                                  \
    template Tensor<S> attention<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, int,   \
                                    bool);                                                            \
    template Tensor<S> dropout_mask<S>(const Tensor<S>&, const std::vector<uint8_t>&, S);             \
    template Tensor<S> dropout<S>(const Tensor<S>&, S, Rng&, bool);                                   \
    template Tensor<S> mean_pool_rows<S>(const Tensor<S>&, int, int, const std::vector<int>&);        \
    template Tensor<S> sum<S>(const Tensor<S>&);                                                      \
    template Tensor<S> mse<S>(const Tensor<S>&, const Tensor<S>&);                                    \
    template Tensor<S> slice_rows<S>(const Tensor<S>&, int, int);                                     \
    template Tensor<S> concat_rows<S>(const std::vector<Tensor<S>>&);                                 \
    template Tensor<S> mul_scalar_t<S>(const Tensor<S>&, const Tensor<S>&);                           \
    template Tensor<S> broadcast_row<S>(const Tensor<S>&, int);                                       \
    template Tensor<S> repeat_rows<S>(const Tensor<S>&, int);

SYNTH_INSTANTIATE_OPS(float)
SYNTH_INSTANTIATE_OPS(double)

#undef SYNTH_INSTANTIATE_OPS

}  // namespace synth::nn
