// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace hlab {

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::out_of_range("Tape: bad node id " + std::to_string(id));
    return nodes_[id];
}

NodeId Tape::leaf(const Matrix* src, bool trainable) {
    Node n;
    n.op = Op::Leaf;
    n.value = *src;
    n.src = src;
    n.trainable = trainable;
    n.needs_grad = trainable;
    return push(std::move(n));
}

NodeId Tape::constant(Matrix value) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(value);
    return push(std::move(n));
}

#define HLAB_BINARY_PRE(a, b)                                              \
    Node n;                                                                \
    n.inputs = {a, b};                                                     \
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;

NodeId Tape::matmul(NodeId a, NodeId b) {
    HLAB_BINARY_PRE(a, b)
    n.op = Op::Matmul;
    n.value = hlab::matmul(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    HLAB_BINARY_PRE(a, b)
    n.op = Op::MatmulNT;
    n.value = hlab::matmul_nt(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    HLAB_BINARY_PRE(a, b)
    n.op = Op::Add;
    n.value = hlab::add(nodes_[a].value, nodes_[b].value);
    return push(std::move(n));
}

#undef HLAB_BINARY_PRE

NodeId Tape::scale(NodeId a, double s) {
    Node n;
    n.op = Op::Scale;
    n.inputs = {a};
    n.needs_grad = nodes_[a].needs_grad;
    n.scalar = s;
    n.value = hlab::scale(nodes_[a].value, s);
    return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
    Node n;
    n.op = Op::Relu;
    n.inputs = {a};
    n.needs_grad = nodes_[a].needs_grad;
    n.value = nodes_[a].value;
    for (std::size_t i = 0; i < n.value.size(); ++i)
        if (n.value[i] < 0.0) n.value[i] = 0.0;
    return push(std::move(n));
}

NodeId Tape::gelu(NodeId a) {
    Node n;
    n.op = Op::Gelu;
    n.inputs = {a};
    n.needs_grad = nodes_[a].needs_grad;
    n.value = nodes_[a].value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = hlab::gelu(n.value[i]);
    return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId a) {
    Node n;
    n.op = Op::SoftmaxRows;
    n.inputs = {a};
    n.needs_grad = nodes_[a].needs_grad;
    n.value = hlab::softmax_rows(nodes_[a].value);
    return push(std::move(n));
}

NodeId Tape::layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps) {
    Node n;
    n.op = Op::LayerNormRows;
    n.inputs = {x, gain, bias};
    n.needs_grad = nodes_[x].needs_grad || nodes_[gain].needs_grad || nodes_[bias].needs_grad;
    n.scalar = eps;
    n.value = hlab::layer_norm_rows(nodes_[x].value, nodes_[gain].value, nodes_[bias].value, eps);
    return push(std::move(n));
}

NodeId Tape::mean_pool_rows(NodeId a) {
    const Matrix& x = nodes_[a].value;
    if (x.rows() == 0) throw std::invalid_argument("mean_pool_rows: empty input");
    Node n;
    n.op = Op::MeanPoolRows;
    n.inputs = {a};
    n.needs_grad = nodes_[a].needs_grad;
    n.value = Matrix(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) n.value[j] += x.at(i, j);
    for (std::size_t j = 0; j < x.cols(); ++j) n.value[j] /= static_cast<double>(x.rows());
    return push(std::move(n));
}

NodeId Tape::embedding_lookup(NodeId table, std::vector<std::uint32_t> ids) {
    const Matrix& t = nodes_[table].value;
    for (std::uint32_t id : ids)
        if (id >= t.rows())
            throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                        " >= table rows " + std::to_string(t.rows()));
    Node n;
    n.op = Op::EmbeddingLookup;
    n.inputs = {table};
    n.needs_grad = nodes_[table].needs_grad;
    n.value = Matrix(ids.size(), t.cols());
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) n.value.at(i, j) = t.at(ids[i], j);
    n.ids = std::move(ids);
    return push(std::move(n));
}

NodeId Tape::slice_cols(NodeId a, std::size_t start, std::size_t count) {
    const Matrix& x = nodes_[a].value;
    if (start + count > x.cols())
        throw std::invalid_argument("slice_cols: range out of bounds");
    Node n;
    n.op = Op::SliceCols;
    n.inputs = {a};
    n.needs_grad = nodes_[a].needs_grad;
    n.a = start;
    n.b = count;
    n.value = Matrix(x.rows(), count);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) n.value.at(i, j) = x.at(i, start + j);
    return push(std::move(n));
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t rows = nodes_[parts[0]].value.rows();
    std::size_t cols = 0;
    for (NodeId p : parts) {
        if (nodes_[p].value.rows() != rows)
            throw std::invalid_argument("concat_cols: row mismatch");
        cols += nodes_[p].value.cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.inputs = parts;
    for (NodeId p : parts) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
    n.value = Matrix(rows, cols);
    std::size_t off = 0;
    for (NodeId p : parts) {
        const Matrix& x = nodes_[p].value;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) n.value.at(i, off + j) = x.at(i, j);
        off += x.cols();
    }
    return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, std::size_t rows, std::size_t cols) {
    const Matrix& x = nodes_[a].value;
    if (rows * cols != x.size())
        throw std::invalid_argument("reshape: element count mismatch");
    Node n;
    n.op = Op::Reshape;
    n.inputs = {a};
    n.needs_grad = nodes_[a].needs_grad;
    n.a = rows;
    n.b = cols;
    n.value = Matrix(rows, cols, x.data());
    return push(std::move(n));
}

NodeId Tape::cross_entropy(NodeId logits, const std::vector<std::uint32_t>& targets,
                           const std::vector<bool>& mask) {
    const Matrix& z = nodes_[logits].value;
    if (targets.size() != z.rows() || mask.size() != z.rows())
        throw std::invalid_argument("cross_entropy: targets/mask length must equal logit rows");
    std::size_t live = 0;
    for (bool m : mask)
        if (m) ++live;
    if (live == 0) throw std::invalid_argument("cross_entropy: all positions masked");
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (mask[i] && targets[i] >= z.cols())
            throw std::invalid_argument("cross_entropy: target id out of vocabulary");
    Node n;
    n.op = Op::CrossEntropy;
    n.inputs = {logits};
    n.needs_grad = nodes_[logits].needs_grad;
    n.aux = hlab::softmax_rows(z);
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!mask[i]) continue;
        // recompute log-softmax directly for stability
        double mx = z.at(i, 0);
        for (std::size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z.at(i, j));
        double lse = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) lse += std::exp(z.at(i, j) - mx);
        loss -= (z.at(i, targets[i]) - mx - std::log(lse));
    }
    n.value = Matrix(1, 1);
    n.value[0] = loss / static_cast<double>(live);
    n.ids = targets;
    n.mask = mask;
    return push(std::move(n));
}

const Matrix& Tape::grad_for(const Matrix* leaf) const {
    auto it = grads_.find(leaf);
    if (it == grads_.end())
        throw std::invalid_argument("Tape::grad_for: no gradient recorded for leaf");
    return it->second;
}

void Tape::backward(NodeId loss) {
    const Node& ln = node(loss);
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + ln.value.shape_str());
    grads_.clear();
    // every trainable leaf gets a zero-initialized entry
    for (const Node& n : nodes_)
        if (n.op == Op::Leaf && n.trainable) grads_.emplace(n.src, Matrix(n.value.rows(), n.value.cols()));

    std::vector<Matrix> g(nodes_.size());
    std::vector<bool> has(nodes_.size(), false);
    g[loss] = Matrix(1, 1, {1.0});
    has[loss] = true;

    auto accum = [&](NodeId id, const Matrix& d) {
        if (!nodes_[id].needs_grad) return;
        if (!has[id]) {
            g[id] = d;
            has[id] = true;
        } else {
            for (std::size_t i = 0; i < d.size(); ++i) g[id][i] += d[i];
        }
    };

    for (NodeId id = loss; id >= 0; --id) {
        if (!has[id] || !nodes_[id].needs_grad) continue;
        const Node& n = nodes_[id];
        const Matrix& d = g[id];
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Constant:
                break;
            case Op::Matmul: {
                const Matrix& a = nodes_[n.inputs[0]].value;
                const Matrix& b = nodes_[n.inputs[1]].value;
                if (nodes_[n.inputs[0]].needs_grad) accum(n.inputs[0], hlab::matmul_nt(d, b));
                if (nodes_[n.inputs[1]].needs_grad) accum(n.inputs[1], hlab::matmul_tn(a, d));
                break;
            }
            case Op::MatmulNT: {
                // C = A B^T: dA = dC B, dB = dC^T A
                const Matrix& a = nodes_[n.inputs[0]].value;
                const Matrix& b = nodes_[n.inputs[1]].value;
                if (nodes_[n.inputs[0]].needs_grad) accum(n.inputs[0], hlab::matmul(d, b));
                if (nodes_[n.inputs[1]].needs_grad) accum(n.inputs[1], hlab::matmul_tn(d, a));
                break;
            }
            case Op::Add:
                accum(n.inputs[0], d);
                accum(n.inputs[1], d);
                break;
            case Op::Scale:
                accum(n.inputs[0], hlab::scale(d, n.scalar));
                break;
            case Op::Relu: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                Matrix dx = d;
                for (std::size_t i = 0; i < dx.size(); ++i)
                    if (x[i] <= 0.0) dx[i] = 0.0;
                accum(n.inputs[0], dx);
                break;
            }
            case Op::Gelu: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                Matrix dx = d;
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= gelu_grad(x[i]);
                accum(n.inputs[0], dx);
                break;
            }
            case Op::SoftmaxRows: {
                const Matrix& y = n.value;
                Matrix dx(y.rows(), y.cols());
                for (std::size_t i = 0; i < y.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < y.cols(); ++j) dot += d.at(i, j) * y.at(i, j);
                    for (std::size_t j = 0; j < y.cols(); ++j)
                        dx.at(i, j) = y.at(i, j) * (d.at(i, j) - dot);
                }
                accum(n.inputs[0], dx);
                break;
            }
            case Op::LayerNormRows: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                const Matrix& gain = nodes_[n.inputs[1]].value;
                const double eps = n.scalar;
                const double ncols = static_cast<double>(x.cols());
                Matrix dx(x.rows(), x.cols());
                Matrix dgain(1, x.cols());
                Matrix dbias(1, x.cols());
                for (std::size_t i = 0; i < x.rows(); ++i) {
                    double mean = 0.0;
                    for (std::size_t j = 0; j < x.cols(); ++j) mean += x.at(i, j);
                    mean /= ncols;
                    double var = 0.0;
                    for (std::size_t j = 0; j < x.cols(); ++j) {
                        const double dxm = x.at(i, j) - mean;
                        var += dxm * dxm;
                    }
                    var /= ncols;
                    const double inv = 1.0 / std::sqrt(var + eps);
                    double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat*xhat)
                    std::vector<double> xhat(x.cols()), dxhat(x.cols());
                    for (std::size_t j = 0; j < x.cols(); ++j) {
                        xhat[j] = (x.at(i, j) - mean) * inv;
                        dxhat[j] = d.at(i, j) * gain[j];
                        dgain[j] += d.at(i, j) * xhat[j];
                        dbias[j] += d.at(i, j);
                        m1 += dxhat[j];
                        m2 += dxhat[j] * xhat[j];
                    }
                    m1 /= ncols;
                    m2 /= ncols;
                    for (std::size_t j = 0; j < x.cols(); ++j)
                        dx.at(i, j) = inv * (dxhat[j] - m1 - xhat[j] * m2);
                }
                accum(n.inputs[0], dx);
                if (nodes_[n.inputs[1]].needs_grad) accum(n.inputs[1], dgain);
                if (nodes_[n.inputs[2]].needs_grad) accum(n.inputs[2], dbias);
                break;
            }
            case Op::MeanPoolRows: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                Matrix dx(x.rows(), x.cols());
                const double inv = 1.0 / static_cast<double>(x.rows());
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j) dx.at(i, j) = d[j] * inv;
                accum(n.inputs[0], dx);
                break;
            }
            case Op::EmbeddingLookup: {
                const Matrix& t = nodes_[n.inputs[0]].value;
                Matrix dt(t.rows(), t.cols());
                for (std::size_t i = 0; i < n.ids.size(); ++i)
                    for (std::size_t j = 0; j < t.cols(); ++j)
                        dt.at(n.ids[i], j) += d.at(i, j);
                accum(n.inputs[0], dt);
                break;
            }
            case Op::SliceCols: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                Matrix dx(x.rows(), x.cols());
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < n.b; ++j) dx.at(i, n.a + j) = d.at(i, j);
                accum(n.inputs[0], dx);
                break;
            }
            case Op::ConcatCols: {
                std::size_t off = 0;
                for (NodeId p : n.inputs) {
                    const Matrix& x = nodes_[p].value;
                    if (nodes_[p].needs_grad) {
                        Matrix dp(x.rows(), x.cols());
                        for (std::size_t i = 0; i < x.rows(); ++i)
                            for (std::size_t j = 0; j < x.cols(); ++j)
                                dp.at(i, j) = d.at(i, off + j);
                        accum(p, dp);
                    }
                    off += x.cols();
                }
                break;
            }
            case Op::Reshape: {
                const Matrix& x = nodes_[n.inputs[0]].value;
                accum(n.inputs[0], Matrix(x.rows(), x.cols(), d.data()));
                break;
            }
            case Op::CrossEntropy: {
                const Matrix& p = n.aux;
                std::size_t live = 0;
                for (bool m : n.mask)
                    if (m) ++live;
                const double up = d[0] / static_cast<double>(live);
                Matrix dz(p.rows(), p.cols());
                for (std::size_t i = 0; i < p.rows(); ++i) {
                    if (!n.mask[i]) continue;
                    for (std::size_t j = 0; j < p.cols(); ++j) dz.at(i, j) = up * p.at(i, j);
                    dz.at(i, n.ids[i]) -= up;
                }
                accum(n.inputs[0], dz);
                break;
            }
        }
        if (n.op != Op::Leaf) {
            g[id] = Matrix();  // free as we go
        }
    }

    // fold leaf grads into the per-source map (a source may back several leaves)
    for (NodeId id = 0; id <= loss; ++id) {
        const Node& n = nodes_[id];
        if (n.op != Op::Leaf || !n.trainable || !has[id]) continue;
        Matrix& dst = grads_[n.src];
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[id][i];
    }
}

}  // namespace hlab
