// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "hlab/matrix.hpp"

namespace hlab {

using NodeId = int;

/// Reverse-mode autodiff over recorded primitive ops. A tape is built fresh
/// for each utterance, consumed by one backward() call, and discarded.
/// Trainable leaves are registered by pointer to their backing Matrix;
/// gradients accumulate per leaf and are zero-initialized each backward pass.
/// Frozen leaves participate in the forward pass but never receive a
/// gradient entry.
class Tape {
public:
    /// Register a leaf backed by external storage. The Matrix must outlive
    /// the tape. Trainable leaves appear in the gradient map after backward.
    NodeId leaf(const Matrix* src, bool trainable);

    /// Tape-owned constant (masks, precomputed speaker vectors, inputs).
    NodeId constant(Matrix value);

    NodeId matmul(NodeId a, NodeId b);
    /// a * b^T; the workhorse for y = x * W^T with out-by-in weights.
    NodeId matmul_nt(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId relu(NodeId a);
    NodeId gelu(NodeId a);
    NodeId softmax_rows(NodeId a);
    NodeId layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps);
    NodeId mean_pool_rows(NodeId a);
    NodeId embedding_lookup(NodeId table, std::vector<std::uint32_t> ids);
    NodeId slice_cols(NodeId a, std::size_t start, std::size_t count);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId reshape(NodeId a, std::size_t rows, std::size_t cols);

    /// Mean negative log-likelihood of targets under row-softmax of logits,
    /// restricted to unmasked positions. Scalar (1x1) output.
    NodeId cross_entropy(NodeId logits, const std::vector<std::uint32_t>& targets,
                         const std::vector<bool>& mask);

    const Matrix& value(NodeId id) const { return nodes_[id].value; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Reverse pass from a scalar loss. Every trainable leaf gets an entry
    /// in the gradient map (exactly zero when disconnected from the loss).
    void backward(NodeId loss);

    const std::unordered_map<const Matrix*, Matrix>& grads() const { return grads_; }
    const Matrix& grad_for(const Matrix* leaf) const;

private:
    enum class Op {
        Leaf, Constant, Matmul, MatmulNT, Add, Scale, Relu, Gelu,
        SoftmaxRows, LayerNormRows, MeanPoolRows, EmbeddingLookup,
        SliceCols, ConcatCols, Reshape, CrossEntropy,
    };

    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        Matrix value;
        bool needs_grad = false;
        const Matrix* src = nullptr;   // Leaf only
        bool trainable = false;        // Leaf only
        double scalar = 0.0;           // Scale: factor; LayerNormRows: eps
        std::vector<std::uint32_t> ids;  // EmbeddingLookup / CrossEntropy targets
        std::vector<bool> mask;          // CrossEntropy
        std::size_t a = 0, b = 0;        // SliceCols: start,count; Reshape: rows,cols
        Matrix aux;                      // CrossEntropy: probs; SoftmaxRows reuses value
    };

    NodeId push(Node n);
    const Node& node(NodeId id) const;

    std::vector<Node> nodes_;
    std::unordered_map<const Matrix*, Matrix> grads_;
};

}  // namespace hlab
