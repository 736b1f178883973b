#pragma once

#include <optional>
#include <vector>

#include "sdfgan/tensor.hpp"

namespace sdfgan {

// Reverse-mode differentiation over an append-only operation record.
//
// Nodes are evaluated eagerly as they are recorded, so forward values are
// always available, and the record is topologically ordered by construction.
// backward() emits the adjoint computation as further nodes on the same tape;
// every backward rule is expressed in terms of the primitives below, which
// makes gradients themselves differentiable (as needed for the gradient
// penalty, where we differentiate a parameter loss that contains an input
// gradient). Non-smooth primitives (ReLU, leaky ReLU, |x|, clamp, max) freeze
// their switching pattern from the forward pass, so second-order sweeps hold
// the argmax/sign structure fixed.
//
// A tape and its intermediates are confined to one thread; independent tapes
// may run in parallel.

enum class OpKind {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Neg,
    Scale,       // x * c0
    AddScalar,   // x + c0
    Matmul,      // [m,k] x [k,n]
    Transpose,   // [m,n] -> [n,m]
    Relu,
    LeakyRelu,   // slope in c0
    Abs,
    Clamp,       // [c0, c1], frozen pass-through mask
    Sqrt,
    Reciprocal,
    Sum,             // any -> [1]
    BroadcastFull,   // [1] -> aux shape
    SumRows,         // [m,n] -> [n]
    BroadcastRows,   // [n] -> [i0,n]
    SumCols,         // [m,n] -> [m]
    BroadcastCols,   // [m] -> [m,i0]
    MaxOverRows,     // [m,n] -> [n], frozen argmax row per column
    RowScatter,      // [n] -> [i0,n] placing v[j] at (aux[j], j)
    RowGatherIdx,    // [m,n] -> [n] picking (aux[j], j)
    ConcatRows,      // [m,n] ++ [k,n] -> [m+k,n]
    SliceRows,       // rows [i0, i0+i1)
    PadRows,         // [k,n] -> [i1,n] zeros outside rows [i0, i0+k)
    ConcatCols,
    SliceCols,
    PadCols,
    GatherRows,      // [m,n] -> [|aux|,n] rows aux[*] (indices need not be unique)
    ScatterRowsAdd,  // [k,n] -> [i0,n] adding row j at aux[j]
    Reshape,
    Conv3d,           // x [Ci,D,H,W], w [Co,Ci,k,k,k]; stride i0, pad i1
    Conv3dInputGrad,  // g [Co,D',H',W'], w -> dx [Ci,D,H,W]; D,H,W in i2..; stride i0, pad i1
    Conv3dWeightGrad, // x [Ci,D,H,W], g [Co,D',H',W'] -> dw; kernel size i2
    AddChannelBias,   // x [C,D,H,W] + b [C]
    ChannelSum,       // [C,D,H,W] -> [C]
    BroadcastChannel, // [C] -> [C,i0,i1,i2]
    AvgPool2x,        // [C,D,H,W] -> [C,D/2,H/2,W/2]
    AvgUnpool2x,
};

const char* op_name(OpKind k);

struct Node {
    OpKind kind;
    int a = -1;  // first input id
    int b = -1;  // second input id
    Tensor value;
    double c0 = 0.0, c1 = 0.0;
    int i0 = 0, i1 = 0, i2 = 0, i3 = 0, i4 = 0;
    std::vector<int> aux;  // frozen indices or target shape
    bool needs_grad = false;
};

class Tape {
public:
    // --- leaves -----------------------------------------------------------
    int leaf(Tensor v);      // differentiable input / parameter
    int constant(Tensor v);  // value with no gradient

    // --- elementwise ------------------------------------------------------
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int neg(int a);
    int scale(int a, double c);
    int add_scalar(int a, double c);
    int relu(int a);
    int leaky_relu(int a, double slope);
    int abs(int a);
    int clamp(int a, double lo, double hi);
    int sqrt(int a);
    int reciprocal(int a);

    // --- linear algebra ----------------------------------------------------
    int matmul(int a, int b);
    int transpose(int a);

    // --- reductions / broadcasts -------------------------------------------
    int sum(int a);
    int broadcast_full(int a, std::vector<int> shape);
    int sum_rows(int a);
    int broadcast_rows(int a, int m);
    int sum_cols(int a);
    int broadcast_cols(int a, int n);
    int max_over_rows(int a);

    // --- structure ----------------------------------------------------------
    int concat_rows(int a, int b);
    int slice_rows(int a, int start, int len);
    int concat_cols(int a, int b);
    int slice_cols(int a, int start, int len);
    int gather_rows(int a, std::vector<int> idx);
    int reshape(int a, std::vector<int> shape);

    // --- convolution ---------------------------------------------------------
    int conv3d(int x, int w, int stride, int pad);
    int add_channel_bias(int x, int b);
    int avg_pool2x(int x);

    // --- composites (built from primitives) ----------------------------------
    int mean(int a);
    int square(int a) { return mul(a, a); }
    // sqrt(sum(x^2) + eps); eps keeps the derivative finite at zero vectors.
    int norm(int a, double eps = 1e-12);
    // Per-row normalization to zero mean / unit variance, then affine with
    // per-feature gain and bias. Zero-variance rows map to zero (eps inside
    // the square root).
    int layer_norm(int x, int gain, int bias, double eps = 1e-5);
    int linear(int x, int w, int b);  // matmul + row-broadcast bias

    // --- execution ------------------------------------------------------------
    const Tensor& val(int id) const { return nodes_[check_id(id)].value; }
    const Node& node(int id) const { return nodes_[check_id(id)]; }
    int size() const { return static_cast<int>(nodes_.size()); }
    bool empty() const { return nodes_.empty(); }

    // Reverse sweep from `output`. Returns one adjoint node id per node
    // present at call time (-1 when no gradient flows). `seed` must match the
    // output shape; by default a scalar output is seeded with 1. When
    // `targets` is given, only adjoints feeding those nodes are materialized,
    // which skips e.g. weight-gradient work when only an input gradient is
    // needed.
    std::vector<int> backward(int output, std::optional<Tensor> seed = std::nullopt,
                              const std::vector<int>* targets = nullptr);

private:
    std::vector<Node> nodes_;

    int check_id(int id) const;
    int push(Node n);
    int unary(OpKind k, int a, double c0 = 0.0, double c1 = 0.0);
    int binary(OpKind k, int a, int b);
    int row_scatter(int v, const std::vector<int>& idx, int m);
    int row_gather_idx(int a, const std::vector<int>& idx);
    int pad_rows(int a, int start, int total);
    int pad_cols(int a, int start, int total);
    int scatter_rows_add(int a, const std::vector<int>& idx, int m);
    int conv3d_input_grad(int g, int w, int stride, int pad, int D, int H, int W);
    int conv3d_weight_grad(int x, int g, int stride, int pad, int k);
    int channel_sum(int a);
    int broadcast_channel(int a, int d, int h, int w);
    int avg_unpool2x(int a);

    void eval(Node& n) const;
    void accumulate(std::vector<int>& adj, int target, int grad_id);
    void emit_vjps(int id, int gid, std::vector<int>& adj, const std::vector<char>& wanted);
};

}  // namespace sdfgan
