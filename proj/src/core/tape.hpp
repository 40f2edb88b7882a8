#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "core/dense_array.hpp"

namespace oal {

// Op vocabulary of the tape. The set is intentionally small: exactly what the
// encoder, the losses and the regularizer need, plus Clip (log safety in the
// cross-entropy) and Divide (the Rayleigh quotient).
enum class OpKind {
    Constant,
    Leaf,
    Add,
    Subtract,
    Multiply,         // elementwise
    MatMul,
    BroadcastAddRow,  // (N x k) + (1 x k), row added to every row
    Sigmoid,
    Tanh,
    Relu,
    Log,              // natural log, elementwise
    Square,
    Sum,              // -> scalar
    Mean,             // -> scalar
    Scale,            // x * attr0
    ConcatCols,       // [A | B] along columns
    Clip,             // clamp into [attr0, attr1]; unit subgradient inside
    Divide,           // elementwise a / b
};

const char* op_name(OpKind kind);

struct TapeNode {
    OpKind kind;
    int in0 = -1;
    int in1 = -1;
    double attr0 = 0.0;
    double attr1 = 0.0;
    DenseArray value;
};

// Define-by-run reverse-mode tape over DenseArray values. Nodes are appended
// in topological order (inputs always precede consumers) and values are
// computed eagerly, so a tape is also a record of the forward pass. A tape is
// confined to one thread; node values are immutable once written.
class Tape {
public:
    // Records a value that gradients may flow through but that is not
    // reported by backward().
    int constant(DenseArray value);

    // Records a differentiation target (a parameter). backward() reports a
    // gradient for every leaf, zero-filled if the root does not reach it.
    int leaf(DenseArray value);

    // Generic entry point; inputs must already live on this tape and shapes
    // must conform for the op. Shape violations raise descriptive errors
    // naming the op and the offending shapes.
    int forward(OpKind op, std::span<const int> inputs, double attr0 = 0.0,
                double attr1 = 0.0);

    int add(int a, int b);
    int subtract(int a, int b);
    int multiply(int a, int b);
    int matmul(int a, int b);
    int broadcast_add_row(int x, int row);
    int sigmoid(int x);
    int tanh(int x);
    int relu(int x);
    int log(int x);
    int square(int x);
    int sum(int x);
    int mean(int x);
    int scale(int x, double factor);
    int concat_cols(int a, int b);
    int clip(int x, double lo, double hi);
    int divide(int a, int b);

    const DenseArray& value(int id) const;
    double scalar_value(int id) const;
    bool is_leaf(int id) const;
    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<int>& leaves() const { return leaves_; }

    // Reverse pass from a scalar-shaped root. Visits each node at most once;
    // gradients are accumulated only along paths that can reach a leaf, and
    // intermediate gradients are dropped as soon as their consumers are done.
    // Returns dRoot/dLeaf for every leaf on the tape.
    std::map<int, DenseArray> backward(int root) const;

private:
    int append(TapeNode node);
    void check_index(int id, const char* what) const;

    std::vector<TapeNode> nodes_;
    std::vector<int> leaves_;
};

// Central-difference gradient oracle: (f(x + h e_i) - f(x - h e_i)) / (2h)
// per coordinate. Independent of the tape; used to check backward().
DenseArray finite_difference_gradient(const std::function<double(const DenseArray&)>& f,
                                      const DenseArray& x, double h);

}  // namespace oal
