#include "core/tape.hpp"

#include <cmath>

#include "core/error.hpp"

namespace oal {

namespace {

[[noreturn]] void shape_error(OpKind op, const DenseArray& a, const DenseArray& b) {
    fail(ErrorKind::invalid_argument,
         std::string(op_name(op)) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
             " do not conform");
}

[[noreturn]] void shape_error(OpKind op, const DenseArray& a) {
    fail(ErrorKind::invalid_argument,
         std::string(op_name(op)) + ": shape " + a.shape_str() + " not supported");
}

bool is_matrix(const DenseArray& a) { return a.rank() == 2; }

}  // namespace

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Constant: return "constant";
        case OpKind::Leaf: return "leaf";
        case OpKind::Add: return "add";
        case OpKind::Subtract: return "subtract";
        case OpKind::Multiply: return "elementwise-multiply";
        case OpKind::MatMul: return "matrix-multiply";
        case OpKind::BroadcastAddRow: return "broadcast-add-row";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::Log: return "natural-log";
        case OpKind::Square: return "square";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::Scale: return "scalar-scale";
        case OpKind::ConcatCols: return "concatenate-columns";
        case OpKind::Clip: return "clip";
        case OpKind::Divide: return "divide";
    }
    return "unknown";
}

int Tape::append(TapeNode node) {
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_index(int id, const char* what) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) {
        fail(ErrorKind::invalid_argument,
             std::string(what) + ": node id " + std::to_string(id) + " not on tape");
    }
}

int Tape::constant(DenseArray value) {
    return append({OpKind::Constant, -1, -1, 0.0, 0.0, std::move(value)});
}

int Tape::leaf(DenseArray value) {
    int id = append({OpKind::Leaf, -1, -1, 0.0, 0.0, std::move(value)});
    leaves_.push_back(id);
    return id;
}

const DenseArray& Tape::value(int id) const {
    check_index(id, "value");
    return nodes_[id].value;
}

double Tape::scalar_value(int id) const {
    const DenseArray& v = value(id);
    if (v.size() != 1) {
        fail(ErrorKind::invalid_argument,
             "scalar_value: node has shape " + v.shape_str());
    }
    return v[0];
}

bool Tape::is_leaf(int id) const {
    check_index(id, "is_leaf");
    return nodes_[id].kind == OpKind::Leaf;
}

int Tape::forward(OpKind op, std::span<const int> inputs, double attr0, double attr1) {
    for (int id : inputs) check_index(id, op_name(op));

    auto unary = [&]() -> const DenseArray& {
        if (inputs.size() != 1) {
            fail(ErrorKind::invalid_argument,
                 std::string(op_name(op)) + ": expected 1 input, got " +
                     std::to_string(inputs.size()));
        }
        return nodes_[inputs[0]].value;
    };
    auto binary = [&]() -> std::pair<const DenseArray&, const DenseArray&> {
        if (inputs.size() != 2) {
            fail(ErrorKind::invalid_argument,
                 std::string(op_name(op)) + ": expected 2 inputs, got " +
                     std::to_string(inputs.size()));
        }
        return {nodes_[inputs[0]].value, nodes_[inputs[1]].value};
    };

    TapeNode node;
    node.kind = op;
    node.attr0 = attr0;
    node.attr1 = attr1;
    if (!inputs.empty()) node.in0 = inputs[0];
    if (inputs.size() > 1) node.in1 = inputs[1];

    switch (op) {
        case OpKind::Constant:
        case OpKind::Leaf:
            fail(ErrorKind::invalid_argument,
                 "forward: use constant()/leaf() to create value nodes");

        case OpKind::Add:
        case OpKind::Subtract:
        case OpKind::Multiply:
        case OpKind::Divide: {
            auto [a, b] = binary();
            if (!a.same_shape(b)) shape_error(op, a, b);
            DenseArray out = DenseArray::zeros(a.shape());
            for (std::size_t i = 0; i < a.size(); ++i) {
                switch (op) {
                    case OpKind::Add: out[i] = a[i] + b[i]; break;
                    case OpKind::Subtract: out[i] = a[i] - b[i]; break;
                    case OpKind::Multiply: out[i] = a[i] * b[i]; break;
                    default: out[i] = a[i] / b[i]; break;
                }
            }
            node.value = std::move(out);
            break;
        }

        case OpKind::MatMul: {
            auto [a, b] = binary();
            if (!is_matrix(a) || !is_matrix(b) || a.cols() != b.rows()) shape_error(op, a, b);
            const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
            DenseArray out = DenseArray::zeros({n, m});
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double av = a[i * k + p];
                    if (av == 0.0) continue;
                    const double* brow = b.data().data() + p * m;
                    double* orow = out.data().data() + i * m;
                    for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
                }
            }
            node.value = std::move(out);
            break;
        }

        case OpKind::BroadcastAddRow: {
            auto [x, r] = binary();
            if (!is_matrix(x) || !is_matrix(r) || r.rows() != 1 || r.cols() != x.cols()) {
                shape_error(op, x, r);
            }
            DenseArray out = DenseArray::zeros(x.shape());
            const std::size_t n = x.rows(), m = x.cols();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x[i * m + j] + r[j];
            node.value = std::move(out);
            break;
        }

        case OpKind::Sigmoid:
        case OpKind::Tanh:
        case OpKind::Relu:
        case OpKind::Log:
        case OpKind::Square:
        case OpKind::Clip: {
            const DenseArray& x = unary();
            DenseArray out = DenseArray::zeros(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) {
                double v = x[i];
                switch (op) {
                    case OpKind::Sigmoid: out[i] = 1.0 / (1.0 + std::exp(-v)); break;
                    case OpKind::Tanh: out[i] = std::tanh(v); break;
                    case OpKind::Relu: out[i] = v > 0.0 ? v : 0.0; break;
                    case OpKind::Log: out[i] = std::log(v); break;
                    case OpKind::Square: out[i] = v * v; break;
                    default: out[i] = v < attr0 ? attr0 : (v > attr1 ? attr1 : v); break;
                }
            }
            node.value = std::move(out);
            break;
        }

        case OpKind::Sum:
        case OpKind::Mean: {
            const DenseArray& x = unary();
            if (x.size() == 0) shape_error(op, x);
            double acc = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
            if (op == OpKind::Mean) acc /= static_cast<double>(x.size());
            node.value = DenseArray::scalar(acc);
            break;
        }

        case OpKind::Scale: {
            const DenseArray& x = unary();
            DenseArray out = DenseArray::zeros(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * attr0;
            node.value = std::move(out);
            break;
        }

        case OpKind::ConcatCols: {
            auto [a, b] = binary();
            if (!is_matrix(a) || !is_matrix(b) || a.rows() != b.rows()) shape_error(op, a, b);
            const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
            DenseArray out = DenseArray::zeros({n, ca + cb});
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a[i * ca + j];
                for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b[i * cb + j];
            }
            node.value = std::move(out);
            break;
        }
    }

    return append(std::move(node));
}

int Tape::add(int a, int b) { int in[] = {a, b}; return forward(OpKind::Add, in); }
int Tape::subtract(int a, int b) { int in[] = {a, b}; return forward(OpKind::Subtract, in); }
int Tape::multiply(int a, int b) { int in[] = {a, b}; return forward(OpKind::Multiply, in); }
int Tape::matmul(int a, int b) { int in[] = {a, b}; return forward(OpKind::MatMul, in); }
int Tape::broadcast_add_row(int x, int row) {
    int in[] = {x, row};
    return forward(OpKind::BroadcastAddRow, in);
}
int Tape::sigmoid(int x) { int in[] = {x}; return forward(OpKind::Sigmoid, in); }
int Tape::tanh(int x) { int in[] = {x}; return forward(OpKind::Tanh, in); }
int Tape::relu(int x) { int in[] = {x}; return forward(OpKind::Relu, in); }
int Tape::log(int x) { int in[] = {x}; return forward(OpKind::Log, in); }
int Tape::square(int x) { int in[] = {x}; return forward(OpKind::Square, in); }
int Tape::sum(int x) { int in[] = {x}; return forward(OpKind::Sum, in); }
int Tape::mean(int x) { int in[] = {x}; return forward(OpKind::Mean, in); }
int Tape::scale(int x, double factor) {
    int in[] = {x};
    return forward(OpKind::Scale, in, factor);
}
int Tape::concat_cols(int a, int b) { int in[] = {a, b}; return forward(OpKind::ConcatCols, in); }
int Tape::clip(int x, double lo, double hi) {
    int in[] = {x};
    return forward(OpKind::Clip, in, lo, hi);
}
int Tape::divide(int a, int b) { int in[] = {a, b}; return forward(OpKind::Divide, in); }

std::map<int, DenseArray> Tape::backward(int root) const {
    check_index(root, "backward");
    if (nodes_[root].value.size() != 1) {
        fail(ErrorKind::invalid_argument,
             "backward: root must be scalar-shaped, got " + nodes_[root].value.shape_str());
    }

    // needs_grad[i]: node i is a leaf or feeds one through its inputs.
    // Gradients are only materialized for such nodes; constants that never
    // reach a leaf (one-hot matrices, labels, ...) cost nothing.
    std::vector<char> needs_grad(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const TapeNode& n = nodes_[i];
        if (n.kind == OpKind::Leaf) {
            needs_grad[i] = 1;
            continue;
        }
        if ((n.in0 >= 0 && needs_grad[n.in0]) || (n.in1 >= 0 && needs_grad[n.in1])) {
            needs_grad[i] = 1;
        }
    }

    std::vector<DenseArray> grads(nodes_.size());
    auto accum = [&](int id, std::size_t flat_index, double v) {
        if (!needs_grad[id]) return;
        DenseArray& g = grads[id];
        if (g.empty()) g = DenseArray::zeros(nodes_[id].value.shape());
        g[flat_index] += v;
    };
    auto ensure = [&](int id) -> DenseArray* {
        if (!needs_grad[id]) return nullptr;
        DenseArray& g = grads[id];
        if (g.empty()) g = DenseArray::zeros(nodes_[id].value.shape());
        return &g;
    };

    if (needs_grad[root]) {
        grads[root] = DenseArray::zeros(nodes_[root].value.shape());
        grads[root][0] = 1.0;
    }

    for (int id = root; id >= 0; --id) {
        const TapeNode& n = nodes_[id];
        if (grads[id].empty()) continue;
        const DenseArray& g = grads[id];
        const DenseArray& out = n.value;
        switch (n.kind) {
            case OpKind::Constant:
            case OpKind::Leaf:
                break;

            case OpKind::Add:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    accum(n.in0, i, g[i]);
                    accum(n.in1, i, g[i]);
                }
                break;

            case OpKind::Subtract:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    accum(n.in0, i, g[i]);
                    accum(n.in1, i, -g[i]);
                }
                break;

            case OpKind::Multiply: {
                const DenseArray& a = nodes_[n.in0].value;
                const DenseArray& b = nodes_[n.in1].value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    accum(n.in0, i, g[i] * b[i]);
                    accum(n.in1, i, g[i] * a[i]);
                }
                break;
            }

            case OpKind::Divide: {
                const DenseArray& a = nodes_[n.in0].value;
                const DenseArray& b = nodes_[n.in1].value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    accum(n.in0, i, g[i] / b[i]);
                    accum(n.in1, i, -g[i] * a[i] / (b[i] * b[i]));
                }
                break;
            }

            case OpKind::MatMul: {
                const DenseArray& a = nodes_[n.in0].value;
                const DenseArray& b = nodes_[n.in1].value;
                const std::size_t nr = a.rows(), kk = a.cols(), m = b.cols();
                if (DenseArray* da = ensure(n.in0)) {
                    // dA = g . B^T
                    for (std::size_t i = 0; i < nr; ++i)
                        for (std::size_t p = 0; p < kk; ++p) {
                            double acc = 0.0;
                            const double* grow = g.data().data() + i * m;
                            const double* brow = b.data().data() + p * m;
                            for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                            (*da)[i * kk + p] += acc;
                        }
                }
                if (DenseArray* db = ensure(n.in1)) {
                    // dB = A^T . g
                    for (std::size_t i = 0; i < nr; ++i) {
                        const double* grow = g.data().data() + i * m;
                        for (std::size_t p = 0; p < kk; ++p) {
                            double av = a[i * kk + p];
                            if (av == 0.0) continue;
                            double* drow = db->data().data() + p * m;
                            for (std::size_t j = 0; j < m; ++j) drow[j] += av * grow[j];
                        }
                    }
                }
                break;
            }

            case OpKind::BroadcastAddRow: {
                const std::size_t nr = out.rows(), m = out.cols();
                for (std::size_t i = 0; i < nr; ++i)
                    for (std::size_t j = 0; j < m; ++j) {
                        accum(n.in0, i * m + j, g[i * m + j]);
                        accum(n.in1, j, g[i * m + j]);
                    }
                break;
            }

            case OpKind::Sigmoid:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    double s = out[i];
                    accum(n.in0, i, g[i] * s * (1.0 - s));
                }
                break;

            case OpKind::Tanh:
                for (std::size_t i = 0; i < g.size(); ++i) {
                    double t = out[i];
                    accum(n.in0, i, g[i] * (1.0 - t * t));
                }
                break;

            case OpKind::Relu: {
                const DenseArray& x = nodes_[n.in0].value;
                for (std::size_t i = 0; i < g.size(); ++i)
                    accum(n.in0, i, x[i] > 0.0 ? g[i] : 0.0);
                break;
            }

            case OpKind::Log: {
                const DenseArray& x = nodes_[n.in0].value;
                for (std::size_t i = 0; i < g.size(); ++i) accum(n.in0, i, g[i] / x[i]);
                break;
            }

            case OpKind::Square: {
                const DenseArray& x = nodes_[n.in0].value;
                for (std::size_t i = 0; i < g.size(); ++i) accum(n.in0, i, 2.0 * x[i] * g[i]);
                break;
            }

            case OpKind::Sum: {
                const DenseArray& x = nodes_[n.in0].value;
                for (std::size_t i = 0; i < x.size(); ++i) accum(n.in0, i, g[0]);
                break;
            }

            case OpKind::Mean: {
                const DenseArray& x = nodes_[n.in0].value;
                double v = g[0] / static_cast<double>(x.size());
                for (std::size_t i = 0; i < x.size(); ++i) accum(n.in0, i, v);
                break;
            }

            case OpKind::Scale:
                for (std::size_t i = 0; i < g.size(); ++i) accum(n.in0, i, g[i] * n.attr0);
                break;

            case OpKind::ConcatCols: {
                const std::size_t nr = out.rows();
                const std::size_t ca = nodes_[n.in0].value.cols();
                const std::size_t cb = nodes_[n.in1].value.cols();
                for (std::size_t i = 0; i < nr; ++i) {
                    for (std::size_t j = 0; j < ca; ++j)
                        accum(n.in0, i * ca + j, g[i * (ca + cb) + j]);
                    for (std::size_t j = 0; j < cb; ++j)
                        accum(n.in1, i * cb + j, g[i * (ca + cb) + ca + j]);
                }
                break;
            }

            case OpKind::Clip: {
                const DenseArray& x = nodes_[n.in0].value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (x[i] >= n.attr0 && x[i] <= n.attr1) accum(n.in0, i, g[i]);
                }
                break;
            }
        }
        // This node's consumers are all behind us now; free its gradient
        // unless it is a leaf we must report.
        if (n.kind != OpKind::Leaf) grads[id] = DenseArray();
    }

    std::map<int, DenseArray> out;
    for (int leaf_id : leaves_) {
        if (grads[leaf_id].empty()) {
            out[leaf_id] = DenseArray::zeros(nodes_[leaf_id].value.shape());
        } else {
            out[leaf_id] = std::move(grads[leaf_id]);
        }
    }
    return out;
}

DenseArray finite_difference_gradient(const std::function<double(const DenseArray&)>& f,
                                      const DenseArray& x, double h) {
    if (!(h > 0.0)) {
        fail(ErrorKind::invalid_argument, "finite_difference_gradient: step size must be > 0");
    }
    DenseArray grad = DenseArray::zeros(x.shape());
    DenseArray probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        double fp = f(probe);
        probe[i] = x[i] - h;
        double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            fail(ErrorKind::numeric,
                 "finite_difference_gradient: non-finite value at coordinate " +
                     std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace oal
